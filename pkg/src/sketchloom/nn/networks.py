"""U-Net generator and PatchGAN discriminator builders."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    EVAL,
    Conv2d,
    ConvTranspose2d,
    Dropout,
    InstanceNorm,
    LeakyReLU,
    Mode,
    ReLU,
    Sequential,
    ShapeError,
    StateError,
    Tanh,
    _ConvBase,
)

UNET = "unet_generator"
PATCHGAN = "patchgan_discriminator"


@dataclass(frozen=True)
class NetworkSpec:
    kind: str
    in_channels: int
    out_channels: int
    base_width: int = 64
    depth: int | None = None
    spectral_norm: bool = False
    dropout_p: float = 0.5
    init_seed: int = 0
    n_power_iterations: int = 1

    def __post_init__(self):
        if self.kind not in (UNET, PATCHGAN):
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.depth is None:
            object.__setattr__(self, "depth", 8 if self.kind == UNET else 3)
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(**d)


def unet_width(base: int, level: int) -> int:
    """Channel width of encoder level ``level`` (1-based), capped at 8x base."""
    return base * min(2 ** (level - 1), 8)


class Network:
    """A named collection of blocks with forward/backward over the whole graph."""

    spec: NetworkSpec

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.frozen: set[str] = set()

    def blocks(self) -> list[tuple[str, Sequential]]:
        raise NotImplementedError

    def param_layers(self):
        for bname, block in self.blocks():
            for lname, layer in block.named_layers(f"{bname}."):
                if layer.params or layer.buffers:
                    yield lname, layer

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{k}": v for ln, layer in self.param_layers() for k, v in layer.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{k}": v for ln, layer in self.param_layers() for k, v in layer.grads.items()}

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{k}": v for ln, layer in self.param_layers() for k, v in layer.buffers.items()}

    def trainable_names(self) -> list[str]:
        return [n for n in self.named_parameters() if n not in self.frozen]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {**self.named_parameters(), **self.named_buffers()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        layers = dict(self.param_layers())
        expected = self.state_dict()
        missing = set(expected) - set(state)
        if missing:
            raise KeyError(f"state is missing tensors: {sorted(missing)[:5]}")
        for name, value in state.items():
            lname, key = name.rsplit(".", 1)
            if name not in expected:
                raise KeyError(f"unexpected tensor {name!r}")
            if tuple(value.shape) != tuple(expected[name].shape):
                raise ShapeError(f"{name}: stored shape {value.shape} != model shape {expected[name].shape}")
            store = layers[lname].params if key in layers[lname].params else layers[lname].buffers
            store[key] = np.array(value, dtype=expected[name].dtype)

    def zero_grad(self):
        for _, block in self.blocks():
            block.zero_grad()

    def astype(self, dtype) -> "Network":
        for _, block in self.blocks():
            block.astype(dtype)
        return self

    @property
    def dtype(self):
        return next(iter(self.named_parameters().values())).dtype

    def n_parameters(self) -> int:
        return sum(v.size for v in self.named_parameters().values())

    def __call__(self, x, mode: Mode = EVAL):
        return self.forward(x, mode)


class UNetGenerator(Network):
    """Encoder of stride-2 convs, decoder of transposed convs with mirror skips."""

    def __init__(self, spec: NetworkSpec, dtype=np.float32):
        super().__init__(spec)
        rng = np.random.default_rng([spec.init_seed, 0])
        d, b = spec.depth, spec.base_width
        widths = [unet_width(b, i) for i in range(1, d + 1)]
        self.encoder: list[Sequential] = []
        for i in range(d):
            cin = spec.in_channels if i == 0 else widths[i - 1]
            innermost = i == d - 1
            layers = [] if i == 0 else [LeakyReLU(0.2)]
            # a norm right after a conv makes its bias redundant
            with_norm = i > 0 and not innermost
            layers.append(Conv2d(cin, widths[i], 4, 2, 1, bias=not with_norm, rng=rng, dtype=dtype))
            if with_norm:
                layers.append(InstanceNorm())
            self.encoder.append(Sequential(*layers))
        # decoder[i] produces the activation at the resolution of encoder level i
        self.decoder: list[Sequential] = [None] * d
        for i in reversed(range(d)):
            innermost = i == d - 1
            cin = widths[i] if innermost else 2 * widths[i]
            if i == 0:
                layers = [ReLU(), ConvTranspose2d(cin, spec.out_channels, 4, 2, 1, rng=rng, dtype=dtype), Tanh()]
            else:
                layers = [ReLU(), ConvTranspose2d(cin, widths[i - 1], 4, 2, 1, bias=False, rng=rng, dtype=dtype), InstanceNorm()]
                # dropout on the three decoder blocks closest to the bottleneck
                if d - 1 - i < 3 and spec.dropout_p > 0:
                    layers.append(Dropout(spec.dropout_p))
            self.decoder[i] = Sequential(*layers)
        if spec.spectral_norm:
            sn_rng = np.random.default_rng([spec.init_seed, 2])
            for _, layer in self.param_layers():
                if isinstance(layer, _ConvBase):
                    layer.enable_spectral_norm(sn_rng, spec.n_power_iterations)
        self._skips = None

    def blocks(self):
        enc = [(f"enc{i}", blk) for i, blk in enumerate(self.encoder)]
        dec = [(f"dec{i}", blk) for i, blk in enumerate(self.decoder)]
        return enc + dec

    def check_input(self, x: np.ndarray):
        side = 2**self.spec.depth
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeError(f"generator expects (N, {self.spec.in_channels}, H, W), got {x.shape}")
        if x.shape[2] % side or x.shape[3] % side:
            raise ShapeError(f"generator input sides {x.shape[2:]} must be divisible by {side} (depth {self.spec.depth})")

    def forward(self, x, mode: Mode = EVAL):
        self.check_input(x)
        skips = []
        h = x
        for blk in self.encoder:
            h = blk.forward(h, mode)
            skips.append(h)
        d = self.spec.depth
        for i in reversed(range(d)):
            if i < d - 1:
                h = np.concatenate([skips[i], h], axis=1)
            h = self.decoder[i].forward(h, mode)
        self._skips = [s.shape[1] for s in skips]
        return h

    def backward(self, dy):
        if self._skips is None:
            raise StateError("generator backward called before forward")
        widths, self._skips = self._skips, None
        d = self.spec.depth
        dskip = [None] * d
        g = dy
        for i in range(d):
            g = self.decoder[i].backward(g)
            if i < d - 1:
                # decoder i consumed concat(skip_i, decoder_{i+1} output)
                dskip[i], g = g[:, : widths[i]], g[:, widths[i] :]
        for i in reversed(range(d)):
            if dskip[i] is not None:
                g = g + dskip[i]
            g = self.encoder[i].backward(g)
        return g


class PatchGANDiscriminator(Network):
    """Conditional discriminator on concat(sketch, image); raw score map out."""

    def __init__(self, spec: NetworkSpec, dtype=np.float32):
        super().__init__(spec)
        rng = np.random.default_rng([spec.init_seed, 1])
        b = spec.base_width
        layers = [Conv2d(spec.in_channels, b, 4, 2, 1, rng=rng, dtype=dtype), LeakyReLU(0.2)]
        width = b
        for n in range(1, spec.depth + 1):
            stride = 2 if n < spec.depth else 1
            nxt = b * min(2**n, 8)
            layers += [Conv2d(width, nxt, 4, stride, 1, bias=False, rng=rng, dtype=dtype), InstanceNorm(), LeakyReLU(0.2)]
            width = nxt
        layers.append(Conv2d(width, spec.out_channels, 4, 1, 1, rng=rng, dtype=dtype))
        self.body = Sequential(*layers)
        if spec.spectral_norm:
            sn_rng = np.random.default_rng([spec.init_seed, 3])
            for _, layer in self.param_layers():
                if isinstance(layer, _ConvBase):
                    layer.enable_spectral_norm(sn_rng, spec.n_power_iterations)

    def blocks(self):
        return [("body", self.body)]

    def forward(self, x, mode: Mode = EVAL):
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeError(f"discriminator expects (N, {self.spec.in_channels}, H, W), got {x.shape}")
        return self.body.forward(x, mode)

    def backward(self, dy):
        return self.body.backward(dy)


def patchgan_output_side(side: int, depth: int = 3) -> int:
    from .layers import conv_output_size

    for _ in range(depth):
        side = conv_output_size(side, 4, 2, 1)
    side = conv_output_size(side, 4, 1, 1)
    return conv_output_size(side, 4, 1, 1)


def build_unet_generator(spec: NetworkSpec, dtype=np.float32) -> UNetGenerator:
    if spec.kind != UNET:
        raise ValueError(f"spec kind is {spec.kind!r}, expected {UNET!r}")
    return UNetGenerator(spec, dtype)


def build_patchgan_discriminator(spec: NetworkSpec, dtype=np.float32) -> PatchGANDiscriminator:
    if spec.kind != PATCHGAN:
        raise ValueError(f"spec kind is {spec.kind!r}, expected {PATCHGAN!r}")
    return PatchGANDiscriminator(spec, dtype)


def build_network(spec: NetworkSpec, dtype=np.float32) -> Network:
    return build_unet_generator(spec, dtype) if spec.kind == UNET else build_patchgan_discriminator(spec, dtype)
