import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchloom.nn import Conv2d, ConvTranspose2d, Mode, SpectralState, power_iteration, spectral_normalize
from sketchloom.nn.spectral import spectral_backward


def test_identity():
    wbar, state = spectral_normalize(np.eye(2), SpectralState(np.array([1.0, 0.0])))
    assert np.allclose(wbar, np.eye(2), atol=1e-12)


def test_diag_fixed_point():
    w = np.diag([3.0, 1.0])
    u, v, sigma = power_iteration(w, np.array([1.0, 0.0]), 1)
    assert abs(sigma - 3.0) <= 1e-9
    wbar, _ = spectral_normalize(w, SpectralState(np.array([1.0, 0.0])))
    assert np.allclose(wbar, np.diag([1.0, 1 / 3]), atol=1e-9)


def test_estimate_is_a_lower_bound_that_tightens():
    # sigma_hat = u^T W v is a Rayleigh quotient, so |W_bar|_2 >= 1 at every step
    rng = np.random.default_rng(0)
    w = rng.standard_normal((16, 32))
    sigma_true = np.linalg.svd(w, compute_uv=False)[0]
    u0 = SpectralState.random(16, rng, np.float64).u
    estimates = [power_iteration(w, u0, n)[2] for n in range(0, 60, 5)]
    assert all(e <= sigma_true * (1 + 1e-12) for e in estimates)
    assert all(b >= a - 1e-12 for a, b in zip(estimates, estimates[1:]))
    wbar, _ = spectral_normalize(w, SpectralState(u0, 10))
    assert np.linalg.norm(wbar, 2) >= 1.0 - 1e-12
    wbar, _ = spectral_normalize(w, SpectralState(u0, 2000))
    assert np.linalg.norm(wbar, 2) == pytest.approx(1.0, abs=1e-9)


def test_zero_matrix_guarded():
    wbar, state = spectral_normalize(np.zeros((3, 4)), SpectralState(np.ones(3) / np.sqrt(3)))
    assert np.all(wbar == 0) and np.all(np.isfinite(state.u))


@given(st.floats(0.01, 100.0), st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_scale_equivariance(c, seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((6, 9))
    u0 = SpectralState.random(6, rng, np.float64, n_power_iterations=200)
    a, _ = spectral_normalize(w, u0)
    b, _ = spectral_normalize(c * w, u0)
    assert np.max(np.abs(a - b)) <= 1e-6


@given(st.integers(0, 2**31), st.integers(1, 5))
@settings(max_examples=25)
def test_state_u_unit_norm(seed, n):
    rng = np.random.default_rng(seed)
    _, state = spectral_normalize(rng.standard_normal((5, 7)), SpectralState.random(5, rng, np.float64, n))
    assert abs(np.linalg.norm(state.u) - 1.0) <= 1e-6


def test_update_false_keeps_u():
    rng = np.random.default_rng(1)
    s = SpectralState.random(4, rng, np.float64, 3)
    _, s2 = spectral_normalize(rng.standard_normal((4, 6)), s, update=False)
    assert np.array_equal(s.u, s2.u)


def test_backward_matches_finite_differences():
    # with u fixed and v = W^T u / |W^T u|, sigma = |W^T u| exactly
    rng = np.random.default_rng(2)
    w = rng.standard_normal((4, 5))
    u = rng.standard_normal(4)
    u /= np.linalg.norm(u)
    g = rng.standard_normal((4, 5))

    def loss(m):
        _, v, s = power_iteration(m, u, 0)
        return float(np.sum(g * m / s))

    _, v, sigma = power_iteration(w, u, 0)
    analytic = spectral_backward(g, w / sigma, u, v, sigma, 1e-12)
    numeric = np.zeros_like(w)
    for i in np.ndindex(w.shape):
        e = np.zeros_like(w)
        e[i] = 1e-6
        numeric[i] = (loss(w + e) - loss(w - e)) / 2e-6
    assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("cls", [Conv2d, ConvTranspose2d])
def test_layer_matrix_helpers_agree_with_matrix_view(cls):
    rng = np.random.default_rng(3)
    layer = cls(3, 5, rng=rng, dtype=np.float64)
    layer.enable_spectral_norm(rng, 1)
    m = layer.matrix_view()
    assert m.shape[0] == 5
    w = layer.params["weight"]
    v = rng.standard_normal(m.shape[1])
    u = rng.standard_normal(5)
    vshape = layer._mat_t_vec(w, u).shape
    assert np.allclose(layer._mat_vec(w, v.reshape(vshape)), m @ v)
    assert np.allclose(layer._mat_t_vec(w, u).reshape(-1), m.T @ u)


@pytest.mark.parametrize("cls", [Conv2d, ConvTranspose2d])
def test_layer_power_iteration_converges_in_training(cls):
    rng = np.random.default_rng(4)
    layer = cls(4, 6, rng=rng, dtype=np.float64)
    layer.enable_spectral_norm(rng, 1)
    x = rng.standard_normal((1, 4, 4, 4))
    for _ in range(60):
        layer.forward(x, Mode(training=True))
    wbar = layer.effective_weight(Mode(training=False))
    w = layer.params["weight"]
    sigma_true = np.linalg.norm(layer.matrix_view(), 2)
    assert np.allclose(wbar, w / sigma_true, rtol=1e-6)
    # parameter itself is untouched
    assert np.array_equal(layer.params["weight"], w)
