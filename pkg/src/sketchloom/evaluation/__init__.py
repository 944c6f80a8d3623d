"""FID, multi-run aggregation, curve emission and the ablation runner."""

from .aggregate import AggregatedSeries, InsufficientRunsError, RunSeries, aggregate_runs, t_quantile
from .fid import (
    ConvFeatureExtractor,
    FeatureStats,
    InsufficientSamplesError,
    extract_features,
    fid,
    fid_components,
    gaussian_stats,
    sqrtm_psd,
)
from .report import CSV_HEADER, emit_series, render_svg, write_series_csv
