"""Children age-group detection from stylus drawing time series."""

from ._agedetect import (
    CHANNELS,
    Error,
    __version__,
    agd,
    config_fingerprint,
    dba,
    derivative,
    dtw,
    evaluate,
    extract_channels,
    percentile,
    predict,
    run_experiment,
    set_jobs,
    set_log_level,
    split,
    synth,
)

__all__ = [
    "CHANNELS",
    "Error",
    "__version__",
    "agd",
    "config_fingerprint",
    "dba",
    "derivative",
    "dtw",
    "evaluate",
    "extract_channels",
    "percentile",
    "predict",
    "run_experiment",
    "set_jobs",
    "set_log_level",
    "split",
    "synth",
]
