"""One-class anomaly detection with a from-scratch ViT feature extractor."""

from ocvit._core import (
    ConfigError,
    EvalError,
    IoError,
    __version__,
    auc_roc,
    canonical_config,
    evaluate,
    gradient_suite,
)

__all__ = [
    "ConfigError",
    "EvalError",
    "IoError",
    "__version__",
    "auc_roc",
    "canonical_config",
    "evaluate",
    "gradient_suite",
]
