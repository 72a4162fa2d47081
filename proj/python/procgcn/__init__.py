"""Self-tuning graph convolutional models for event-log outcome prediction.

The heavy lifting lives in the `_core` extension; this package re-exports the
operations most useful from Python: synthetic dataset generation, encoding
pipelines, single training runs, and hyperparameter tuning.
"""

from ._core import (
    Dataset,
    Prepared,
    ProcgcnError,
    classification_report,
    prepare,
    sample_hyperparams,
    synth_balanced,
    synth_imbalanced,
    train,
    tune,
    __version__,
)

__all__ = [
    "Dataset",
    "Prepared",
    "ProcgcnError",
    "classification_report",
    "prepare",
    "sample_hyperparams",
    "synth_balanced",
    "synth_imbalanced",
    "train",
    "tune",
    "__version__",
]
