"""Fine-tune a tiny causal language model on instruction/input/output digit
datasets with low-rank adapters, and serve it over the chat wire contract."""

from .data import DatasetError, load_dataset
from .training import TuneConfig, tune

__all__ = ["DatasetError", "TuneConfig", "load_dataset", "tune"]
