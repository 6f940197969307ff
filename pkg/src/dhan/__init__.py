"""Time-aware hierarchical attention model for sequential news
recommendation, with its own float64 autodiff substrate."""

from .config import RunConfig
from .data import Corpus, DatasetSplit, InstanceWindow, NewsArticle
from .ranker import DHanModel
from .tensor import ParamStore, Tensor

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "DHanModel",
    "DatasetSplit",
    "InstanceWindow",
    "NewsArticle",
    "ParamStore",
    "RunConfig",
    "Tensor",
    "__version__",
]
