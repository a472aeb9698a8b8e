"""papyrid: unsupervised writer retrieval and classification for document images."""

__version__ = "0.1.0"

from . import binarize, classify, corpus, encode, features, numerics, retrieval

__all__ = [
    "__version__",
    "binarize",
    "classify",
    "corpus",
    "encode",
    "features",
    "numerics",
    "retrieval",
]
