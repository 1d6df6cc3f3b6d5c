"""Multi-label music genre classification toolkit.

Taxonomy-aware label expansion, PPMI+SVD label factorization, small
deterministic neural models over audio spectrogram patches / tf-idf text
vectors / precomputed image vectors, late fusion, and multi-label ranking
metrics (label-averaged AUC-ROC, Coverage@k).
"""

__version__ = "0.1.0"

from . import audiofeat, kernels, labelspace, metrics, nn, pipeline, textfeat, zoo

__all__ = [
    "audiofeat", "kernels", "labelspace", "metrics", "nn",
    "pipeline", "textfeat", "zoo", "__version__",
]
