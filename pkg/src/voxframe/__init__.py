"""voxframe: 1-d CNN speaker embeddings with frame-level analysis.

A desk-scale, fully testable implementation of a convolutional speaker
verification pipeline: synthetic corpus generation, MFCC frontend, a
float64 network core with verified gradients, statistics/average pooling
with a relocatable average-pooling mode that yields per-frame embeddings,
LDA+PLDA and cosine backends with EER/minDCF metrics, and analysis tools
for broad phonetic classes and critical phones.
"""

__version__ = "0.1.0"

from . import analysis, backend, corpus, frontend, model, nn, reports
from .errors import VoxframeError

__all__ = [
    "analysis",
    "backend",
    "corpus",
    "frontend",
    "model",
    "nn",
    "reports",
    "VoxframeError",
    "__version__",
]
