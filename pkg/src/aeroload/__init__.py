"""Multimodal cognitive-workload pipeline: signal cleaning, per-task features,
from-scratch classifiers and the cross-validation protocols built on them."""

__version__ = "0.1.0"
