"""HIPPO: hierarchical contrastive protein pretraining and multi-label PPI
prediction, built for deterministic desk-scale verification."""

__version__ = "0.1.0"
