"""
ACT: Anomaly-aware Contrastive alignment Toolkit

Cross-domain graph anomaly detection: a labelled source graph teaches an
anomaly scorer for an unlabelled target graph through one-class embedding
alignment and self-labelling deviation learning.

Run ``python -m services.act --help`` for the command-line interface.
"""

__version__ = "0.1.0"
