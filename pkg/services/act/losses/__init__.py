"""Contrastive, Sinkhorn and deviation losses."""
