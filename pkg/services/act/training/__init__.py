"""Training stages, self-labelling, ablations and the multi-seed runner."""
