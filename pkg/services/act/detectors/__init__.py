"""Off-the-shelf detectors used for self-labelling."""
