"""MDI-QKD key-rate engine."""
