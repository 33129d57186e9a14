"""Core data models and the experiment pipeline."""
