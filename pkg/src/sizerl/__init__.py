"""sizerl: multi-circuit analog sizing with a model-based RL agent."""

__version__ = "0.1.0"
