"""Hidden Utility Bandits: environments, baselines and active teacher selection."""

__version__ = "0.1.0"
