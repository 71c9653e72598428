"""Random-search attacks under sparse threat models, with toy victims and baselines."""

__version__ = "0.1.0"
