"""Training-free location priors for unseen objects via multi-scale template matching."""
__version__ = "0.1.0"
