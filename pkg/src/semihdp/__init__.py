"""Semi-hierarchical Dirichlet process mixtures for testing homogeneity across groups."""

__version__ = "0.1.0"
