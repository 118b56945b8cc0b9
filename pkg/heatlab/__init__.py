"""heatlab: Dirichlet heat kernels, Gaussian lower bounds and blow-up experiments."""

__version__ = "0.1.0"
