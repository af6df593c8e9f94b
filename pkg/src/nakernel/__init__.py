"""Heat and Poisson kernels of meta-abelian NA groups by skew-product Monte Carlo."""

__version__ = "0.1.0"
