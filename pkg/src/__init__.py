"""Renyi Clip - divergence audit and principled clipping of Dirichlet-Process posteriors."""

__version__ = "0.1.0"
