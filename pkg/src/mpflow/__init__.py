"""Monomial-potential toolkit: Abelian-task decomposition, measure algebra,
Hermite machinery, particle gradient flows, reduced spectra and maxent."""

__version__ = "0.1.0"
