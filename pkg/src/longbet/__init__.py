"""Heterogeneous, time-varying treatment effects in staggered-adoption panels.

A prognostic forest and an exposure-scaled treatment forest are sampled jointly
by Gibbs sweeps; see :func:`longbet.model.fit`.
"""

__version__ = "0.1.0"
