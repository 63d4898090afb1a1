"""Toolkit for matching distributions across domains without adversaries.

The package is organised around three layers:

* exact oracles for small discrete worlds and 1D quadrature (``alignkit.oracle``),
* differentiable losses built on a small tape autodiff engine
  (``alignkit.autodiff``, ``alignkit.losses``, ``alignkit.models``),
* small-scale experiments and metrics (``alignkit.training``,
  ``alignkit.experiments``, ``alignkit.metrics``, ``alignkit.data``).
"""

__version__ = "0.1.0"
