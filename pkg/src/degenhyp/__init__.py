"""Loss-of-regularity analysis and spectral solving for weakly hyperbolic
Cauchy problems whose principal part degenerates like t^l at time zero."""

from .weights import Cutoff, DegeneracySpec, WeightValues, smooth_cutoff

__all__ = ["Cutoff", "DegeneracySpec", "WeightValues", "smooth_cutoff"]

__version__ = "0.1.0"
