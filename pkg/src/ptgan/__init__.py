"""Parallelly tempered GAN training laboratory.

Training interpolates random data pairs at a randomized temperature, learns
critic and generator jointly across all temperature levels, and regularizes
the critic with a coherency penalty so every level trains at a similar
pace.  The package adds the gradient-variance diagnostics that motivate the
scheme, fairness-oriented generation over group-crossing interpolations,
and exact small-sample evaluation metrics.
"""

from . import autodiff, data, evalmetrics, nets, objectives, tempering, trainer

__all__ = ["autodiff", "data", "evalmetrics", "nets", "objectives",
           "tempering", "trainer"]
__version__ = "0.1.0"
