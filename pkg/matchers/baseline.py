"""Correlation baseline: nearest-pixel alignment, no sub-pixel model."""

import numpy as np

from height_engine.likelihood import correlation_metric
from height_engine.raster import Patch
from matchers.base_matcher import BaseMatcher, log_evaluation


class BaselineMatcher(BaseMatcher):
    """Mean Pearson correlation of every non-reference patch with the reference.

    Only pixel values enter the score, so fractional residuals are ignored and
    the alignment is the nearest-pixel one.
    """

    name = "baseline"
    needs_stabilization = False
    # correlations live in [-1, 1]
    tau_flat = 0.1

    @log_evaluation
    def score(self, patches: list[Patch]) -> float:
        if len(patches) < 2:
            raise ValueError("the correlation baseline needs at least two patches")
        reference = patches[0]
        return float(np.mean([correlation_metric(reference, other) for other in patches[1:]]))
