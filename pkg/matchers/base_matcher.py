"""Abstract matcher contract and the evaluation logging decorator."""

import functools
import logging
import time
from abc import ABC, abstractmethod

from height_engine.errors import INVALID_CANDIDATE_ERRORS
from height_engine.raster import Patch

logger = logging.getLogger(__name__)


def log_evaluation(fn):
    """Decorator: log patch count, score and duration for every matcher evaluation.

    Invalid-candidate failures are expected during a search and are logged at
    DEBUG; anything else is logged with its traceback and re-raised.
    """
    @functools.wraps(fn)
    def wrapper(self, patches, *args, **kwargs):
        start = time.perf_counter()
        try:
            result = fn(self, patches, *args, **kwargs)
        except INVALID_CANDIDATE_ERRORS as e:
            logger.debug(
                "%s rejected %d patches after %.4fs: %s",
                self.name, len(patches), time.perf_counter() - start, e,
            )
            raise
        except Exception as e:
            logger.exception(
                "%s failed on %d patches after %.4fs: %s",
                self.name, len(patches), time.perf_counter() - start, e,
            )
            raise
        logger.debug(
            "%s scored %d patches in %.4fs: %.6g",
            self.name, len(patches), time.perf_counter() - start, result,
        )
        return result
    return wrapper


class BaseMatcher(ABC):
    """Contract for candidate scorers.

    A matcher receives one patch per camera, the reference camera first, each
    already relocated for the candidate height/wind, and returns a score where
    larger means a better alignment. Scores are only comparable between
    candidates of the same window.

    Raising one of ``INVALID_CANDIDATE_ERRORS`` marks the candidate invalid;
    the search excludes it instead of failing.
    """

    name: str = "matcher"
    # High-cloud scoring assumes brightness-stabilized images.
    needs_stabilization: bool = False
    # A valid profile peaks at least this far above its median, in score units.
    tau_flat: float = 2.0

    @abstractmethod
    def score(self, patches: list[Patch]) -> float:
        ...
