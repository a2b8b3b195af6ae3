from height_engine.errors import ConfigError
from height_engine.gauss import DEFAULT_NUGGET, MaternParams
from height_engine.store import GeometryStore
from matchers.base_matcher import BaseMatcher, log_evaluation
from matchers.baseline import BaselineMatcher
from matchers.high_cloud import HighCloudMatcher
from matchers.low_cloud import LowCloudMatcher

MODES = ("low", "high", "baseline")


def build_matcher(
    mode: str,
    params: MaternParams,
    nugget: float = DEFAULT_NUGGET,
    store: GeometryStore | None = None,
    profile_high: bool = False,
    sigma_divisor: str = "m",
) -> BaseMatcher:
    """Return the matcher for a run mode (``low``, ``high`` or ``baseline``)."""
    if mode == "low":
        return LowCloudMatcher(params, nugget, store, sigma_divisor=sigma_divisor)
    if mode == "high":
        return HighCloudMatcher(params, nugget, store, profile=profile_high)
    if mode == "baseline":
        return BaselineMatcher()
    raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")


__all__ = [
    "MODES",
    "BaseMatcher",
    "BaselineMatcher",
    "HighCloudMatcher",
    "LowCloudMatcher",
    "build_matcher",
    "log_evaluation",
]
