"""High-cloud matcher: one joint trend and a common, marginalized scale."""

from height_engine.gauss import DEFAULT_NUGGET, MaternParams
from height_engine.likelihood import high_cloud_loglik, high_cloud_profile_loglik
from height_engine.raster import Patch, interlace
from height_engine.store import GeometryStore
from matchers.base_matcher import BaseMatcher, log_evaluation


class HighCloudMatcher(BaseMatcher):
    """Scores stabilized patches with the high-cloud log-likelihood.

    With ``profile=True`` the common scale is profiled out instead of
    integrated against a flat prior.
    """

    needs_stabilization = True

    def __init__(
        self,
        params: MaternParams,
        nugget: float = DEFAULT_NUGGET,
        store: GeometryStore | None = None,
        profile: bool = False,
    ):
        self.params = params
        self.nugget = nugget
        self.profile = profile
        self._store = store
        self.name = "high-profile" if profile else "high"

    @log_evaluation
    def score(self, patches: list[Patch]) -> float:
        loglik = high_cloud_profile_loglik if self.profile else high_cloud_loglik
        return loglik(interlace(patches), self.params, self.nugget, store=self._store)
