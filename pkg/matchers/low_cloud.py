"""Low-cloud matcher: per-camera REML filtering with per-camera scales."""

from height_engine.gauss import DEFAULT_NUGGET, MaternParams
from height_engine.likelihood import low_cloud_loglik
from height_engine.raster import Patch, interlace
from height_engine.store import GeometryStore
from matchers.base_matcher import BaseMatcher, log_evaluation


class LowCloudMatcher(BaseMatcher):
    """Scores candidates with the low-cloud log-likelihood.

    ``newton=False`` plugs in the per-patch scale estimates instead of the
    one-Newton-step refinement.
    """

    needs_stabilization = False

    def __init__(
        self,
        params: MaternParams,
        nugget: float = DEFAULT_NUGGET,
        store: GeometryStore | None = None,
        newton: bool = True,
        sigma_divisor: str = "m",
    ):
        self.params = params
        self.nugget = nugget
        self.newton = newton
        self.sigma_divisor = sigma_divisor
        self._store = store
        self.name = "low" if newton else "low-no-newton"

    @log_evaluation
    def score(self, patches: list[Patch]) -> float:
        return low_cloud_loglik(
            interlace(patches),
            self.params,
            self.nugget,
            newton=self.newton,
            store=self._store,
            sigma_divisor=self.sigma_divisor,
        )
