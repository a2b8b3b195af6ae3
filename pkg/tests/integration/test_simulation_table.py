"""Integration tests: the strip simulation study end to end.

The ranking test runs 100 replicates of all five methods over the 1001-point
d grid; set CLOUDHEIGHT_WORKERS to spread replicates over threads.
"""

import pytest

from height_engine.store import InMemoryGeometryStore
from run_config import env_workers
from simstudy.strip import TRUE_D, SimConfig, StripSimulator, extract_three_images
from simstudy.table1 import SIMSTUDY_CACHE_SIZE, MethodScorer, estimate_d, rep_seed, run_table1


@pytest.mark.integration
def test_full_method_recovers_d_without_brightening():
    """
    Story: With all brightness multipliers at 1, the full likelihood puts d
    within 1e-3 of 0.5040 on every one of five fields.
    """
    cfg = SimConfig(strip2_gain=1.0, patch_gain=1.0)
    simulator = StripSimulator(cfg)
    scorer = MethodScorer("full", store=InMemoryGeometryStore(SIMSTUDY_CACHE_SIZE))
    for rep in range(5):
        images = extract_three_images(simulator.draw(rep_seed(3, rep)), cfg)
        assert abs(estimate_d(images, scorer, cfg.d_grid(), cfg) - float(TRUE_D)) <= 1e-3


@pytest.mark.integration
def test_full_likelihood_wins_the_table():
    """
    Story: Over 100 paired replicates the full likelihood has RMSE at most
    1e-3 and beats every other method; both likelihood variants with fewer
    pieces still beat the correlation baseline.
    """
    results = {r.method: r for r in run_table1(reps=100, master_seed=1, workers=env_workers())}
    full = results["full"]
    assert full.reps == 100
    assert full.rmse <= 1e-3
    pairwise, no_newton, baseline = results["pairwise"], results["no_newton"], results["baseline"]
    assert full.rmse < pairwise.rmse < baseline.rmse
    assert full.rmse < no_newton.rmse < baseline.rmse
    assert full.rmse < results["wrong_nu"].rmse
