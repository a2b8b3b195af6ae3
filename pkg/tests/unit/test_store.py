"""Unit tests for the geometry store."""

import numpy as np
import pytest

from height_engine.gauss import MaternParams
from height_engine.likelihood import low_cloud_loglik
from height_engine.raster import Patch, interlace
from height_engine.store import InMemoryGeometryStore, NullGeometryStore, geometry_key


@pytest.mark.unit
def test_keys_are_exact_in_coordinates():
    """
    Story: Two geometries are the same only when every coordinate bit and
    every block size agree; the key also carries the model parameters.
    """
    coords = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    p = MaternParams()
    key = geometry_key("low", coords, (4,), p)
    assert key == geometry_key("low", coords.copy(), (4,), p)
    assert key != geometry_key("low", coords + 1e-15, (4,), p)
    assert key != geometry_key("high", coords, (4,), p)
    assert key != geometry_key("low", coords, (4,), p.with_nu(2.0))


@pytest.mark.unit
def test_store_counts_hits_and_misses():
    store = InMemoryGeometryStore()
    assert store.load("a") is None
    store.save("a", 1)
    assert store.load("a") == 1
    assert (store.hits, store.misses) == (1, 1)


@pytest.mark.unit
def test_full_store_stops_admitting_new_keys():
    """
    Story: Once full, the store keeps what it has (and may refresh those
    keys) but admits nothing new.
    """
    store = InMemoryGeometryStore(max_entries=2)
    store.save("a", 1)
    store.save("b", 2)
    store.save("c", 3)
    store.save("a", 10)
    assert len(store) == 2
    assert store.load("c") is None
    assert store.load("a") == 10


@pytest.mark.unit
def test_cached_and_uncached_likelihoods_agree():
    """
    Story: A cached geometry is a pure function of its key, so a second
    evaluation served from the cache returns exactly the first value, and a
    store that never caches gives the same value too.
    """
    rng = np.random.default_rng(0)
    si = interlace([Patch(rng.uniform(0, 3, (6, 2)), rng.standard_normal(6)) for _ in range(2)])
    store = InMemoryGeometryStore()
    first = low_cloud_loglik(si, MaternParams(), store=store)
    second = low_cloud_loglik(si, MaternParams(), store=store)
    assert first == second
    assert store.hits == 1
    assert low_cloud_loglik(si, MaternParams(), store=NullGeometryStore()) == first
