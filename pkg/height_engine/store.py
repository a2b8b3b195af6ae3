import threading
from typing import Any, Hashable, Protocol

import numpy as np

DEFAULT_CACHE_SIZE = 512


def geometry_key(kind: str, coords: np.ndarray, block_sizes: tuple[int, ...], *extra: Hashable) -> tuple:
    """Key of an interlace geometry; exact, since patch coordinates are window-relative."""
    coords = np.ascontiguousarray(coords, dtype=float)
    return (kind, coords.shape, coords.tobytes(), tuple(block_sizes), *extra)


class GeometryStore(Protocol):
    def load(self, key: Hashable) -> Any | None: ...
    def save(self, key: Hashable, value: Any) -> None: ...


class InMemoryGeometryStore:
    """Bounded cache of interlace geometries.

    Candidate searches revisit the same geometries in a fixed cycle, so once
    the store is full new keys are simply not admitted (an LRU smaller than
    the cycle would never hit).
    """

    def __init__(self, max_entries: int = DEFAULT_CACHE_SIZE) -> None:
        self._data: dict[Hashable, Any] = {}
        self._max_entries = max_entries
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def load(self, key: Hashable) -> Any | None:
        with self._lock:
            value = self._data.get(key)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def save(self, key: Hashable, value: Any) -> None:
        with self._lock:
            if key in self._data or len(self._data) < self._max_entries:
                self._data[key] = value

    def __len__(self) -> int:
        return len(self._data)


class NullGeometryStore:
    """Store that never caches; every evaluation recomputes its geometry."""

    def load(self, key: Hashable) -> Any | None:
        return None

    def save(self, key: Hashable, value: Any) -> None:
        pass
