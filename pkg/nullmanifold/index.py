import logging
from typing import Optional, Tuple

import faiss
import numpy as np

from nullmanifold.config import settings
from nullmanifold.errors import InputError

logger = logging.getLogger(__name__)


class SampleIndex:
    """Exact Euclidean nearest-sample search over joint configurations.

    FAISS searches in float32; the top candidates are re-ranked in float64 so
    returned distances carry full precision.
    """

    def __init__(self, dimension: int, rerank: int = 8, threads: Optional[int] = None):
        self.dimension = dimension
        self.rerank = rerank
        self.index = faiss.IndexFlatL2(self.dimension)
        self.points = np.empty((0, dimension))
        faiss.omp_set_num_threads(threads or settings.resolve_threads())

    @classmethod
    def from_points(cls, points: np.ndarray, **kwargs) -> "SampleIndex":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        index = cls(points.shape[1], **kwargs)
        index.add(points)
        return index

    def add(self, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dimension:
            raise InputError(f"points have {points.shape[1]} columns, index has {self.dimension}")
        self.index.add(np.ascontiguousarray(points, dtype=np.float32))
        self.points = np.vstack([self.points, points])

    def search(self, queries: np.ndarray, top_k: int = 1) -> Tuple[np.ndarray, np.ndarray]:
        """Distances (float64) and indices of the top_k nearest samples per query."""
        if self.index.ntotal == 0:
            raise InputError("nearest-sample search on an empty index")
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        if queries.shape[1] != self.dimension:
            raise InputError(f"queries have {queries.shape[1]} columns, index has {self.dimension}")
        k = min(max(top_k, self.rerank), self.index.ntotal)
        _, candidates = self.index.search(np.ascontiguousarray(queries, dtype=np.float32), k)
        exact = np.linalg.norm(self.points[candidates] - queries[:, None, :], axis=2)
        order = np.argsort(exact, axis=1)[:, :top_k]
        return np.take_along_axis(exact, order, axis=1), np.take_along_axis(candidates, order, axis=1)

    def nearest_distance(self, queries: np.ndarray) -> np.ndarray:
        return self.search(queries, 1)[0][:, 0]
