"""Haversine distances, k-nearest neighbours and the viewport graph."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, InputError
from .sampler import points_lat_lon


def haversine(p1, p2) -> float:
    """Great-circle distance in radians between two (lat, lon) pairs given in radians."""
    lat1, lon1 = float(p1[0]), float(p1[1])
    lat2, lon2 = float(p2[0]), float(p2[1])
    if not all(map(math.isfinite, (lat1, lon1, lat2, lon2))):
        raise DomainError("haversine received a non-finite coordinate")
    sdp = math.sin((lat2 - lat1) / 2.0)
    sdl = math.sin((lon2 - lon1) / 2.0)
    a = sdp * sdp + math.cos(lat1) * math.cos(lat2) * sdl * sdl
    a = min(max(a, 0.0), 1.0)
    return 2.0 * math.atan2(math.sqrt(a), math.sqrt(1.0 - a))


def distance_matrix(points) -> np.ndarray:
    """Pairwise geodesic distances for SpherePoints or an (V, 2) radian lat/lon array."""
    coords = _coords(points)
    if coords.shape[0] < 2:
        raise InputError(f"distance_matrix needs at least 2 points, got {coords.shape[0]}")
    if not np.all(np.isfinite(coords)):
        raise DomainError("distance_matrix received a non-finite coordinate")
    return kernels.haversine_matrix(coords[:, 0].copy(), coords[:, 1].copy())


def _coords(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return points_lat_lon(list(points))


def knn(D, k: int) -> list[list[int]]:
    """k nearest neighbours per row of D, self excluded, ties broken by lower index."""
    D = np.asarray(D, dtype=np.float64)
    V = D.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k!r}")
    if k >= V:
        raise ConfigError(f"k must satisfy k < V (number of nodes); got k={k}, V={V}")
    idx = np.arange(V)
    out = []
    for i in range(V):
        cand = idx[idx != i]
        order = np.lexsort((cand, D[i, cand]))
        out.append([int(j) for j in cand[order[:k]]])
    return out


@dataclass
class ViewportGraph:
    num_nodes: int
    edges: list[tuple[int, int]]
    k: int
    coords: np.ndarray
    neighbors: list[list[int]] = field(default_factory=list)
    distances: np.ndarray | None = None

    def in_mask(self) -> np.ndarray:
        """Boolean (V, V) mask with ``mask[i, j]`` true when edge j -> i exists."""
        m = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        for s, d in self.edges:
            m[d, s] = True
        return m

    def neighbor_mask(self) -> np.ndarray:
        m = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        for i, nb in enumerate(self.neighbors):
            m[i, nb] = True
        return m

    def in_degree(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=int)
        for _, d in self.edges:
            deg[d] += 1
        return deg

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "k": self.k,
            "edges": [[int(s), int(d)] for s, d in self.edges],
            "coords": [[float(a), float(b)] for a, b in self.coords],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def edges_from_neighbors(neighbors) -> list[tuple[int, int]]:
    edges = set()
    for i, nb in enumerate(neighbors):
        edges.add((i, i))
        for j in nb:
            edges.add((i, j))
            edges.add((j, i))
    return sorted(edges)


def build_graph(points, k: int = 5) -> ViewportGraph:
    """Star graph per node over its k nearest neighbours, symmetrised, with self-loops."""
    coords = _coords(points)
    D = distance_matrix(coords)
    neighbors = knn(D, k)
    return ViewportGraph(
        num_nodes=coords.shape[0],
        edges=edges_from_neighbors(neighbors),
        k=k,
        coords=coords,
        neighbors=neighbors,
        distances=D,
    )


def nearest_neighbor_stats(points) -> dict:
    """Nearest-neighbour geodesic distance statistics (radians) for a point set."""
    D = distance_matrix(points).copy()
    np.fill_diagonal(D, np.inf)
    nn = D.min(axis=1)
    mean = float(nn.mean())
    std = float(nn.std())
    return {
        "count": int(nn.size),
        "min": float(nn.min()),
        "max": float(nn.max()),
        "mean": mean,
        "std": std,
        "cv": std / mean,
        "ratio": float(nn.max() / nn.min()),
    }
