"""Seeded synthetic datasets, cost builders, and graph ingestion.

Generators draw from numpy's seeded Generator, so every cloud is a pure
function of its parameters and seed. Graphs come from whitespace edge lists;
both graph cost builders run through one densification step that symmetrizes
directed input and patches isolated nodes with a unit self-loop.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.datasets import make_moons

from .errors import DimMismatch, IsolatedNodeWarning, ParseError, ShapeMismatch
from .lc_core import CostSpec

# Eight-Gaussian ring placement, shared by the mixed moons/ring benchmark.
# Calibrated once against the assignment-oracle cost level of the rank-100
# balanced benchmark and then frozen; the companion noise scales match the
# moons noise so neither side dominates the transport cost.
GAUSS_RING_CENTER = (0.5, 0.25)
GAUSS_RING_RADIUS = 0.95
GAUSS_RING_SIGMA = 0.1
GAUSS_RING_K = 8

MOON_NOISE = 0.1


@dataclass(frozen=True)
class PointCloud:
    """Points (n×d) with optional integer cluster labels (length n)."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ShapeMismatch(f"points must be 2-d, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (pts.shape[0],):
                raise ShapeMismatch(
                    f"labels must have length {pts.shape[0]}, got shape {labels.shape}"
                )
            if labels.size and labels.min() < 0:
                raise ValueError("labels must be non-negative")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def save_point_cloud(path, pc: PointCloud) -> None:
    """Write a point cloud as CSV with header x0,x1,…[,label]."""
    cols = [f"x{i}" for i in range(pc.dim)]
    if pc.labels is not None:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(pc.n):
        row = [repr(float(x)) for x in pc.points[i]]
        if pc.labels is not None:
            row.append(str(int(pc.labels[i])))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_point_cloud(path) -> PointCloud:
    """Read a point cloud written by :func:`save_point_cloud`."""
    with open(path, encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    rows = [(i + 1, line.strip()) for i, line in enumerate(raw) if line.strip()]
    if not rows:
        raise ParseError("point cloud file is empty")
    header_no, header = rows[0]
    names = [c.strip() for c in header.split(",")]
    has_label = bool(names) and names[-1] == "label"
    coord_names = names[:-1] if has_label else names
    if coord_names != [f"x{i}" for i in range(len(coord_names))]:
        raise ParseError(
            f"expected header x0,x1,…[,label], got {header!r}", line_no=header_no
        )
    points = []
    labels = [] if has_label else None
    for line_no, line in rows[1:]:
        parts = line.split(",")
        if len(parts) != len(names):
            raise ParseError(
                f"expected {len(names)} columns, got {len(parts)}", line_no=line_no
            )
        try:
            coords = [float(x) for x in parts[: len(coord_names)]]
            if has_label:
                labels.append(int(parts[-1]))
        except ValueError as exc:
            raise ParseError(str(exc), line_no=line_no) from exc
        points.append(coords)
    pts = np.asarray(points, dtype=np.float64).reshape(len(points), len(coord_names))
    return PointCloud(points=pts, labels=None if labels is None else np.asarray(labels))


# ---------------------------------------------------------------------------
# Generators


def _ring_centers(k: int, center: tuple[float, float], radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(k) / k
    return np.column_stack(
        [center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)]
    )


def gen_moons_gaussians(n: int, m: int, seed: int) -> tuple[PointCloud, PointCloud]:
    """The mixed benchmark pair: n ring-Gaussian points and m two-moons points.

    The first cloud draws each point's component uniformly from the eight
    ring Gaussians; the second uses the standard interleaved half-circle
    construction with noise 0.1. Ring draws happen before the moons call, so
    each side is independently reproducible per seed.
    """
    if n < 8 or m < 8:
        raise ValueError(f"need n, m >= 8, got ({n}, {m})")
    rng = np.random.default_rng(seed)
    centers = _ring_centers(GAUSS_RING_K, GAUSS_RING_CENTER, GAUSS_RING_RADIUS)
    comp = rng.integers(0, GAUSS_RING_K, size=n)
    pts = centers[comp] + GAUSS_RING_SIGMA * rng.standard_normal((n, 2))
    gauss = PointCloud(points=pts, labels=comp)
    moon_pts, moon_labels = make_moons(n_samples=m, noise=MOON_NOISE, random_state=seed)
    moons = PointCloud(points=moon_pts, labels=moon_labels)
    return gauss, moons


_MIXTURE_MEANS = {
    "first": np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
    "second": np.array([[0.5, 0.5], [-0.5, 0.5]]),
}
MIXTURE_COV_DIAG = 0.05


def gen_gaussian_mixture(dim: int, n: int, which: str, seed: int) -> PointCloud:
    """Uniform Gaussian mixtures on fixed means with covariance 0.05·I.

    "first" uses three components at (0,0), (0,1), (1,1); "second" two at
    (0.5, 0.5), (−0.5, 0.5). dim=10 zero-pads the means, keeping isotropic
    covariance in all coordinates.
    """
    if dim not in (2, 10):
        raise ValueError(f"dim must be 2 or 10, got {dim}")
    if which not in _MIXTURE_MEANS:
        raise ValueError(f"which must be 'first' or 'second', got {which!r}")
    means2d = _MIXTURE_MEANS[which]
    means = np.zeros((means2d.shape[0], dim))
    means[:, :2] = means2d
    rng = np.random.default_rng(seed)
    comp = rng.integers(0, means.shape[0], size=n)
    pts = means[comp] + math.sqrt(MIXTURE_COV_DIAG) * rng.standard_normal((n, dim))
    return PointCloud(points=pts, labels=comp)


def gen_roots_of_unity(
    n_roots: int, samples: int, radius: float, sigma: float, seed: int
) -> PointCloud:
    """Isotropic Gaussians centered on the n-th roots of unity scaled by radius."""
    if n_roots < 1:
        raise ValueError(f"n_roots must be >= 1, got {n_roots}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    centers = _ring_centers(n_roots, (0.0, 0.0), radius)
    rng = np.random.default_rng(seed)
    comp = rng.integers(0, n_roots, size=samples)
    pts = centers[comp] + sigma * rng.standard_normal((samples, 2))
    return PointCloud(points=pts, labels=comp)


# ---------------------------------------------------------------------------
# Cost builders


def cost_euclidean(Z1: np.ndarray, Z2: np.ndarray, squared: bool = False) -> CostSpec:
    """Dense pairwise Euclidean (or squared Euclidean) cost."""
    Z1 = np.asarray(Z1, dtype=np.float64)
    Z2 = np.asarray(Z2, dtype=np.float64)
    if Z1.ndim != 2 or Z2.ndim != 2 or Z1.shape[1] != Z2.shape[1]:
        raise DimMismatch(
            f"point clouds must share a dimension, got {Z1.shape} and {Z2.shape}"
        )
    metric = "sqeuclidean" if squared else "euclidean"
    return CostSpec(C=cdist(Z1, Z2, metric=metric))


def cost_sqeuclidean_factored(Z1: np.ndarray, Z2: np.ndarray) -> CostSpec:
    """Exact rank-(d+2) factorization of the squared Euclidean cost.

    C1 = [‖z‖², 1, −2z] and C2 = [1, ‖z‖², z] give C1·C2ᵀ =
    ‖z1‖² + ‖z2‖² − 2⟨z1, z2⟩ exactly, so solves can stay in O(n·d) memory.
    """
    Z1 = np.asarray(Z1, dtype=np.float64)
    Z2 = np.asarray(Z2, dtype=np.float64)
    if Z1.ndim != 2 or Z2.ndim != 2 or Z1.shape[1] != Z2.shape[1]:
        raise DimMismatch(
            f"point clouds must share a dimension, got {Z1.shape} and {Z2.shape}"
        )
    sq1 = (Z1**2).sum(axis=1)
    sq2 = (Z2**2).sum(axis=1)
    C1 = np.column_stack([sq1, np.ones(Z1.shape[0]), -2.0 * Z1])
    C2 = np.column_stack([np.ones(Z2.shape[0]), sq2, Z2])
    return CostSpec(C1=C1, C2=C2)


# ---------------------------------------------------------------------------
# Graphs


@dataclass(frozen=True)
class GraphSpec:
    """Edge-list graph: node count, (u, v, weight) triples, directedness."""

    n: int
    edges: tuple[tuple[int, int, float], ...]
    directed: bool = False

    def __post_init__(self):
        object.__setattr__(
            self,
            "edges",
            tuple((int(u), int(v), float(w)) for u, v, w in self.edges),
        )
        for u, v, w in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(
                    f"edge ({u}, {v}) out of range for {self.n} nodes"
                )
            if not (w > 0 and math.isfinite(w)):
                raise ValueError(f"edge ({u}, {v}) has non-positive weight {w!r}")


def load_graph(path) -> GraphSpec:
    """Parse a whitespace edge list: one "u v [w]" per line.

    Blank lines are skipped; "#" lines are comments, and any comment
    containing the word "directed" marks the graph as directed (conventionally
    placed as a header). Node count is 1 + the largest index seen.
    """
    directed = False
    edges: list[tuple[int, int, float]] = []
    max_node = -1
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            s = raw.strip()
            if not s:
                continue
            if s.startswith("#"):
                if "directed" in s.lower():
                    directed = True
                continue
            parts = s.split()
            if len(parts) not in (2, 3):
                raise ParseError(
                    f"expected 'u v' or 'u v w', got {len(parts)} fields",
                    line_no=line_no,
                )
            try:
                u = int(parts[0])
                v = int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise ParseError(str(exc), line_no=line_no) from exc
            if u < 0 or v < 0:
                raise ParseError(f"negative node id in ({u}, {v})", line_no=line_no)
            if not (w > 0 and math.isfinite(w)):
                raise ParseError(
                    f"edge weight must be positive and finite, got {w!r}",
                    line_no=line_no,
                )
            edges.append((u, v, w))
            max_node = max(max_node, u, v)
    if not edges:
        raise ParseError("file contains no edges")
    return GraphSpec(n=max_node + 1, edges=tuple(edges), directed=directed)


def _dense_adjacency(g: GraphSpec) -> np.ndarray:
    """Symmetric dense adjacency with the isolated-node self-loop rule.

    Directed input is symmetrized as (M + Mᵀ)/2, since every consumer here
    (quadratic costs, normalized Laplacians) needs a symmetric structure
    matrix. Degree-zero nodes get a unit self-loop and a warning.
    """
    A = np.zeros((g.n, g.n))
    for u, v, w in g.edges:
        A[u, v] += w
        if not g.directed and u != v:
            A[v, u] += w
    if g.directed:
        A = 0.5 * (A + A.T)
    isolated = np.flatnonzero(A.sum(axis=1) == 0)
    if isolated.size:
        warnings.warn(
            f"nodes {isolated.tolist()} have no incident edges; "
            "adding unit self-loops",
            IsolatedNodeWarning,
            stacklevel=3,
        )
        A[isolated, isolated] = 1.0
    return A


def adjacency_cost(g: GraphSpec) -> CostSpec:
    """The (symmetrized) adjacency matrix in the intra-domain A slot."""
    return CostSpec(A=_dense_adjacency(g))


def heat_kernel_cost(g: GraphSpec, t: float) -> CostSpec:
    """exp(−t·L_sym) in the A slot, L_sym the symmetric normalized Laplacian.

    Computed by symmetric eigendecomposition; tiny negative entries from
    rounding are clipped to zero, so the kernel stays a valid non-negative
    symmetric cost. t = 0 gives the identity.
    """
    if t < 0:
        raise ValueError(f"heat parameter t must be non-negative, got {t}")
    A = _dense_adjacency(g)
    d = A.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)  # d > 0 after the self-loop rule
    L = np.eye(g.n) - (A * inv_sqrt[:, None]) * inv_sqrt[None, :]
    w, V = np.linalg.eigh(L)
    K = (V * np.exp(-t * w)) @ V.T
    K = 0.5 * (K + K.T)
    np.clip(K, 0.0, None, out=K)
    return CostSpec(A=K)


def node_weights(g: GraphSpec) -> np.ndarray:
    """Degree-proportional node distribution (sums to 1)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IsolatedNodeWarning)
        A = _dense_adjacency(g)
    h = A.sum(axis=1)
    return h / h.sum()


def template_weights(h: np.ndarray, k: int) -> np.ndarray:
    """Length-k template distribution interpolated from sorted node weights.

    Resamples the sorted weight profile at k evenly spaced quantile positions
    and renormalizes, so the template keeps the original degree skew.
    """
    h = np.asarray(h, dtype=np.float64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if h.ndim != 1 or h.size == 0:
        raise ShapeMismatch(f"h must be a non-empty vector, got shape {h.shape}")
    hs = np.sort(h)
    hbar = np.interp(np.linspace(0, h.size - 1, k), np.arange(h.size), hs)
    return hbar / hbar.sum()
