"""Device deployments and the static communication graph.

Generated deployments live in a square arena of side ``ceil(sqrt(n))``
spacing units whose lower-left corner is ``(-0.5, -0.5)``, so lattice
points sit at integer coordinates with unit spacing and the arena centre
coincides with the lattice centre.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import DuplicateDevice, InvalidArgument, ParseError

DEPLOYMENT_KINDS = ("grid", "pgrid", "uniform", "exp")

PGRID_JITTER = 0.45
EXP_RATE_PER_SIDE = 3.0


@dataclass(frozen=True)
class Deployment:
    """Device positions inside a rectangular arena.

    ``positions`` is an ``(n, 2)`` float array indexed by device id.
    ``arena`` is ``(width, height)``; ``origin`` is the lower-left corner.
    """

    positions: np.ndarray
    arena: tuple[float, float]
    origin: tuple[float, float] = (0.0, 0.0)
    kind: str = "custom"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise InvalidArgument("positions must have shape (n, 2)")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def center(self) -> tuple[float, float]:
        return (self.origin[0] + self.arena[0] / 2, self.origin[1] + self.arena[1] / 2)

    def contains(self, xy) -> bool:
        x, y = xy
        return (
            self.origin[0] <= x <= self.origin[0] + self.arena[0]
            and self.origin[1] <= y <= self.origin[1] + self.arena[1]
        )


@dataclass(frozen=True)
class NetworkGraph:
    """Static, symmetric, connected device graph.

    ``neighbors[d]`` is the sorted tuple of ``d``'s neighbours and
    ``edge_length[(a, b)]`` (with ``a < b``) the Euclidean edge length.
    ``degenerate`` is set when ``k_min >= n`` forced a complete graph.
    """

    deployment: Deployment
    neighbors: tuple[tuple[int, ...], ...]
    edge_length: dict[tuple[int, int], float] = field(repr=False)
    k_min: int = 8
    degenerate: bool = False

    @property
    def n(self) -> int:
        return len(self.neighbors)

    @property
    def positions(self) -> np.ndarray:
        return self.deployment.positions

    def edges(self):
        """Sorted list of ``(a, b)`` pairs with ``a < b``."""
        return sorted(self.edge_length)

    def length(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        return self.edge_length[(a, b) if a < b else (b, a)]

    def degree(self, d: int) -> int:
        return len(self.neighbors[d])

    def is_connected(self) -> bool:
        seen = {0}
        frontier = [0]
        while frontier:
            d = frontier.pop()
            for j in self.neighbors[d]:
                if j not in seen:
                    seen.add(j)
                    frontier.append(j)
        return len(seen) == self.n


def _arena_side(n: int) -> int:
    return math.isqrt(n - 1) + 1 if n > 1 else 1


def _grid_positions(n: int) -> np.ndarray:
    side = _arena_side(n)
    idx = np.arange(n)
    return np.column_stack([idx % side, idx // side]).astype(float)


def _redraw_collisions(pos: np.ndarray, draw) -> np.ndarray:
    # ``draw(k)`` returns k fresh positions
    while True:
        _, first = np.unique(pos, axis=0, return_index=True)
        if len(first) == len(pos):
            return pos
        dup = np.setdiff1d(np.arange(len(pos)), first)
        pos[dup] = draw(len(dup))


def build_deployment(kind: str, n: int, seed: int = 0) -> Deployment:
    """Place ``n`` devices according to ``kind`` (grid, pgrid, uniform, exp)."""
    if kind not in DEPLOYMENT_KINDS:
        raise InvalidArgument(f"unknown deployment kind {kind!r}")
    if n < 1:
        raise InvalidArgument("a deployment needs at least one device")
    side = _arena_side(n)
    lo, hi = -0.5, side - 0.5
    rng = np.random.default_rng(seed)

    if kind == "grid":
        pos = _grid_positions(n)
    elif kind == "pgrid":
        pos = _grid_positions(n) + rng.uniform(-PGRID_JITTER, PGRID_JITTER, size=(n, 2))
    elif kind == "uniform":
        def draw(k):
            return rng.uniform(lo, hi, size=(k, 2))

        pos = _redraw_collisions(draw(n), draw)
    else:
        rate = EXP_RATE_PER_SIDE / side

        def draw(k):
            x = rng.uniform(lo, hi, size=k)
            y = np.empty(k)
            filled = 0
            while filled < k:
                cand = rng.exponential(1.0 / rate, size=k - filled)
                cand = cand[cand < side]
                y[filled:filled + len(cand)] = cand
                filled += len(cand)
            return np.column_stack([x, y + lo])

        pos = _redraw_collisions(draw(n), draw)

    return Deployment(pos, arena=(float(side), float(side)), origin=(lo, lo), kind=kind)


def _pairwise(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def build_network(deployment: Deployment, k_min: int = 8) -> NetworkGraph:
    """Connect every device to its ``k_min`` nearest peers (symmetric closure).

    Remaining components are merged by repeatedly linking the globally
    closest pair of devices lying in different components.
    """
    n = deployment.n
    if n < 1:
        raise InvalidArgument("empty deployment")
    if k_min < 1:
        raise InvalidArgument("k_min must be positive")
    pos = deployment.positions
    dist = _pairwise(pos)
    adj = np.zeros((n, n), dtype=bool)
    degenerate = k_min >= n
    if degenerate:
        if n > 1:
            warnings.warn(
                f"k_min={k_min} >= n={n}: returning the complete graph", RuntimeWarning, stacklevel=2
            )
        adj[:] = True
    else:
        # stable sort: equidistant peers are taken in id order
        order = np.argsort(dist, axis=1, kind="stable")
        for d in range(n):
            peers = [j for j in order[d] if j != d][:k_min]
            adj[d, peers] = True
        adj |= adj.T
    np.fill_diagonal(adj, False)

    while True:
        ncomp, labels = connected_components(csr_matrix(adj), directed=False)
        if ncomp <= 1:
            break
        cross = labels[:, None] != labels[None, :]
        masked = np.where(cross, dist, np.inf)
        a, b = np.unravel_index(np.argmin(masked), masked.shape)
        adj[a, b] = adj[b, a] = True

    neighbors = tuple(tuple(int(j) for j in np.flatnonzero(adj[d])) for d in range(n))
    edge_length = {
        (a, b): float(dist[a, b]) for a in range(n) for b in neighbors[a] if a < b
    }
    return NetworkGraph(deployment, neighbors, edge_length, k_min=k_min, degenerate=degenerate)


def load_stations(path) -> Deployment:
    """Read a station file of ``id,x,y`` records.

    Blank lines and lines starting with ``#`` are skipped.  Ids must be
    unique; devices are numbered ``0..n-1`` in file order and
    :func:`read_station_ids` recovers the original ids.
    """
    ids, pos = _parse_stations(path)
    return _stations_deployment(pos)


def read_station_ids(path) -> list[int]:
    """Original station ids in file order (device ``i`` is ``ids[i]``)."""
    ids, _ = _parse_stations(path)
    return ids


def _stations_deployment(pos) -> Deployment:
    pos = np.asarray(pos, dtype=float)
    lo = pos.min(axis=0)
    span = pos.max(axis=0) - lo
    width, height = span * 1.01
    origin = lo - span * 0.005
    return Deployment(pos, arena=(float(width), float(height)),
                      origin=(float(origin[0]), float(origin[1])), kind="stations")


def _parse_stations(path):
    text = Path(path).read_text(encoding="utf-8")
    ids: list[int] = []
    pos: list[tuple[float, float]] = []
    seen: set[int] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ParseError(f"expected 'id,x,y', got {raw!r}", line=lineno)
        try:
            sid = int(parts[0])
            x, y = float(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"cannot parse {raw!r}", line=lineno) from None
        if sid < 0:
            raise ParseError("station ids must be non-negative", line=lineno)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError("non-finite coordinate", line=lineno)
        if sid in seen:
            raise DuplicateDevice(f"duplicate station id {sid}", line=lineno)
        seen.add(sid)
        ids.append(sid)
        pos.append((x, y))
    if not ids:
        raise ParseError("station file contains no records")
    return ids, pos
