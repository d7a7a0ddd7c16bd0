"""Partitions, evaluation metrics and the formal-property verifiers."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .exceptions import IncompleteSnapshot, InvalidArgument, MalformedPartition
from .runtime import Snapshot
from .sampler import EdgeMetric
from .topology import NetworkGraph

METRICS_HEADER = (
    "seed,deployment,signal,strength,metric,eta,time,regions,mean_size,sigma_mu,mu_sigma,sigma_sigma"
)


@dataclass(frozen=True)
class RegionPartition:
    leader_of: dict[int, int]
    regions: dict[int, frozenset[int]]

    @property
    def region_count(self) -> int:
        return len(self.regions)

    def region_of(self, d: int) -> frozenset[int]:
        return self.regions[self.leader_of[d]]


@dataclass(frozen=True)
class Verdict:
    """Outcome of a verifier; truthy when the property holds."""

    ok: bool
    violations: list = field(default_factory=list)
    worst: Any = None

    def __bool__(self):
        return self.ok


def extract_partition(snapshot: Snapshot, graph: NetworkGraph | None = None, strict: bool = True) -> RegionPartition:
    """Group devices by the leader id they output.

    With ``strict`` every leader must lead itself, otherwise
    :class:`MalformedPartition` is raised (the snapshot is not a fixed point).
    """
    values = snapshot.values
    if graph is not None and len(values) != graph.n:
        raise IncompleteSnapshot(f"snapshot has {len(values)} entries for {graph.n} devices")
    groups: dict[int, set[int]] = defaultdict(set)
    for d, leader in values.items():
        if leader is None:
            raise IncompleteSnapshot(f"device {d} has no output")
        groups[leader].add(d)
    if strict:
        bad = sorted(ld for ld in groups if values.get(ld) != ld)
        if bad:
            raise MalformedPartition(f"leaders not leading themselves: {bad[:10]}")
    return RegionPartition(dict(values), {ld: frozenset(m) for ld, m in sorted(groups.items())})


def check_contiguity(p: RegionPartition, g: NetworkGraph) -> Verdict:
    """Every region must induce a connected subgraph; violations list leaders."""
    bad = []
    for leader, members in p.regions.items():
        start = next(iter(members))
        seen = {start}
        stack = [start]
        while stack:
            d = stack.pop()
            for j in g.neighbors[d]:
                if j in members and j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != len(members):
            bad.append(leader)
    return Verdict(not bad, bad)


@dataclass(frozen=True)
class MetricsRow:
    region_count: int
    mean_region_size: float
    sigma_of_means: float
    mean_of_sigmas: float
    sigma_of_sigmas: float
    time: float = 0.0


def partition_metrics(p: RegionPartition, signals, time: float = 0.0) -> MetricsRow:
    """Region count, mean size and the spread statistics of region means/deviations.

    All standard deviations are population ones (divide by the count).
    """
    sig = np.asarray(signals, dtype=float)
    means = []
    sigmas = []
    sizes = []
    for members in p.regions.values():
        vals = sig[sorted(members)]
        mu = vals.mean()
        means.append(mu)
        sigmas.append(math.sqrt(((vals - mu) ** 2).mean()))
        sizes.append(len(vals))
    means = np.asarray(means)
    sigmas = np.asarray(sigmas)
    r = len(sizes)
    return MetricsRow(
        region_count=r,
        mean_region_size=sum(sizes) / r,
        sigma_of_means=float(np.sqrt(((means - means.mean()) ** 2).mean())),
        mean_of_sigmas=float(sigmas.mean()),
        sigma_of_sigmas=float(np.sqrt(((sigmas - sigmas.mean()) ** 2).mean())),
        time=time,
    )


class PathErrorOracle:
    """Shortest-path sampling error over the whole network.

    Edge weights come from ``metric`` evaluated on the static ``signals``.
    Distances are computed with Dijkstra and cached.
    """

    def __init__(self, graph: NetworkGraph, metric: EdgeMetric = EdgeMetric(), signals=None):
        self.graph = graph
        self.metric = metric
        n = graph.n
        sig = np.zeros(n) if signals is None else np.asarray(signals, dtype=float)
        if metric.needs_readings and not np.all(np.isfinite(sig)):
            raise InvalidArgument("non-finite signal values")
        rows, cols, w = [], [], []
        for (a, b), length in graph.edge_length.items():
            wt = metric.weight(length, sig[a], sig[b])
            rows += [a, b]
            cols += [b, a]
            w += [wt, wt]
        self.weights = {(a, b): wt for a, b, wt in zip(rows, cols, w)}
        self._csr = csr_matrix((np.asarray(w, dtype=float), (rows, cols)), shape=(n, n))
        self._all = None
        self._single: dict[int, np.ndarray] = {}

    def weight(self, a: int, b: int) -> float:
        return 0.0 if a == b else self.weights[(a, b)]

    def all_pairs(self) -> np.ndarray:
        if self._all is None:
            self._all = dijkstra(self._csr, directed=False)
        return self._all

    def from_source(self, a: int) -> np.ndarray:
        if self._all is not None:
            return self._all[a]
        if a not in self._single:
            self._single[a] = dijkstra(self._csr, directed=False, indices=a)
        return self._single[a]

    def from_sources(self, sources) -> np.ndarray:
        """Distance of every device to the nearest of ``sources``."""
        sources = list(sources)
        if not sources:
            return np.full(self.graph.n, np.inf)
        return dijkstra(self._csr, directed=False, indices=sources, min_only=True)


def path_error(oracle: PathErrorOracle, a: int, b: int) -> float:
    if a == b:
        return 0.0
    return float(oracle.from_source(a)[b])


def region_error(oracle: PathErrorOracle, region) -> float:
    """Largest path error between any two devices of ``region``."""
    idx = np.asarray(sorted(region))
    if len(idx) == 0:
        raise InvalidArgument("empty region")
    if len(idx) == 1:
        return 0.0
    return float(oracle.all_pairs()[np.ix_(idx, idx)].max())


def verify_within_error(p: RegionPartition, oracle: PathErrorOracle, eta: float) -> Verdict:
    """Every region's error must be at most ``eta``; ``worst`` is (leader, error)."""
    worst = (None, -1.0)
    bad = []
    for leader, members in p.regions.items():
        err = region_error(oracle, members)
        if err > worst[1]:
            worst = (leader, err)
        if err > eta:
            bad.append((leader, err))
    return Verdict(not bad, bad, worst)


def contiguous_pairs(p: RegionPartition, g: NetworkGraph) -> list[tuple[int, int]]:
    """Pairs of leaders whose regions share at least one edge."""
    pairs = set()
    lo = p.leader_of
    for a, b in g.edge_length:
        la, lb = lo[a], lo[b]
        if la != lb:
            pairs.add((la, lb) if la < lb else (lb, la))
    return sorted(pairs)


def verify_local_optimality(p: RegionPartition, oracle: PathErrorOracle, eta: float, k: float = 0.5) -> Verdict:
    """Merging any two contiguous regions must give error at least ``k * eta``.

    Violations are ``(leader_a, leader_b, union_error)`` triples.
    """
    D = oracle.all_pairs()
    idx = {ld: np.asarray(sorted(m)) for ld, m in p.regions.items()}
    own = {ld: (float(D[np.ix_(ix, ix)].max()) if len(ix) > 1 else 0.0) for ld, ix in idx.items()}
    bad = []
    threshold = k * eta
    for la, lb in contiguous_pairs(p, oracle.graph):
        union = max(own[la], own[lb], float(D[np.ix_(idx[la], idx[lb])].max()))
        if union < threshold:
            bad.append((la, lb, union))
    return Verdict(not bad, bad)


def verify_follower_bounds(p: RegionPartition, candidacies, oracle: PathErrorOracle, radius: float) -> Verdict:
    """Check the accumulated error of every follower.

    It must be below ``radius`` and no smaller than the oracle's shortest
    path error from its leader.  Leaders must hold their own candidacy at
    error 0.  Violations are ``(device, leader, accumulated, oracle)``.
    """
    bad = []
    tol = 1e-9
    for d, leader in p.leader_of.items():
        c = candidacies[d]
        if c is None or c[2] != leader:
            bad.append((d, leader, None, None))
            continue
        if d == leader:
            if c[1] != 0.0:
                bad.append((d, leader, c[1], 0.0))
            continue
        ref = path_error(oracle, leader, d)
        if not (c[1] < radius and c[1] >= ref - tol * max(1.0, ref)):
            bad.append((d, leader, c[1], ref))
    return Verdict(not bad, bad)


@dataclass(frozen=True)
class MessageCost:
    """Per-round deposit statistics.

    ``deposits_*`` count candidacy records delivered per round by one
    device (neighbours plus itself); ``side_records`` the extra shared
    values per record (readings, means) required by strength or metric.
    """

    deposits_mean: float
    deposits_max: float
    side_records: int
    total_records: int

    @property
    def records_per_round_mean(self) -> float:
        return self.deposits_mean * (1 + self.side_records)


def message_cost(world) -> MessageCost:
    rounds = np.asarray(world.rounds, dtype=float)
    if not np.all(rounds > 0):
        raise InvalidArgument("every device must have fired at least once")
    per = np.asarray(world.deposits, dtype=float) / rounds
    side = int(getattr(world.program, "side_records", 0))
    total = int(sum(world.deposits)) * (1 + side)
    return MessageCost(float(per.mean()), float(per.max()), side, total)
