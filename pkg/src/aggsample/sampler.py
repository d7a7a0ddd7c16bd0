"""Leader-based region growing, the gradient operator, strengths and metrics.

A candidacy is the triple ``(key, error, leader)`` where ``key`` is the
negated leader strength: the lexicographic minimum is the strongest
leader, then the closest one, then the smallest id.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from .exceptions import ConfigurationError, InvalidArgument, SimulationError
from .runtime import Context, MinimisingShare

STRENGTH_KINDS = ("value", "mean", "variance", "external")
METRIC_KINDS = ("distance", "diff", "mix", "hop")

DEFAULT_EPSILON = 1e-6
# larger than any device id
DISCARD_ID = 2 ** 63 - 1

INF = math.inf


class Candidacy(NamedTuple):
    key: float
    error: float
    leader: int


DISCARD = Candidacy(INF, INF, DISCARD_ID)


def discard_candidacy() -> Candidacy:
    """The maximum of the candidacy order."""
    return DISCARD


def expansion_logic(c, self_id: int, radius: float):
    """Drop candidacies that echo our own or reached the radius."""
    if c[2] == self_id or c[1] >= radius:
        return DISCARD
    return c


@dataclass(frozen=True)
class StrengthPolicy:
    kind: str = "value"
    table: Mapping[int, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in STRENGTH_KINDS:
            raise InvalidArgument(f"unknown strength policy {self.kind!r}")
        if self.kind == "external" and self.table is None:
            raise ConfigurationError("external strength needs a table")

    @property
    def needs_readings(self) -> bool:
        return self.kind in ("mean", "variance")


@dataclass(frozen=True)
class EdgeMetric:
    """Local sampling distance between neighbours.

    ``diff`` is ``max(eps, |s_a - s_b|)`` and ``mix`` is
    ``max(eps, length * |s_a - s_b|)``: every distinct pair costs at least
    ``eps``, which bounds how long stale candidacies can circulate.
    ``hop`` (one per edge) is provided for textbook gradient examples.
    """

    kind: str = "distance"
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise InvalidArgument(f"unknown metric {self.kind!r}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidArgument("epsilon must be a positive real")

    @property
    def needs_readings(self) -> bool:
        return self.kind in ("diff", "mix")

    def weight(self, length: float, s_a: float, s_b: float) -> float:
        """Edge weight for two distinct neighbours."""
        kind = self.kind
        if kind == "distance":
            return length
        if kind == "hop":
            return 1.0
        if kind == "diff":
            w = abs(s_a - s_b)
        else:
            w = length * abs(s_a - s_b)
        return w if w > self.epsilon else self.epsilon


def edge_error(metric: EdgeMetric, a: int, b: int, positions, signals) -> float:
    """Sampling distance between devices ``a`` and ``b`` (0 on the diagonal)."""
    if a == b:
        return 0.0
    sa, sb = float(signals[a]), float(signals[b])
    if metric.needs_readings and not (math.isfinite(sa) and math.isfinite(sb)):
        raise InvalidArgument(f"non-finite signal on edge ({a}, {b})")
    pa, pb = positions[a], positions[b]
    length = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
    return metric.weight(length, sa, sb)


def leader_strength(policy: StrengthPolicy, self_id: int, readings: Mapping[int, float],
                    means: Mapping[int, float] | None = None) -> float:
    """Strength of ``self_id`` given readings from its neighbourhood (self included).

    ``variance`` additionally needs the neighbourhood means shared by the
    neighbours; a neighbour without a known mean is left out.
    """
    kind = policy.kind
    if kind == "value":
        return float(readings[self_id])
    if kind == "external":
        try:
            return float(policy.table[self_id])
        except KeyError:
            raise ConfigurationError(f"no external strength for device {self_id}") from None
    if not readings:
        raise InvalidArgument("readings must contain the device itself")
    own_mean = 0.0
    for v in readings.values():
        own_mean += v
    own_mean /= len(readings)
    if kind == "mean":
        return own_mean
    means = dict(means or {})
    means[self_id] = own_mean
    total = 0.0
    count = 0
    for i, s in readings.items():
        if i in means:
            dev = means[i] - s
            total += dev * dev
            count += 1
    return total / count


@dataclass(frozen=True)
class SamplerConfig:
    radius: float
    strength: StrengthPolicy = StrengthPolicy()
    metric: EdgeMetric = EdgeMetric()

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InvalidArgument("radius must be a positive real")

    @classmethod
    def from_eta(cls, eta: float, strength=StrengthPolicy(), metric=EdgeMetric()):
        """Use half the admissible region error as expansion radius."""
        return cls(eta / 2, strength, metric)

    @property
    def eta(self) -> float:
        return 2 * self.radius


def _length_table(graph):
    return [
        {j: graph.length(d, j) for j in nb} for d, nb in enumerate(graph.neighbors)
    ]


class SamplerProgram:
    """Region-growing sampler.

    Sensors: the device's current reading (a float).  Payload:
    ``(candidacy, reading, neighbourhood_mean)``; the device output is the
    leader id of the winning candidacy.
    """

    def __init__(self, cfg: SamplerConfig):
        self.cfg = cfg
        self.radius = cfg.radius
        self.metric = cfg.metric
        self.strength = cfg.strength
        self.side_records = int(cfg.metric.needs_readings or cfg.strength.needs_readings) + int(
            cfg.strength.kind == "variance")
        self._graph = None
        self._lengths = None

    def _bind(self, graph):
        self._graph = graph
        self._lengths = _length_table(graph)

    def step(self, ctx: Context):
        if ctx.graph is not self._graph:
            self._bind(ctx.graph)
        d = ctx.device
        s = ctx.sensors
        if s is None or not math.isfinite(s):
            raise SimulationError(f"non-finite reading {s!r}", device=d, round=ctx.round)
        nbrs = [(j, p) for j, p in ctx.inbox.items() if j != d]

        kind = self.strength.kind
        mean = None
        if kind == "value":
            strength = s
        elif kind == "external":
            strength = leader_strength(self.strength, d, {d: s})
        else:
            readings = {j: p[1] for j, p in nbrs}
            readings[d] = s
            means = {j: p[2] for j, p in nbrs if p[2] is not None}
            mean = 0.0
            for v in readings.values():
                mean += v
            mean /= len(readings)
            strength = mean if kind == "mean" else leader_strength(self.strength, d, readings, means)
        if not math.isfinite(strength):
            raise SimulationError(f"non-finite strength {strength!r}", device=d, round=ctx.round)

        local = Candidacy(-strength, 0.0, d)
        radius = self.radius
        metric = self.metric
        mkind = metric.kind
        lengths = self._lengths[d]
        best = DISCARD
        for j, p in nbrs:
            key, err, leader = p[0]
            if leader == d:
                continue
            if mkind == "distance":
                err += lengths[j]
            else:
                w = metric.weight(lengths[j], p[1], s)
                if not math.isfinite(w):
                    raise SimulationError(f"non-finite metric towards {j}", device=d, round=ctx.round)
                err += w
            if err >= radius:
                continue
            c = (key, err, leader)
            if c < best:
                best = c
        win = local if local <= best else Candidacy(*best)
        return win.leader, (win, s, mean)


def sampler_program(cfg: SamplerConfig) -> SamplerProgram:
    return SamplerProgram(cfg)


def sampler_as_share(cfg: SamplerConfig) -> MinimisingShare:
    """The sampler written with the generic minimising-share combinator.

    Only strength ``value``/``external`` with metrics that need no shared
    readings are expressible this way (payloads carry bare candidacies).
    """
    if cfg.metric.needs_readings or cfg.strength.needs_readings:
        raise ConfigurationError("share form supports value/external strength with distance/hop metrics")
    def progress(c, sender, ctx):
        d = ctx.device
        w = cfg.metric.weight(ctx.graph.length(sender, d), 0.0, 0.0)
        return expansion_logic(Candidacy(c[0], c[1] + w, c[2]), d, cfg.radius)

    def floor(ctx):
        strength = ctx.sensors if cfg.strength.kind == "value" else leader_strength(
            cfg.strength, ctx.device, {ctx.device: ctx.sensors})
        return Candidacy(-strength, 0.0, ctx.device)

    return MinimisingShare(DISCARD, progress, floor, top=DISCARD, output=lambda c: c[2])


class GradientProgram:
    """Distance-to-source estimate: 0 at sources, else min over neighbours.

    Payload is ``(estimate, reading)``; output the estimate.
    """

    def __init__(self, is_source: Mapping[int, bool], metric: EdgeMetric = EdgeMetric()):
        self.is_source = is_source
        self.metric = metric
        self.side_records = int(metric.needs_readings)
        self._graph = None
        self._lengths = None

    def step(self, ctx: Context):
        if ctx.graph is not self._graph:
            self._graph = ctx.graph
            self._lengths = _length_table(ctx.graph)
        d = ctx.device
        s = ctx.sensors
        if self.is_source.get(d, False):
            g = 0.0
        else:
            g = INF
            lengths = self._lengths[d]
            weight = self.metric.weight
            for j, p in ctx.inbox.items():
                if j == d:
                    continue
                v = p[0] + weight(lengths[j], p[1], s)
                if v < g:
                    g = v
        return g, (g, s)


def gradient_program(is_source: Mapping[int, bool], metric: EdgeMetric = EdgeMetric()) -> GradientProgram:
    return GradientProgram(is_source, metric)


def gradient_as_share(is_source: Mapping[int, bool], metric: EdgeMetric = EdgeMetric()) -> MinimisingShare:
    """Gradient via :class:`MinimisingShare`, for distance/hop metrics."""
    if metric.needs_readings:
        raise ConfigurationError("share-form gradient supports distance/hop metrics only")

    def progress(g, sender, ctx):
        return g + metric.weight(ctx.graph.length(sender, ctx.device), 0.0, 0.0)

    def floor(ctx):
        return 0.0 if is_source.get(ctx.device, False) else INF

    return MinimisingShare(INF, progress, floor, top=INF)


def winning_candidacies(world) -> list[Candidacy]:
    """Current winning candidacy of every device of a sampler world."""
    return [p[0] if p is not None else None for p in world.payloads]
