"""Spatial phenomena sampled by the devices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgument, ParseError
from .topology import Deployment

SIGNAL_KINDS = ("constant", "uniform", "gauss", "multigauss", "dynamic")

DEFAULT_AMPLITUDE = 10.0
DEFAULT_CONSTANT = 1.0
DEFAULT_PHASE_LENGTH = 300.0


@dataclass(frozen=True)
class SignalSpec:
    """Description of a signal.

    ``spread=None`` means a quarter of the arena side.  For ``dynamic``,
    ``phases`` lists the static specs cycled every ``phase_length``.
    """

    kind: str
    value: float = DEFAULT_CONSTANT
    amplitude: float = DEFAULT_AMPLITUDE
    spread: float | None = None
    center: tuple[float, float] | None = None
    phases: tuple["SignalSpec", ...] = ()
    phase_length: float = DEFAULT_PHASE_LENGTH

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS + ("recorded",):
            raise InvalidArgument(f"unknown signal kind {self.kind!r}")
        for name in ("value", "amplitude", "phase_length"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgument(f"signal {name} must be finite")
        if self.spread is not None and not (math.isfinite(self.spread) and self.spread > 0):
            raise InvalidArgument("spread must be positive")
        if self.kind == "dynamic":
            if not self.phases:
                raise InvalidArgument("dynamic signal needs at least one phase")
            if self.phase_length <= 0:
                raise InvalidArgument("phase_length must be positive")
            if any(p.kind == "dynamic" for p in self.phases):
                raise InvalidArgument("dynamic phases cannot nest")

    @property
    def is_static(self) -> bool:
        return self.kind != "dynamic"


def constant(value=DEFAULT_CONSTANT) -> SignalSpec:
    return SignalSpec("constant", value=value)


def uniform() -> SignalSpec:
    return SignalSpec("uniform")


def gauss(amplitude=DEFAULT_AMPLITUDE, spread=None, center=None) -> SignalSpec:
    return SignalSpec("gauss", amplitude=amplitude, spread=spread, center=center)


def multigauss(amplitude=DEFAULT_AMPLITUDE, spread=None) -> SignalSpec:
    return SignalSpec("multigauss", amplitude=amplitude, spread=spread)


def dynamic(*phases: SignalSpec, phase_length=DEFAULT_PHASE_LENGTH) -> SignalSpec:
    return SignalSpec("dynamic", phases=tuple(phases), phase_length=phase_length)


def _bell(pos, center, spread, amplitude):
    d2 = ((pos - np.asarray(center)) ** 2).sum(axis=-1)
    return amplitude * np.exp(-d2 / (2 * spread ** 2))


@dataclass(frozen=True)
class SignalField:
    """A signal bound to a deployment.

    Values are precomputed per device and per phase, so reading a sensor is
    a table lookup; :meth:`evaluate` works at arbitrary positions for the
    position-based kinds.
    """

    spec: SignalSpec
    deployment: Deployment
    seed: int
    # one (n,) array per phase; a single entry for static specs
    tables: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def phase_length(self) -> float:
        return self.spec.phase_length

    @property
    def n_phases(self) -> int:
        return len(self.tables)

    def phase_at(self, t: float) -> int:
        if self.spec.is_static:
            return 0
        return int(t // self.spec.phase_length) % len(self.tables)

    def phase_start(self, index: int) -> float:
        """Start time of the ``index``-th phase occurrence (not wrapped)."""
        return 0.0 if self.spec.is_static else index * self.spec.phase_length

    def values(self, t: float = 0.0) -> np.ndarray:
        """Per-device readings at time ``t``."""
        return self.tables[self.phase_at(t)]

    def read(self, device: int, t: float = 0.0) -> float:
        return float(self.tables[self.phase_at(t)][device])

    def evaluate(self, xy, t: float = 0.0) -> float:
        spec = self.spec
        if not spec.is_static:
            spec = spec.phases[self.phase_at(t)]
        if spec.kind in ("uniform", "recorded"):
            raise InvalidArgument(f"{spec.kind} signals are defined per device, use read()")
        return float(_static_values(spec, self.deployment, np.asarray([xy], dtype=float), self.seed)[0])

    def pooled_std(self) -> float:
        """Population standard deviation over all devices and phases."""
        return float(np.concatenate(self.tables).std())


def _static_values(spec: SignalSpec, dep: Deployment, pos: np.ndarray, seed: int) -> np.ndarray:
    side = max(dep.arena)
    spread = spec.spread if spec.spread is not None else side / 4
    if spec.kind == "constant":
        return np.full(len(pos), float(spec.value))
    if spec.kind == "uniform":
        return np.random.default_rng([seed, 0x5167]).random(len(pos))
    if spec.kind == "gauss":
        center = spec.center if spec.center is not None else dep.center
        return _bell(pos, center, spread, spec.amplitude)
    if spec.kind == "multigauss":
        (x0, y0), (w, h) = dep.origin, dep.arena
        centers = [(x0, y0), dep.center, (x0 + w, y0 + h)]
        return sum(_bell(pos, c, spread, spec.amplitude / 3) for c in centers)
    raise InvalidArgument(f"{spec.kind!r} is not a static signal")


def make_signal(spec: SignalSpec, deployment: Deployment, seed: int = 0) -> SignalField:
    """Bind ``spec`` to ``deployment``.

    Uniform draws are one per device, fixed for the run and keyed by
    ``seed``; each phase of a dynamic signal gets its own draw.
    """
    pos = deployment.positions
    if spec.is_static:
        tables = (_static_values(spec, deployment, pos, seed),)
    else:
        tables = tuple(
            _static_values(p, deployment, pos, seed + 7919 * i) for i, p in enumerate(spec.phases)
        )
    for t in tables:
        t.setflags(write=False)
    return SignalField(spec, deployment, seed, tables)


def read_sensor(field_: SignalField, device: int, deployment: Deployment, t: float = 0.0) -> float:
    if not 0 <= device < deployment.n:
        raise InvalidArgument(f"device {device} not in deployment")
    return field_.read(device, t)


def recorded_signal(values, deployment: Deployment) -> SignalField:
    """Wrap per-device recorded readings as a static signal field."""
    arr = np.asarray(values, dtype=float)
    if arr.shape != (deployment.n,):
        raise InvalidArgument("need exactly one reading per device")
    arr.setflags(write=False)
    return SignalField(SignalSpec("recorded"), deployment, 0, (arr,))


def load_signal_csv(path, station_ids) -> np.ndarray:
    """Read an ``id,value`` file and order the readings like ``station_ids``."""
    index = {sid: i for i, sid in enumerate(station_ids)}
    out = np.full(len(station_ids), np.nan)
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 'id,value', got {raw!r}", line=lineno)
        try:
            sid, val = int(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(f"cannot parse {raw!r}", line=lineno) from None
        if sid not in index:
            raise ParseError(f"unknown station id {sid}", line=lineno)
        out[index[sid]] = val
    missing = [station_ids[i] for i in np.flatnonzero(np.isnan(out))]
    if missing:
        raise ParseError(f"no reading for stations {missing[:5]}")
    return out
