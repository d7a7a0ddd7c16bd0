"""Round-based execution of field programs over a static device graph.

Every event is one device running its program on the latest payload
retained from each neighbour (plus its own previous payload), producing an
output and a payload that is deposited at every neighbour and at itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Protocol

import numpy as np

from .exceptions import ConfigurationError, IncompleteSnapshot, InvalidArgument, SimulationError
from .topology import NetworkGraph

SCHEDULER_KINDS = ("sync", "async", "fixed")

DEFAULT_QUIESCENCE = 5
DEFAULT_MAX_SWEEPS = 1000
REAL_TOLERANCE = 1e-9


class Context:
    """What a device sees during one round."""

    __slots__ = ("device", "time", "round", "inbox", "sensors", "graph")

    def __init__(self, device, time, round, inbox, sensors, graph):
        self.device = device
        self.time = time
        self.round = round
        self.inbox = inbox
        self.sensors = sensors
        self.graph = graph


class FieldProgram(Protocol):
    """Anything with ``step(ctx) -> (output, payload)``.

    Programs may set ``side_records`` to the number of extra shared values
    carried next to the main payload (used for message-cost accounting).
    """

    def step(self, ctx: Context) -> tuple[Any, Any]: ...


@dataclass(frozen=True)
class Scheduler:
    """Event ordering policy.

    ``sync``: sweeps at integer times, devices fire in id order and messages
    become visible at the end of the sweep.  ``async``: independent Poisson
    clocks with ``rate`` rounds per time unit.  ``fixed``: one round every
    ``period`` with a random per-device phase offset.
    """

    kind: str = "async"
    rate: float = 1.0
    period: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULER_KINDS:
            raise InvalidArgument(f"unknown scheduler kind {self.kind!r}")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise InvalidArgument("rate must be positive")
        if not (self.period > 0 and math.isfinite(self.period)):
            raise InvalidArgument("period must be positive")

    @classmethod
    def realistic(cls, seed=0):
        """One round every half hour on average, in seconds."""
        return cls("async", rate=1 / 1800, seed=seed)

    def stream(self, n: int) -> "EventStream":
        return EventStream(self, n)


class EventStream:
    """Deterministic ``(time, device)`` event sequence of a scheduler.

    Firing times are drawn per device in blocks of ``block_rounds`` rounds
    and merged; only events no later than every device's last drawn time
    are released, so the merged order never changes as blocks are added.
    Ties are broken by device id.
    """

    def __init__(self, scheduler: Scheduler, n: int, block_rounds: int = 32):
        self.scheduler = scheduler
        self.n = n
        self.block_rounds = block_rounds
        self._rng = np.random.default_rng(scheduler.seed)
        self._k = 0
        self._last = None
        self._offset = None
        self._pend_t = np.empty(0)
        self._pend_d = np.empty(0, dtype=np.int64)

    def _draw(self) -> np.ndarray:
        s, n, K = self.scheduler, self.n, self.block_rounds
        ks = np.arange(self._k, self._k + K, dtype=float)
        if s.kind == "sync":
            times = np.broadcast_to(ks + 1.0, (n, K))
        elif s.kind == "fixed":
            if self._offset is None:
                self._offset = self._rng.uniform(0.0, s.period, size=n)
            times = self._offset[:, None] + s.period * ks[None, :]
        else:
            steps = np.cumsum(self._rng.exponential(1.0 / s.rate, size=(n, K)), axis=1)
            times = steps if self._last is None else self._last[:, None] + steps
            self._last = times[:, -1].copy()
        self._k += K
        return times

    def next_block(self) -> tuple[np.ndarray, np.ndarray]:
        times = self._draw()
        horizon = times[:, -1].min()
        all_t = np.concatenate([self._pend_t, times.ravel()])
        all_d = np.concatenate([self._pend_d, np.repeat(np.arange(self.n, dtype=np.int64), times.shape[1])])
        order = np.lexsort((all_d, all_t))
        all_t, all_d = all_t[order], all_d[order]
        cut = int(np.searchsorted(all_t, horizon, side="right"))
        self._pend_t, self._pend_d = all_t[cut:], all_d[cut:]
        return all_t[:cut], all_d[:cut]


@dataclass(frozen=True)
class Snapshot:
    values: dict[int, Any]
    taken_at: float

    def __getitem__(self, d):
        return self.values[d]

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Stabilisation:
    stabilised: bool
    time: float | None
    events: int

    def __bool__(self):
        return self.stabilised


class World:
    """Mutable state of one simulation run."""

    def __init__(
        self,
        graph: NetworkGraph,
        program: FieldProgram,
        scheduler: Scheduler | None = None,
        sensors: Callable[[int, float], Any] | None = None,
        record_trace: bool = False,
    ):
        self.graph = graph
        self.program = program
        self.scheduler = scheduler or Scheduler()
        self.sensors = sensors
        n = graph.n
        self.n = n
        self._inbox_ids = tuple(nb + (d,) for d, nb in enumerate(graph.neighbors))
        self.payloads: list[Any] = [None] * n
        self.outputs: list[Any] = [None] * n
        self.fired = [False] * n
        self.rounds = [0] * n
        self.clock = 0.0
        self.events = 0
        self.trace: list[tuple[int, int, float, Any]] | None = [] if record_trace else None
        self.output_changes = 0
        self.deposits = [0] * n
        self._stream = self.scheduler.stream(n)
        self._bt: list[float] = []
        self._bd: list[int] = []
        self._bi = 0
        self._sync = self.scheduler.kind == "sync"
        self._pending: list[tuple[int, Any]] = []
        # quiescence bookkeeping: an epoch ends at every state change
        self._epoch = 0
        self._quiet = [0] * n
        self._quiet_epoch = [-1] * n
        self.last_change_time = 0.0

    # -- messaging -------------------------------------------------------
    def inbox(self, d: int) -> dict[int, Any]:
        p = self.payloads
        return {j: p[j] for j in self._inbox_ids[d] if p[j] is not None}

    def step(self) -> tuple[int, Any]:
        """Fire the next scheduled device and return ``(device, output)``."""
        if self._bi >= len(self._bt):
            self._refill()
        i = self._bi
        t, d = self._bt[i], self._bd[i]
        self._bi = i + 1
        self.clock = t
        r = self.rounds[d]
        ctx = Context(d, t, r, self.inbox(d),
                      self.sensors(d, t) if self.sensors is not None else None, self.graph)
        try:
            out, payload = self.program.step(ctx)
        except SimulationError:
            raise
        except Exception as exc:
            raise SimulationError(f"{type(exc).__name__}: {exc}", device=d, round=r) from exc

        changed = not self.fired[d] or payload != self.payloads[d]
        if out != self.outputs[d] or not self.fired[d]:
            changed = True
            if self.fired[d]:
                self.output_changes += 1
        if self._sync:
            self._pending.append((d, payload))
        else:
            self.payloads[d] = payload
        self.outputs[d] = out
        self.fired[d] = True
        self.rounds[d] = r + 1
        self.deposits[d] += len(self._inbox_ids[d])

        if changed:
            self._epoch += 1
            self.last_change_time = t
            self._quiet_epoch[d] = self._epoch
            self._quiet[d] = 0
        elif self._quiet_epoch[d] != self._epoch:
            self._quiet_epoch[d] = self._epoch
            self._quiet[d] = 1
        else:
            self._quiet[d] += 1

        if self.trace is not None:
            self.trace.append((self.events, d, t, out))
        self.events += 1
        if self._sync and self.next_event_time() > t:
            for j, p in self._pending:
                self.payloads[j] = p
            self._pending.clear()
        return d, out

    # -- run control -----------------------------------------------------
    def _refill(self):
        t, d = self._stream.next_block()
        self._bt, self._bd, self._bi = t.tolist(), d.tolist(), 0

    def next_event_time(self) -> float:
        if self._bi >= len(self._bt):
            self._refill()
        return self._bt[self._bi]

    def run_until(self, t: float) -> None:
        """Execute every event scheduled strictly before ``t``."""
        while self.next_event_time() < t:
            self.step()
        self.clock = max(self.clock, t)

    def mark_environment_change(self) -> None:
        """Invalidate quiescence after an input change (e.g. a new signal phase)."""
        self._epoch += 1
        self.last_change_time = self.clock

    def quiescent(self, window: int) -> bool:
        """True when every device ran ``window`` rounds since the last change."""
        e = self._epoch
        qe, q = self._quiet_epoch, self._quiet
        return all(qe[d] == e and q[d] >= window for d in range(self.n))

    def run_until_stable(self, window: int, max_sweeps: int, until: float | None = None) -> Stabilisation:
        start = self.events
        check_every = self.n
        since_check = 0
        while until is None or self.next_event_time() < until:
            self.step()
            since_check += 1
            if since_check >= check_every:
                since_check = 0
                if self.quiescent(window):
                    return Stabilisation(True, self.last_change_time, self.events - start)
                if min(self.rounds) >= max_sweeps:
                    break
        if self.quiescent(window):
            return Stabilisation(True, self.last_change_time, self.events - start)
        return Stabilisation(False, None, self.events - start)

    def run_rounds(self, k: int) -> int:
        """Run until every device executed ``k`` more rounds; return output changes seen."""
        before = self.output_changes
        target = [r + k for r in self.rounds]
        remaining = set(range(self.n)) if k > 0 else set()
        while remaining:
            d, _ = self.step()
            if d in remaining and self.rounds[d] >= target[d]:
                remaining.discard(d)
        return self.output_changes - before


def step(world: World) -> tuple[int, Any]:
    return world.step()


def run_until_stable(world, quiescence_window: int = DEFAULT_QUIESCENCE,
                     max_sweeps: int = DEFAULT_MAX_SWEEPS, until: float | None = None) -> Stabilisation:
    """Run ``world`` until quiescent or until every device ran ``max_sweeps`` rounds.

    A run is quiescent once every device has executed ``quiescence_window``
    rounds since the most recent output or payload change anywhere.  With a
    deterministic program this is an exact fixed point.  ``until`` optionally
    caps the simulated time (used for per-phase runs).  The returned time is
    the instant of the last change.
    """
    if quiescence_window < 1:
        raise InvalidArgument("quiescence_window must be >= 1")
    return world.run_until_stable(quiescence_window, max_sweeps, until)


def take_snapshot(world: World) -> Snapshot:
    """Latest output of every device."""
    missing = [d for d in range(world.n) if not world.fired[d]]
    if missing:
        raise IncompleteSnapshot(f"{len(missing)} devices never fired (first: {missing[0]})")
    return Snapshot(dict(enumerate(world.outputs)), world.clock)


def outputs_equal(a, b, tol: float = REAL_TOLERANCE) -> bool:
    """Exact equality for discrete values, ``tol`` for reals."""
    if isinstance(a, float) or isinstance(b, float):
        if math.isinf(a) or math.isinf(b):
            return a == b
        return abs(a - b) <= tol
    return a == b


def snapshots_equal(s1: Snapshot, s2: Snapshot, tol: float = REAL_TOLERANCE) -> bool:
    return s1.values.keys() == s2.values.keys() and all(
        outputs_equal(s1[d], s2[d], tol) for d in s1.values
    )


def write_trace_csv(world: World, path) -> None:
    """Dump the recorded trace as ``eventIndex,time,deviceId,output``."""
    if world.trace is None:
        raise InvalidArgument("world was created without record_trace=True")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("eventIndex,time,deviceId,output\n")
        for idx, d, t, out in world.trace:
            fh.write(f"{idx},{t!r},{d},{out}\n")


class MinimisingShare:
    """Self-stabilising minimising-share program.

    Each round computes ``min(floor, min_j progress(x_j))`` over the values
    retained from neighbours (the device's own retained value is excluded
    from the fold), applies ``raising(new, previous)`` and shares the
    result.  ``top`` is the fold identity; ``output`` maps the shared value
    to the device output.
    """

    side_records = 0

    def __init__(self, initial, progress, local_floor, top=math.inf, raising=None, output=None):
        probes = [initial, top] if callable(local_floor) else [initial, top, local_floor]
        try:
            for a in probes:
                for b in probes:
                    a < b  # noqa: B015
        except TypeError as exc:
            raise ConfigurationError(f"share values must be totally ordered: {exc}") from None
        self.initial = initial
        self.progress = progress
        self.local_floor = local_floor
        self.top = top
        self.raising = raising
        self.output = output

    def step(self, ctx: Context):
        d = ctx.device
        best = self.top
        for j, v in ctx.inbox.items():
            if j == d:
                continue
            pv = self.progress(v, j, ctx)
            if pv < best:
                best = pv
        floor = self.local_floor(ctx) if callable(self.local_floor) else self.local_floor
        value = floor if floor <= best else best
        if self.raising is not None:
            value = self.raising(value, ctx.inbox.get(d, self.initial))
        out = self.output(value) if self.output is not None else value
        return out, value


def minimising_share(initial, progress, local_floor, top=math.inf, raising=None, output=None):
    """Build a :class:`MinimisingShare` program (see its docstring)."""
    return MinimisingShare(initial, progress, local_floor, top=top, raising=raising, output=output)


def round_counts(world: World) -> np.ndarray:
    return np.asarray(world.rounds)
