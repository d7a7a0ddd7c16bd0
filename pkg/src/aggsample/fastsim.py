"""Compiled execution of the region-growing sampler.

:class:`FastSamplerWorld` runs :class:`~aggsample.sampler.SamplerProgram`
semantics inside a numba kernel, consuming the same event stream as
:class:`~aggsample.runtime.World`.  Both engines perform the same float
operations in the same order, so their traces are identical; the test
suite checks this event by event.  Only the ``async`` and ``fixed``
schedulers are supported.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .exceptions import InvalidArgument, SimulationError
from .runtime import Scheduler, Stabilisation
from .sampler import Candidacy, SamplerConfig, SamplerProgram
from .topology import NetworkGraph

_METRIC = {"distance": 0, "hop": 1, "diff": 2, "mix": 3}
_STRENGTH = {"value": 0, "mean": 1, "variance": 2, "external": 3}

# kernel exit codes
END_OF_BLOCK, TIME_LIMIT, COUNT_LIMIT, STABLE, MAXED, ROUNDS_DONE, BAD_VALUE = range(7)

# integer state slots
_EPOCH, _OUT_CHANGES, _EVENTS, _SINCE_CHECK, _REMAINING, _ERR_DEV, _ERR_ROUND = range(7)
# float state slots
_CLOCK, _LAST_CHANGE = range(2)


@njit(cache=True)
def _lex_less(k1, e1, l1, k2, e2, l2):
    if k1 != k2:
        return k1 < k2
    if e1 != e2:
        return e1 < e2
    return l1 < l2


@njit(cache=True)
def _kernel(ev_t, ev_d, i0, t_stop, max_events,
            mode, window, max_sweeps, target,
            indptr, indices, elen, readings, external,
            radius, eps, metric, strength,
            fired, key, err, leader, rsh, msh, rounds, quiet, qepoch, deposits,
            ist, fst, trace_out):
    """Process events from ``i0``; returns ``(next_index, exit_code)``.

    ``mode``: 0 plain, 1 stop on quiescence/max sweeps, 2 stop when every
    device reached ``target`` rounds.
    """
    n = len(fired)
    done = 0
    i = i0
    needs_mean = strength == 1 or strength == 2
    while True:
        if i >= len(ev_t):
            return i, END_OF_BLOCK
        t = ev_t[i]
        if t >= t_stop:
            return i, TIME_LIMIT
        if done >= max_events:
            return i, COUNT_LIMIT
        d = ev_d[i]
        i += 1
        s = readings[d]
        r = rounds[d]
        fst[_CLOCK] = t
        if not math.isfinite(s):
            ist[_ERR_DEV] = d
            ist[_ERR_ROUND] = r
            return i, BAD_VALUE

        lo = indptr[d]
        hi = indptr[d + 1]
        mean = 0.0
        if strength == 0:
            st = s
        elif strength == 3:
            st = external[d]
        else:
            cnt = 0
            for q in range(lo, hi):
                j = indices[q]
                if fired[j]:
                    mean += rsh[j]
                    cnt += 1
            mean += s
            cnt += 1
            mean /= cnt
            if strength == 1:
                st = mean
            else:
                acc = 0.0
                for q in range(lo, hi):
                    j = indices[q]
                    if fired[j]:
                        dev = msh[j] - rsh[j]
                        acc += dev * dev
                dev = mean - s
                acc += dev * dev
                st = acc / cnt
        if not math.isfinite(st):
            ist[_ERR_DEV] = d
            ist[_ERR_ROUND] = r
            return i, BAD_VALUE

        bk = np.inf
        be = np.inf
        bl = np.int64(9223372036854775807)
        for q in range(lo, hi):
            j = indices[q]
            if not fired[j]:
                continue
            lj = leader[j]
            if lj == d:
                continue
            if metric == 0:
                w = elen[q]
            elif metric == 1:
                w = 1.0
            else:
                if metric == 2:
                    w = abs(rsh[j] - s)
                else:
                    w = elen[q] * abs(rsh[j] - s)
                if not (w > eps):
                    w = eps
            e = err[j] + w
            if e >= radius:
                continue
            if _lex_less(key[j], e, lj, bk, be, bl):
                bk = key[j]
                be = e
                bl = lj
        lk = -st
        if _lex_less(bk, be, bl, lk, 0.0, d):
            wk, we, wl = bk, be, bl
        else:
            wk, we, wl = lk, 0.0, np.int64(d)

        was = fired[d]
        changed = not was
        if was:
            if wk != key[d] or we != err[d] or wl != leader[d] or s != rsh[d]:
                changed = True
            elif needs_mean and mean != msh[d]:
                changed = True
            if wl != leader[d]:
                ist[_OUT_CHANGES] += 1
        key[d] = wk
        err[d] = we
        leader[d] = wl
        rsh[d] = s
        msh[d] = mean
        fired[d] = True
        rounds[d] = r + 1
        deposits[d] += hi - lo + 1

        if changed:
            ist[_EPOCH] += 1
            fst[_LAST_CHANGE] = t
            qepoch[d] = ist[_EPOCH]
            quiet[d] = 0
        elif qepoch[d] != ist[_EPOCH]:
            qepoch[d] = ist[_EPOCH]
            quiet[d] = 1
        else:
            quiet[d] += 1

        if len(trace_out) > 0:
            trace_out[done] = wl
        ist[_EVENTS] += 1
        done += 1

        if mode == 1:
            ist[_SINCE_CHECK] += 1
            if ist[_SINCE_CHECK] >= n:
                ist[_SINCE_CHECK] = 0
                if _quiescent(quiet, qepoch, ist[_EPOCH], window):
                    return i, STABLE
                lowest = rounds[0]
                for x in range(1, n):
                    if rounds[x] < lowest:
                        lowest = rounds[x]
                if lowest >= max_sweeps:
                    return i, MAXED
        elif mode == 2:
            if rounds[d] == target[d]:
                ist[_REMAINING] -= 1
                if ist[_REMAINING] == 0:
                    return i, ROUNDS_DONE


@njit(cache=True)
def _quiescent(quiet, qepoch, epoch, window):
    for x in range(len(quiet)):
        if qepoch[x] != epoch or quiet[x] < window:
            return False
    return True


class FastSamplerWorld:
    """Drop-in replacement for ``World(graph, SamplerProgram(cfg), ...)``.

    ``signal`` is a :class:`~aggsample.signals.SignalField` (phases are
    honoured) or a per-device array of static readings.
    ``record_trace`` keeps ``(event, device, time, output)`` tuples.
    """

    def __init__(self, graph: NetworkGraph, cfg: SamplerConfig, signal, scheduler: Scheduler | None = None,
                 record_trace: bool = False):
        self.graph = graph
        self.cfg = cfg
        self.program = SamplerProgram(cfg)
        self.scheduler = scheduler or Scheduler()
        if self.scheduler.kind == "sync":
            raise InvalidArgument("the compiled engine supports async and fixed schedulers only")
        n = graph.n
        self.n = n
        if hasattr(signal, "tables"):
            self._tables = [np.ascontiguousarray(t, dtype=float) for t in signal.tables]
            self._phase_len = math.inf if signal.spec.is_static else float(signal.spec.phase_length)
        else:
            arr = np.ascontiguousarray(signal, dtype=float)
            if arr.shape != (n,):
                raise InvalidArgument("need one reading per device")
            self._tables = [arr]
            self._phase_len = math.inf
        indptr = [0]
        indices: list[int] = []
        elen: list[float] = []
        for d, nb in enumerate(graph.neighbors):
            for j in nb:
                indices.append(j)
                elen.append(graph.length(d, j))
            indptr.append(len(indices))
        self._indptr = np.asarray(indptr, dtype=np.int64)
        self._indices = np.asarray(indices, dtype=np.int64)
        self._elen = np.asarray(elen, dtype=float)
        strength = cfg.strength
        if strength.kind == "external":
            ext = np.empty(n)
            for d in range(n):
                try:
                    ext[d] = float(strength.table[d])
                except KeyError:
                    raise InvalidArgument(f"no external strength for device {d}") from None
            self._external = ext
        else:
            self._external = np.zeros(1)
        self._metric = _METRIC[cfg.metric.kind]
        self._strength = _STRENGTH[strength.kind]

        self.fired = np.zeros(n, dtype=np.bool_)
        self._key = np.zeros(n)
        self._err = np.zeros(n)
        self._leader = np.full(n, -1, dtype=np.int64)
        self._rsh = np.zeros(n)
        self._msh = np.zeros(n)
        self.rounds = np.zeros(n, dtype=np.int64)
        self._quiet = np.zeros(n, dtype=np.int64)
        self._qepoch = np.full(n, -1, dtype=np.int64)
        self.deposits = np.zeros(n, dtype=np.int64)
        self._ist = np.zeros(7, dtype=np.int64)
        self._fst = np.zeros(2)
        self._stream = self.scheduler.stream(n)
        self._bt = np.empty(0)
        self._bd = np.empty(0, dtype=np.int64)
        self._bi = 0
        self._no_target = np.zeros(1, dtype=np.int64)
        self._record = record_trace
        self.trace: list | None = [] if record_trace else None

    # -- state views -----------------------------------------------------
    @property
    def clock(self) -> float:
        return float(self._fst[_CLOCK])

    @property
    def events(self) -> int:
        return int(self._ist[_EVENTS])

    @property
    def output_changes(self) -> int:
        return int(self._ist[_OUT_CHANGES])

    @property
    def last_change_time(self) -> float:
        return float(self._fst[_LAST_CHANGE])

    @property
    def outputs(self) -> list:
        return [int(x) if f else None for x, f in zip(self._leader, self.fired)]

    @property
    def payloads(self) -> list:
        needs_mean = self.cfg.strength.needs_readings
        out = []
        for d in range(self.n):
            if not self.fired[d]:
                out.append(None)
                continue
            c = Candidacy(float(self._key[d]), float(self._err[d]), int(self._leader[d]))
            out.append((c, float(self._rsh[d]), float(self._msh[d]) if needs_mean else None))
        return out

    # -- driving ---------------------------------------------------------
    def _phase_end(self, t: float) -> float:
        if math.isinf(self._phase_len):
            return math.inf
        return (t // self._phase_len + 1) * self._phase_len

    def _readings_for(self, t: float) -> np.ndarray:
        if len(self._tables) == 1:
            return self._tables[0]
        return self._tables[int(t // self._phase_len) % len(self._tables)]

    def next_event_time(self) -> float:
        if self._bi >= len(self._bt):
            self._bt, self._bd = self._stream.next_block()
            self._bi = 0
        return float(self._bt[self._bi])

    def _run(self, mode: int, until: float, max_events: int, window: int = 1, max_sweeps: int = 0,
             target=None):
        """Drive the kernel across blocks and phases; returns the last exit code."""
        target = self._no_target if target is None else target
        done = 0
        while True:
            t_next = self.next_event_time()
            if t_next >= until:
                return TIME_LIMIT
            stop = min(until, self._phase_end(t_next))
            trace_buf = np.empty(0, dtype=np.int64)
            if self._record:
                trace_buf = np.empty(len(self._bt) - self._bi, dtype=np.int64)
            start_i, start_events = self._bi, self.events
            self._bi, code = _kernel(
                self._bt, self._bd, self._bi, stop, max_events - done,
                mode, window, max_sweeps, target,
                self._indptr, self._indices, self._elen, self._readings_for(t_next), self._external,
                self.cfg.radius, self.cfg.metric.epsilon, self._metric, self._strength,
                self.fired, self._key, self._err, self._leader, self._rsh, self._msh,
                self.rounds, self._quiet, self._qepoch, self.deposits,
                self._ist, self._fst, trace_buf)
            processed = self.events - start_events
            if self._record:
                for k in range(processed):
                    idx = start_i + k
                    self.trace.append((start_events + k, int(self._bd[idx]), float(self._bt[idx]),
                                       int(trace_buf[k])))
            done += processed
            if code == BAD_VALUE:
                raise SimulationError("non-finite reading or strength", device=int(self._ist[_ERR_DEV]),
                                      round=int(self._ist[_ERR_ROUND]))
            if code == END_OF_BLOCK:
                continue
            if code == TIME_LIMIT and stop < until:
                continue
            return code

    def step(self):
        self._run(0, math.inf, 1)
        d = int(self._bd[self._bi - 1])
        return d, int(self._leader[d])

    def run_until(self, t: float) -> None:
        self._run(0, t, np.iinfo(np.int64).max)
        self._fst[_CLOCK] = max(self.clock, t)

    def mark_environment_change(self) -> None:
        self._ist[_EPOCH] += 1
        self._fst[_LAST_CHANGE] = self.clock

    def quiescent(self, window: int) -> bool:
        return bool(_quiescent(self._quiet, self._qepoch, self._ist[_EPOCH], window))

    def run_until_stable(self, window: int, max_sweeps: int, until: float | None = None) -> Stabilisation:
        start = self.events
        self._ist[_SINCE_CHECK] = 0
        code = self._run(1, math.inf if until is None else until, np.iinfo(np.int64).max,
                         window=window, max_sweeps=max_sweeps)
        if code == STABLE or self.quiescent(window):
            return Stabilisation(True, self.last_change_time, self.events - start)
        return Stabilisation(False, None, self.events - start)

    def run_rounds(self, k: int) -> int:
        before = self.output_changes
        if k <= 0:
            return 0
        target = self.rounds + k
        self._ist[_REMAINING] = self.n
        self._run(2, math.inf, np.iinfo(np.int64).max, target=target)
        return self.output_changes - before
