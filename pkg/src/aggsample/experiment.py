"""Experiment configuration, single runs and parameter sweeps.

Config files are INI-style with one ``[experiment]`` section::

    [experiment]
    deployment = grid, uniform
    n = 200
    signal = gauss
    strength = value
    metric = distance, diff
    eta = auto
    seeds = 1..10

Keys ``deployment``, ``signal``, ``strength`` and ``metric`` accept
comma-separated lists; a sweep runs their Cartesian product for every seed.
See ``CONFIG_KEYS`` for the full list and defaults.
"""
from __future__ import annotations

import configparser
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import (
    METRICS_HEADER,
    MetricsRow,
    PathErrorOracle,
    RegionPartition,
    Verdict,
    check_contiguity,
    extract_partition,
    partition_metrics,
    verify_follower_bounds,
    verify_local_optimality,
    verify_within_error,
)
from .exceptions import ConfigurationError, MalformedPartition, ParseError
from .runtime import SCHEDULER_KINDS, Scheduler, Stabilisation, World, take_snapshot, write_trace_csv
from .sampler import (
    METRIC_KINDS,
    STRENGTH_KINDS,
    EdgeMetric,
    SamplerConfig,
    SamplerProgram,
    StrengthPolicy,
    winning_candidacies,
)
from .signals import SIGNAL_KINDS, SignalSpec, load_signal_csv, make_signal, recorded_signal
from .topology import DEPLOYMENT_KINDS, build_deployment, build_network, load_stations, read_station_ids

STATIC_SIGNALS = ("constant", "uniform", "gauss", "multigauss")
ENGINES = ("auto", "compiled", "reference")

# key -> default (None means required or derived)
CONFIG_KEYS = {
    "deployment": None,
    "n": 200,
    "k_min": 8,
    "stations": None,
    "signal": None,
    "signal_value": 1.0,
    "amplitude": 10.0,
    "spread": "auto",
    "phases": None,
    "phase_length": 300.0,
    "cycles": 1,
    "signal_file": None,
    "strength": "value",
    "strength_file": None,
    "metric": "distance",
    "epsilon": "auto",
    "eta": "auto",
    "scheduler": "async",
    "rate": 1.0,
    "period": 1.0,
    "seeds": None,
    "max_sweeps": 1000,
    "quiescence_window": 5,
    "confirm_rounds": 100,
    "sample_interval": 10.0,
    "engine": "auto",
    "out_dir": "results",
    "trace": False,
}

# η for the unit-spacing synthetic arenas, in metric units
DISTANCE_ETA = 16.0
HOP_ETA = 4.0
# used in place of a zero signal deviation
FLAT_SIGMA = 0.5
EPSILON_PER_ETA = 1 / 200


@dataclass(frozen=True)
class ExperimentConfig:
    deployments: tuple[str, ...]
    signals: tuple[str, ...]
    strengths: tuple[str, ...] = ("value",)
    metrics: tuple[str, ...] = ("distance",)
    seeds: tuple[int, ...] = (0,)
    n: int = 200
    k_min: int = 8
    stations: str | None = None
    signal_value: float = 1.0
    amplitude: float = 10.0
    spread: float | None = None
    phases: tuple[str, ...] = ()
    phase_length: float = 300.0
    cycles: int = 1
    signal_file: str | None = None
    strength_file: str | None = None
    epsilon: float | None = None
    eta: float | None = None
    scheduler: str = "async"
    rate: float = 1.0
    period: float = 1.0
    max_sweeps: int = 1000
    quiescence_window: int = 5
    confirm_rounds: int = 100
    sample_interval: float = 10.0
    engine: str = "auto"
    out_dir: str = "results"
    trace: bool = False

    def __post_init__(self):
        _validate(self)

    def cells(self) -> list[tuple[str, str, str, str]]:
        """Every (deployment, signal, strength, metric) combination."""
        return list(itertools.product(self.deployments, self.signals, self.strengths, self.metrics))

    def cell(self, deployment, signal, strength, metric) -> "ExperimentConfig":
        return replace(self, deployments=(deployment,), signals=(signal,), strengths=(strength,),
                       metrics=(metric,))

    @property
    def is_single(self) -> bool:
        return len(self.cells()) == 1


def _fail(key, message):
    raise ParseError(message, key=key)


def _validate(c: ExperimentConfig) -> None:
    enums = [
        ("deployment", c.deployments, DEPLOYMENT_KINDS + ("stations",)),
        ("signal", c.signals, SIGNAL_KINDS + ("recorded",)),
        ("strength", c.strengths, STRENGTH_KINDS),
        ("metric", c.metrics, METRIC_KINDS),
        ("phases", c.phases, STATIC_SIGNALS),
    ]
    for key, values, allowed in enums:
        if key != "phases" and not values:
            _fail(key, "needs at least one value")
        for v in values:
            if v not in allowed:
                _fail(key, f"invalid value {v!r} (allowed: {', '.join(allowed)})")
    if c.scheduler not in SCHEDULER_KINDS:
        _fail("scheduler", f"invalid value {c.scheduler!r}")
    if c.engine not in ENGINES:
        _fail("engine", f"invalid value {c.engine!r}")
    if not c.seeds:
        _fail("seeds", "needs at least one seed")
    if c.eta is not None and not (c.eta > 0 and math.isfinite(c.eta)):
        _fail("eta", "must be a positive real or 'auto'")
    if c.epsilon is not None and not (c.epsilon > 0 and math.isfinite(c.epsilon)):
        _fail("epsilon", "must be a positive real or 'auto'")
    positive = [("n", c.n), ("k_min", c.k_min), ("phase_length", c.phase_length), ("cycles", c.cycles),
                ("rate", c.rate), ("period", c.period), ("max_sweeps", c.max_sweeps),
                ("quiescence_window", c.quiescence_window), ("sample_interval", c.sample_interval),
                ("amplitude", c.amplitude)]
    for key, v in positive:
        if not (v > 0 and math.isfinite(v)):
            _fail(key, "must be positive")
    if c.spread is not None and not (c.spread > 0 and math.isfinite(c.spread)):
        _fail("spread", "must be positive or 'auto'")
    if c.confirm_rounds < 0:
        _fail("confirm_rounds", "must be non-negative")
    if "dynamic" in c.signals and not c.phases:
        _fail("phases", "a dynamic signal needs its phase list")
    if "stations" in c.deployments and not c.stations:
        _fail("stations", "deployment 'stations' needs a station file")
    if "recorded" in c.signals and not c.signal_file:
        _fail("signal_file", "signal 'recorded' needs a signal file")
    if "external" in c.strengths and not c.strength_file:
        _fail("strength_file", "strength 'external' needs a strength file")


def _split(raw: str) -> list[str]:
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        raw = raw[1:-1]
    return [p.strip() for p in raw.replace(";", ",").split(",") if p.strip()]


def _parse_seeds(raw: str) -> tuple[int, ...]:
    seeds: list[int] = []
    for part in _split(raw):
        try:
            if ".." in part:
                lo, hi = (int(x) for x in part.split(".."))
                if hi < lo:
                    _fail("seeds", f"empty range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            _fail("seeds", f"not an integer or range: {part!r}")
    return tuple(seeds)


def _number(key, raw, kind=float, auto=False):
    if auto and raw.strip().lower() == "auto":
        return None
    try:
        return kind(raw)
    except ValueError:
        _fail(key, f"expected {'an integer' if kind is int else 'a number'}, got {raw!r}")


def _bool(key, raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    _fail(key, f"expected a boolean, got {raw!r}")


def parse_config_text(text: str, base_dir: str | os.PathLike | None = None) -> ExperimentConfig:
    """Parse config text; relative file paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(f"malformed config: {exc}") from None
    extra = [s for s in cp.sections() if s != "experiment"]
    if extra:
        raise ParseError(f"unknown section [{extra[0]}]")
    if not cp.has_section("experiment"):
        raise ParseError("missing [experiment] section")
    sec = cp["experiment"]
    for key in sec:
        if key not in CONFIG_KEYS:
            _fail(key, "unknown key")
    for key in ("deployment", "signal", "seeds"):
        if key not in sec:
            _fail(key, "required key missing")

    def get(key):
        return sec.get(key, str(CONFIG_KEYS[key]))

    def path(key):
        if key not in sec:
            return None
        p = Path(sec[key].strip())
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        return str(p)

    return ExperimentConfig(
        deployments=tuple(_split(sec["deployment"])),
        signals=tuple(_split(sec["signal"])),
        strengths=tuple(_split(get("strength"))),
        metrics=tuple(_split(get("metric"))),
        seeds=_parse_seeds(sec["seeds"]),
        n=_number("n", get("n"), int),
        k_min=_number("k_min", get("k_min"), int),
        stations=path("stations"),
        signal_value=_number("signal_value", get("signal_value")),
        amplitude=_number("amplitude", get("amplitude")),
        spread=_number("spread", get("spread"), auto=True),
        phases=tuple(_split(sec["phases"])) if "phases" in sec else (),
        phase_length=_number("phase_length", get("phase_length")),
        cycles=_number("cycles", get("cycles"), int),
        signal_file=path("signal_file"),
        strength_file=path("strength_file"),
        epsilon=_number("epsilon", get("epsilon"), auto=True),
        eta=_number("eta", get("eta"), auto=True),
        scheduler=get("scheduler").strip(),
        rate=_number("rate", get("rate")),
        period=_number("period", get("period")),
        max_sweeps=_number("max_sweeps", get("max_sweeps"), int),
        quiescence_window=_number("quiescence_window", get("quiescence_window"), int),
        confirm_rounds=_number("confirm_rounds", get("confirm_rounds"), int),
        sample_interval=_number("sample_interval", get("sample_interval")),
        engine=get("engine").strip(),
        out_dir=get("out_dir").strip(),
        trace=_bool("trace", get("trace")),
    )


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text, base_dir=p.parent)


# -- building blocks -----------------------------------------------------

def default_eta(metric: str, signal_field) -> float:
    """Error bound used when the config says ``eta = auto``.

    ``distance``: 16 spacing units.  ``diff`` and ``mix``: twice the pooled
    signal standard deviation (0.5 standing in for a flat signal).
    ``hop``: 4 hops.
    """
    if metric == "distance":
        return DISTANCE_ETA
    if metric == "hop":
        return HOP_ETA
    sigma = signal_field.pooled_std()
    return 2 * (sigma if sigma > 0 else FLAT_SIGMA)


def _signal_spec(cfg: ExperimentConfig, kind: str) -> SignalSpec:
    if kind == "dynamic":
        return SignalSpec("dynamic", phases=tuple(_signal_spec(cfg, p) for p in cfg.phases),
                          phase_length=cfg.phase_length)
    return SignalSpec(kind, value=cfg.signal_value, amplitude=cfg.amplitude, spread=cfg.spread)


@dataclass
class Setup:
    """Everything a single run needs, built deterministically from the seed."""

    deployment: object
    graph: object
    signal: object
    sampler: SamplerConfig
    scheduler: Scheduler


def build_setup(cfg: ExperimentConfig, seed: int) -> Setup:
    if not cfg.is_single:
        raise ConfigurationError("build_setup needs a single-cell config (use cfg.cell(...))")
    (dkind, skind, strength, metric), = cfg.cells()
    if dkind == "stations":
        dep = load_stations(cfg.stations)
        ids = read_station_ids(cfg.stations)
    else:
        dep = build_deployment(dkind, cfg.n, seed)
        ids = list(range(dep.n))
    graph = build_network(dep, min(cfg.k_min, dep.n - 1) if dep.n > 1 else cfg.k_min)
    if skind == "recorded":
        sf = recorded_signal(load_signal_csv(cfg.signal_file, ids), dep)
    else:
        sf = make_signal(_signal_spec(cfg, skind), dep, seed)
    eta = cfg.eta if cfg.eta is not None else default_eta(metric, sf)
    eps = cfg.epsilon if cfg.epsilon is not None else eta * EPSILON_PER_ETA
    if strength == "external":
        values = load_signal_csv(cfg.strength_file, ids)
        policy = StrengthPolicy("external", {d: float(v) for d, v in enumerate(values)})
    else:
        policy = StrengthPolicy(strength)
    sampler = SamplerConfig.from_eta(eta, policy, EdgeMetric(metric, eps))
    sched = Scheduler(cfg.scheduler, rate=cfg.rate, period=cfg.period, seed=seed)
    return Setup(dep, graph, sf, sampler, sched)


def make_world(setup: Setup, engine: str = "auto", program=None, record_trace: bool = False):
    """A simulation world for ``setup``; ``program`` replaces the sampler (reference engine only)."""
    if program is not None or engine == "reference" or (engine == "auto" and setup.scheduler.kind == "sync"):
        prog = program if program is not None else SamplerProgram(setup.sampler)
        return World(setup.graph, prog, setup.scheduler, sensors=setup.signal.read, record_trace=record_trace)
    from .fastsim import FastSamplerWorld

    return FastSamplerWorld(setup.graph, setup.sampler, setup.signal, setup.scheduler, record_trace=record_trace)


def verify_fixed_point(world, setup: Setup, signals) -> tuple[dict[str, Verdict], RegionPartition | None]:
    """Run every verifier on the world's current (stabilised) state."""
    verdicts: dict[str, Verdict] = {}
    snap = take_snapshot(world)
    try:
        part = extract_partition(snap, setup.graph, strict=True)
    except MalformedPartition as exc:
        verdicts["partition"] = Verdict(False, [str(exc)])
        return verdicts, None
    verdicts["partition"] = Verdict(True)
    verdicts["contiguity"] = check_contiguity(part, setup.graph)
    oracle = PathErrorOracle(setup.graph, setup.sampler.metric, signals)
    oracle.all_pairs()
    eta = setup.sampler.eta
    verdicts["within_error"] = verify_within_error(part, oracle, eta)
    verdicts["local_optimality"] = verify_local_optimality(part, oracle, eta)
    verdicts["follower_bounds"] = verify_follower_bounds(
        part, winning_candidacies(world), oracle, setup.sampler.radius)
    return verdicts, part


@dataclass
class PhaseResult:
    index: int
    start: float
    stabilisation: Stabilisation
    partition: RegionPartition | None
    metrics: MetricsRow | None
    # leader id -> strength at the fixed point
    strengths: dict[int, float] = field(default_factory=dict)


@dataclass
class RunResult:
    cell: tuple[str, str, str, str]
    seed: int
    eta: float
    rows: list[MetricsRow] = field(default_factory=list)
    phases: list[PhaseResult] = field(default_factory=list)
    verdicts: dict[str, Verdict] = field(default_factory=dict)
    post_stable_changes: int | None = None
    events: int = 0

    @property
    def ok(self) -> bool:
        return all(self.verdicts.values())

    @property
    def name(self) -> str:
        return "-".join(self.cell) + f"-s{self.seed}"

    def csv_lines(self) -> list[str]:
        d, s, st, m = self.cell
        lines = [METRICS_HEADER]
        for r in self.rows:
            lines.append(
                f"{self.seed},{d},{s},{st},{m},{self.eta!r},{r.time!r},{r.region_count},"
                f"{r.mean_region_size!r},{r.sigma_of_means!r},{r.mean_of_sigmas!r},{r.sigma_of_sigmas!r}"
            )
        return lines

    def verdict_lines(self) -> list[str]:
        lines = ["check,ok,violations"]
        for name, v in self.verdicts.items():
            lines.append(f"{name},{str(v.ok).lower()},{len(v.violations)}")
        return lines


def _metrics_now(world, setup, t) -> MetricsRow | None:
    if not all(world.fired):
        return None
    snap = take_snapshot(world)
    part = extract_partition(snap, setup.graph, strict=False)
    return partition_metrics(part, setup.signal.values(t), time=t)


def run_experiment(cfg: ExperimentConfig, seed: int, *, out_dir=None, trace: bool | None = None,
                   program=None) -> RunResult:
    """Run one configuration cell for one seed.

    The sampler runs to stabilisation (once per phase for dynamic signals),
    metrics are recorded every ``sample_interval`` time units, and every
    verifier runs on each stabilised state.  A static run then executes
    ``confirm_rounds`` more rounds per device and records the output changes
    seen.  With ``out_dir`` the metrics CSV, a verdict CSV and optionally the
    event trace are written there.  ``program`` substitutes another field
    program for the sampler (partition verifiers then only run if it
    stabilises).
    """
    setup = build_setup(cfg, seed)
    trace = cfg.trace if trace is None else trace
    world = make_world(setup, cfg.engine, program, record_trace=trace)
    spec = setup.signal.spec
    static = spec.kind != "dynamic"
    L = math.inf if static else spec.phase_length
    n_phases = 1 if static else len(spec.phases) * cfg.cycles
    result = RunResult(cfg.cells()[0], seed, setup.sampler.eta)
    step = cfg.sample_interval
    k = 1  # next sample instant is k * step

    for i in range(n_phases):
        start, end = i * L if not static else 0.0, (i + 1) * L
        if i > 0:
            world.mark_environment_change()
        signals = setup.signal.values(start)
        limit = int(min(world.rounds)) + cfg.max_sweeps
        while True:
            t_sample = k * step
            stop = min(t_sample, end)
            res = world.run_until_stable(cfg.quiescence_window, limit, until=stop)
            if res or min(world.rounds) >= limit or stop >= end:
                break
            world.run_until(stop)
            row = _metrics_now(world, setup, t_sample)
            if row is not None:
                result.rows.append(row)
            k += 1
        prefix = "" if static else f"phase{i}/"
        result.verdicts[prefix + "stabilised"] = Verdict(bool(res), [] if res else [(i, world.clock)])
        part = None
        row = None
        if res:
            vs, part = verify_fixed_point(world, setup, signals) if program is None else ({}, None)
            for name, v in vs.items():
                result.verdicts[prefix + name] = v
            if part is not None:
                row = partition_metrics(part, signals, time=k * step)
        strengths = {}
        if part is not None:
            cands = winning_candidacies(world)
            strengths = {ld: -cands[ld][0] for ld in part.regions}
        result.phases.append(PhaseResult(i, start, res, part, row, strengths))
        if static:
            if res and row is not None:
                result.rows.append(row)
            if res and cfg.confirm_rounds:
                changes = world.run_rounds(cfg.confirm_rounds)
                result.post_stable_changes = changes
                result.verdicts["stayed_stable"] = Verdict(changes == 0, [changes] if changes else [])
        else:
            # keep sampling the live state until the phase ends
            while k * step <= end:
                world.run_until(k * step)
                r = _metrics_now(world, setup, k * step)
                if r is not None:
                    result.rows.append(r)
                k += 1
            world.run_until(end)
    result.events = world.events

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{result.name}.csv").write_text("\n".join(result.csv_lines()) + "\n", encoding="utf-8")
        (out / f"{result.name}.verdicts.csv").write_text("\n".join(result.verdict_lines()) + "\n",
                                                         encoding="utf-8")
        if trace:
            write_trace_csv(world, out / f"{result.name}.trace.csv")
    return result


# -- sweeps ----------------------------------------------------------------

AGGREGATE_HEADER = (
    "deployment,signal,strength,metric,eta,time,runs,regions,mean_size,sigma_mu,mu_sigma,sigma_sigma"
)


def aggregate(results: list[RunResult]) -> list[str]:
    """Mean series per cell across seeds, aligned by sampling instant.

    A run that ended before an instant contributes its last row (its state
    is a fixed point from then on); instants before a run's first row only
    average the runs that have one.
    """
    by_cell: dict[tuple, list[RunResult]] = {}
    for r in results:
        by_cell.setdefault(r.cell, []).append(r)
    lines = [AGGREGATE_HEADER]
    for cell, runs in by_cell.items():
        runs = sorted(runs, key=lambda r: r.seed)
        times = sorted({row.time for r in runs for row in r.rows})
        eta = float(np.mean([r.eta for r in runs]))
        for t in times:
            picked = []
            for r in runs:
                before = [row for row in r.rows if row.time <= t]
                if before:
                    picked.append(before[-1])
            cols = np.array([[p.region_count, p.mean_region_size, p.sigma_of_means, p.mean_of_sigmas,
                              p.sigma_of_sigmas] for p in picked], dtype=float)
            m = cols.mean(axis=0)
            lines.append(",".join([*cell, repr(eta), repr(t), str(len(picked))] + [repr(float(x)) for x in m]))
    return lines


def _sweep_job(args):
    cfg, cell, seed, runs_dir, trace = args
    return run_experiment(cfg.cell(*cell), seed, out_dir=runs_dir, trace=trace)


@dataclass
class SweepResult:
    results: list[RunResult]
    aggregate_path: Path | None

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def failures(self) -> list[tuple[str, str]]:
        return [(r.name, name) for r in self.results for name, v in r.verdicts.items() if not v]


def sweep(cfg: ExperimentConfig, *, out_dir=None, parallel: int = 1, seeds=None,
          trace: bool | None = None) -> SweepResult:
    """Run every cell for every seed and write per-run files plus ``aggregate.csv``."""
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    trace = cfg.trace if trace is None else trace
    runs_dir = None if out_dir is None else Path(out_dir) / "runs"
    jobs = [(cfg, cell, s, runs_dir, trace) for cell in cfg.cells() for s in seeds]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    agg_path = None
    if out_dir is not None:
        agg_path = Path(out_dir) / "aggregate.csv"
        agg_path.write_text("\n".join(aggregate(results)) + "\n", encoding="utf-8")
    return SweepResult(results, agg_path)
