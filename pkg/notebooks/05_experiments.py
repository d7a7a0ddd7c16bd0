# %% [markdown]
# # Experiments and sweeps
#
# A config file describes the Cartesian product of deployments, signals,
# strengths and metrics.  The same workflow is available as
# `aggsample sweep exp.ini --out-dir results`.

# %%
import tempfile
from pathlib import Path

from aggsample import parse_config_text, run_experiment, sweep

text = """
[experiment]
deployment = grid, uniform
n = 200
signal = gauss, uniform
strength = value
metric = diff
eta = auto
seeds = 1..3
"""
cfg = parse_config_text(text)
print(len(cfg.cells()), "cells x", len(cfg.seeds), "seeds")

# %%
out = Path(tempfile.mkdtemp())
result = sweep(cfg, out_dir=out)
for r in result.results:
    failed = [k for k, v in r.verdicts.items() if not v]
    print(f"{r.name:32s} regions={r.phases[0].metrics.region_count:4d} failed={failed}")
print((out / "aggregate.csv").read_text().splitlines()[:4])

# %% [markdown]
# A dynamic signal is stabilised and verified once per phase.

# %%
dyn = parse_config_text("""
[experiment]
deployment = grid
n = 400
signal = dynamic
phases = constant, uniform, gauss
metric = diff
seeds = 1
""")
r = run_experiment(dyn, 1)
for p in r.phases:
    print(f"phase {p.index} from t={p.start:.0f}: stabilised at {p.stabilisation.time:.1f}, "
          f"regions={p.metrics.region_count}")
