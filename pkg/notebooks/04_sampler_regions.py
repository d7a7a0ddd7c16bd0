# %% [markdown]
# # Region growing
#
# Each device proposes itself as a leader; stronger candidacies spread
# until their accumulated error reaches half the error bound.

# %%
import numpy as np

from aggsample import (
    EdgeMetric,
    PathErrorOracle,
    SamplerConfig,
    Scheduler,
    StrengthPolicy,
    build_deployment,
    build_network,
    check_contiguity,
    extract_partition,
    gauss,
    make_signal,
    message_cost,
    partition_metrics,
    run_until_stable,
    take_snapshot,
    verify_local_optimality,
    verify_within_error,
)
from aggsample.fastsim import FastSamplerWorld

dep = build_deployment("grid", 400, seed=2)
g = build_network(dep)
field = make_signal(gauss(), dep, seed=2)
eta = 2 * field.pooled_std()
cfg = SamplerConfig.from_eta(eta, StrengthPolicy("value"), EdgeMetric("diff", eta / 200))

# %%
w = FastSamplerWorld(g, cfg, field, Scheduler(seed=2))
res = run_until_stable(w, 5, 1000)
part = extract_partition(take_snapshot(w), g)
print(res)
print(partition_metrics(part, field.values()))

# %% [markdown]
# A map of the regions: each letter is one leader.

# %%
letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
label = {ld: letters[i % len(letters)] for i, ld in enumerate(part.regions)}
for row in range(19, -1, -1):
    print(" ".join(label[part.leader_of[row * 20 + c]] for c in range(20)))

# %% [markdown]
# Checking the guarantees on this fixed point.

# %%
oracle = PathErrorOracle(g, cfg.metric, field.values())
print("contiguous:", bool(check_contiguity(part, g)))
within = verify_within_error(part, oracle, eta)
print("within error:", bool(within), "worst region error / eta:", round(within.worst[1] / eta, 3))
lo = verify_local_optimality(part, oracle, eta)
print("locally optimal:", bool(lo), "violating pairs:", lo.violations[:3])
print(message_cost(w))
