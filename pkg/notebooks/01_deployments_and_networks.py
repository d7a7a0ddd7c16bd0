# %% [markdown]
# # Deployments and communication graphs
#
# Four ways of placing devices in a square arena, each connected to at
# least its eight nearest peers.

# %%
import numpy as np

from aggsample import build_deployment, build_network

# %%
for kind in ("grid", "pgrid", "uniform", "exp"):
    dep = build_deployment(kind, 400, seed=1)
    g = build_network(dep, k_min=8)
    degrees = np.array([g.degree(d) for d in range(g.n)])
    lengths = np.array(list(g.edge_length.values()))
    print(f"{kind:8s} arena={dep.arena} degree min/mean/max = {degrees.min()}/{degrees.mean():.2f}/{degrees.max()}"
          f"  edge length mean={lengths.mean():.2f} connected={g.is_connected()}")

# %% [markdown]
# The exponential deployment crowds devices towards one side of the arena.

# %%
dep = build_deployment("exp", 2000, seed=3)
rows, _ = np.histogram(dep.positions[:, 1], bins=8, range=(dep.origin[1], dep.origin[1] + dep.arena[1]))
for i, count in enumerate(rows):
    print(f"band {i}: {'#' * (count // 10)}")

# %% [markdown]
# Two far-apart clusters are joined by a single bridge between their closest devices.

# %%
from aggsample import Deployment

rng = np.random.default_rng(0)
pos = np.vstack([rng.uniform(0, 2, (10, 2)), rng.uniform(0, 2, (10, 2)) + [20, 0]])
g = build_network(Deployment(pos, arena=(23, 3)), k_min=3)
print("bridges:", [(a, b) for a, b in g.edges() if (a < 10) != (b < 10)])
