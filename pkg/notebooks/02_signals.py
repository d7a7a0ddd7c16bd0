# %% [markdown]
# # Signals
#
# Static fields sampled by the devices and a dynamic field that cycles
# through them.

# %%
import numpy as np

from aggsample import build_deployment, constant, dynamic, gauss, make_signal, multigauss, uniform

dep = build_deployment("grid", 256, seed=0)


def show(values, side=16):
    shades = " .:-=+*#%@"
    v = np.asarray(values)
    span = v.max() - v.min() or 1.0
    idx = ((v - v.min()) / span * (len(shades) - 1)).round().astype(int)
    for row in range(side - 1, -1, -1):
        print("".join(shades[i] * 2 for i in idx[row * side:(row + 1) * side]))


# %%
for spec in (constant(1.0), uniform(), gauss(), multigauss()):
    field = make_signal(spec, dep, seed=4)
    print(f"\n{spec.kind}: mean={field.values().mean():.3f} std={field.pooled_std():.3f}")
    show(field.values())

# %% [markdown]
# A dynamic signal switches phase every `phase_length` time units.

# %%
field = make_signal(dynamic(constant(0), uniform(), gauss(), phase_length=300), dep, seed=4)
for t in (0, 150, 300, 450, 600, 900):
    print(f"t={t:4d} phase={field.phase_at(t)} mean={field.values(t).mean():.3f}")
