# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # One boundary frequency at a time
#
# Each nonzero eigenvalue mu of the tangential operator contributes a 4x4
# block. The projection path between the two boundary conditions can be
# checked exactly there.

# %%
import math

import numpy as np
from scipy import linalg

from rtglue import deform as df

b = df.build_block(1.5)
print(np.round(linalg.eigvalsh(b.A), 12))

# %% [markdown]
# ## Identities along the path

# %%
for th in (0.0, math.pi / 8, math.pi / 4, math.pi / 2):
    res = df.lemma_checks(b, th)
    worst = max(res, key=res.get)
    print(f"theta={th:.3f}  worst {worst:22s} {res[worst]:.1e}")

# %%
p = df.path_objects(0.6, b)
print("|exp(iT) - U| =", np.linalg.norm(linalg.expm(1j * p.T) - p.U, 2))

# %% [markdown]
# ## Heat kernel on the half line and its Mellin transform

# %%
for th in (0.0, 0.7, math.pi / 2):
    r = df.heat_kernel_residuals(th, 1.1, 0.5, 0.4)
    print(f"theta={th:.2f}", {k: f"{v:.1e}" for k, v in r.items()})

for th in (0.0, math.pi / 4, math.pi / 2):
    m = df.mellin_f(th, 1.0)
    print(f"MF_theta(1), theta={th:.3f}: {m.value:.10f} +- {m.error_bound:.1e}")

# %% [markdown]
# ## Spectral flow against the eta difference

# %%
rng = np.random.default_rng(1)
for _ in range(5):
    X, Y = (rng.standard_normal((5, 5)) for _ in range(2))
    rep = df.sf_eta_check(df.HermitianPath.linear(X + X.T, Y + Y.T))
    print("SF", rep.sf, " eta difference", rep.eta_difference)
