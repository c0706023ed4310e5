"""Closed-form heralding probabilities for the W-state step.

Run with ``python3 demos/01_closed_forms.py``.
"""

# %% [markdown]
# Three ground-state atoms share a two-mode cavity.  An L photon drives a
# far-detuned Raman transition that deposits one atom in |1> and emits an R
# photon; a click on the R detector heralds the W state.  Everything below is
# closed form.

# %%
import numpy as np

from dickecav import (
    cumulative_success,
    excited_population_bound,
    optimal_detuning,
    practical_params,
    rabi_frequencies,
    success_probability_closed,
    success_probability_integral,
)

params = practical_params(3)
g = params.g
print(f"Delta_R at Raman resonance: {optimal_detuning(params) / g:.3f} g")
rabi = rabi_frequencies(params)
print(f"Omega0 = {rabi.omega0 / g:.4f} g, Omega1 = {rabi.omega1 / g:.4f} g")

# %% [markdown]
# Single-trial success: the closed form and the time integral of the click
# density.  The literature quotes ~0.36 for these parameters; the formula
# gives 0.398.

# %%
p = success_probability_closed(params)
print(f"p_success (closed)          = {p:.5f}")
print(f"p_success (integral, T)     = {success_probability_integral(params, params.wait_time):.5f}")
print(f"p_success (integral, 50/k)  = {success_probability_integral(params, 50 / params.kappa):.5f}")
print(f"excited-population estimate = {excited_population_bound(params):.4f}")

# %%
for k in (1, 2, 5, 10):
    print(f"after {k:2d} trials: {cumulative_success(p, k):.4f}")

# %% [markdown]
# The loss-free plateau: as g/kappa grows, p approaches 1/2 for any n.

# %%
for n in (1, 3, 6):
    row = []
    for ratio in (1, 10, 100, 1000):
        pn = practical_params(n, kappa=g / ratio)
        row.append(success_probability_closed(pn))
    print(f"n = {n}: " + "  ".join(f"{x:.4f}" for x in row))

# %% [markdown]
# Detuning scan: the integrated success probability peaks at the resonance
# condition.

# %%
a = g**2 / params.delta_L
grid = params.delta_L + np.linspace(-5 * a, 5 * a, 11)
for d in grid:
    val = success_probability_integral(params.replace(delta_R=d), 50 / params.kappa)
    print(f"(Delta_R - Delta_L)/a = {(d - params.delta_L) / a:+5.1f}: {val:.4f}")
