"""No-click dynamics with and without the excited level.

Run with ``python3 demos/02_conditional_dynamics.py``.
"""

# %%
import numpy as np

from dickecav import (
    ReducedSymmetric,
    StateVector,
    SystemParams,
    amplitudes_resonant,
    build_basis,
    build_hamiltonian,
    elimination_error,
    integrate_conditional,
    practical_params,
)

params = practical_params(3)
basis = build_basis(ReducedSymmetric(3))
H = build_hamiltonian(params, basis)
print("basis:", basis.label_names())

# %% [markdown]
# Integrate the three-level conditional state and compare the L and R photon
# populations with the eliminated two-level solution.

# %%
t = np.linspace(0, params.timeout_horizon, 9)
traj = integrate_conditional(H, StateVector.basis_state(basis), t[-1], t_eval=t)
lam0, lam1 = amplitudes_resonant(params, t)
print(" t (ns)   |c_L|^2  |lam0|^2   |c_R|^2  |lam1|^2   |c_e|^2   norm")
for i, ti in enumerate(t):
    c = np.abs(traj.states[i]) ** 2
    print(f"{ti * 1e9:7.1f}  {c[0]:8.4f} {abs(lam0[i])**2:8.4f}  {c[1]:8.4f} {abs(lam1[i])**2:8.4f}"
          f"  {c[2]:8.5f}  {traj.norm_sq[i]:.4f}")

# %% [markdown]
# The excited level stays below 3 % and shrinks as (g/Delta)^2.

# %%
for ratio in (10, 20, 40, 200):
    p = SystemParams.uniform(params.g, params.kappa, ratio * params.g, 3, params.wait_time)
    rep = elimination_error(p)
    print(f"Delta_L = {ratio:3d} g: max|lam2|^2 = {rep.max_excited_population:.2e}, "
          f"max amplitude deviation = {rep.max_deviation:.2e}")
