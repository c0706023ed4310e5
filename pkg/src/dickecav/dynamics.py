"""Conditional (no-click) evolution ``i dpsi/dt = H_eff psi``.

Integration runs in the dimensionless time ``tau = s t`` with ``s`` the
largest coupling (or another intrinsic rate when the couplings vanish) and in
the frame rotating at Delta_L, so the slow Raman dynamics are not buried
under a fast global phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import RK45

from .model import (
    EffectiveHamiltonian,
    IndexedBasis,
    JumpChannel,
    ReducedSymmetric,
    StateVector,
    SymmetricLadder,
    SystemParams,
    build_basis,
    build_hamiltonian,
)


class IntegrationError(RuntimeError):
    """The adaptive integrator could not proceed (step-size underflow)."""


@dataclass(frozen=True)
class IntegratorControls:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = math.inf  # seconds


#: Tight settings used wherever two integrations are compared at 1e-9.
ORACLE_CONTROLS = IntegratorControls(rtol=1e-12, atol=1e-14)


def _time_scale(generator: np.ndarray, params: SystemParams | None, t_end: float) -> float:
    if params is not None and max(params.g_L, params.g_R) > 0:
        return max(params.g_L, params.g_R)
    scale = float(np.max(np.abs(generator))) if generator.size else 0.0
    if scale > 0:
        return scale
    return 1.0 / t_end if t_end > 0 else 1.0


def _integrate_linear(generator, y0, t_end, t_eval, controls, scale):
    """Solve ``dy/dt = generator @ y`` on ``[0, t_end]``.

    Returns the accepted step nodes (times, states) and the states at
    ``t_eval`` from the solver's own continuous extension.
    """
    a_tau = np.asarray(generator, dtype=complex) / scale
    tau_end = t_end * scale
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0):
        raise ValueError("sample times must be sorted")
    tau_eval = t_eval * scale
    samples = np.empty((len(tau_eval), len(y0)), dtype=complex)
    max_step = controls.max_step * scale if math.isfinite(controls.max_step) else np.inf

    nodes_t = [0.0]
    nodes_y = [np.array(y0, dtype=complex)]
    k = 0
    while k < len(tau_eval) and tau_eval[k] <= 0.0:
        samples[k] = y0
        k += 1
    if tau_end > 0:
        solver = RK45(lambda _t, y: a_tau @ y, 0.0, np.array(y0, dtype=complex), tau_end,
                      rtol=controls.rtol, atol=controls.atol, max_step=max_step)
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                raise IntegrationError(message)
            nodes_t.append(solver.t)
            nodes_y.append(solver.y.copy())
            hi = np.searchsorted(tau_eval, solver.t, side="right")
            if hi > k:
                dense = solver.dense_output()
                samples[k:hi] = dense(tau_eval[k:hi]).T
                k = hi
    if k < len(tau_eval):
        raise ValueError("sample times beyond t_end")
    nodes_t = np.array(nodes_t) / scale
    return nodes_t, np.array(nodes_y), samples


class ConditionalTrajectory:
    """Samples plus a vectorized cubic-Hermite dense output over accepted steps."""

    def __init__(self, basis, generator, nodes_t, nodes_y, times, states):
        self.basis = basis
        self.generator = generator
        self.nodes_t = nodes_t
        self.nodes_y = nodes_y
        self.nodes_f = nodes_y @ generator.T
        self.times = times
        self.states = states

    @property
    def t_end(self) -> float:
        return float(self.nodes_t[-1])

    @property
    def norm_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    @property
    def node_norm_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.nodes_y) ** 2, axis=1)

    def state(self, i: int) -> StateVector:
        return StateVector(self.basis, self.states[i].copy())

    def segment(self, t: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.nodes_t, t, side="right") - 1, 0, len(self.nodes_t) - 2)

    def states_at(self, t, segment=None) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if len(self.nodes_t) == 1:
            return np.repeat(self.nodes_y[:1], len(t), axis=0)
        k = self.segment(t) if segment is None else segment
        t0, t1 = self.nodes_t[k], self.nodes_t[k + 1]
        h = (t1 - t0)[:, None]
        x = ((t - t0) / (t1 - t0))[:, None]
        h00 = 2 * x**3 - 3 * x**2 + 1
        h10 = x**3 - 2 * x**2 + x
        h01 = -2 * x**3 + 3 * x**2
        h11 = x**3 - x**2
        return (h00 * self.nodes_y[k] + h10 * h * self.nodes_f[k]
                + h01 * self.nodes_y[k + 1] + h11 * h * self.nodes_f[k + 1])

    def norm_sq_at(self, t, segment=None) -> np.ndarray:
        return np.sum(np.abs(self.states_at(t, segment)) ** 2, axis=1)


def integrate_generator(generator: np.ndarray, y0, t_end: float, t_eval=None,
                        controls: IntegratorControls | None = None,
                        params: SystemParams | None = None,
                        basis: IndexedBasis | None = None) -> ConditionalTrajectory:
    """Integrate ``dy/dt = generator @ y`` (``generator`` in 1/s)."""
    controls = controls or IntegratorControls()
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    y0 = np.asarray(y0, dtype=complex)
    generator = np.asarray(generator, dtype=complex)
    if generator.shape != (len(y0), len(y0)):
        raise ValueError(f"generator {generator.shape} does not match state of dim {len(y0)}")
    t_eval = np.array([0.0, t_end]) if t_eval is None else np.asarray(t_eval, dtype=float)
    scale = _time_scale(generator, params, t_end)
    nodes_t, nodes_y, samples = _integrate_linear(generator, y0, t_end, t_eval, controls, scale)
    return ConditionalTrajectory(basis, generator, nodes_t, nodes_y, t_eval, samples)


def integrate_conditional(H: EffectiveHamiltonian, psi0: StateVector, t_end: float,
                          controls: IntegratorControls | None = None,
                          t_eval=None) -> ConditionalTrajectory:
    """No-click evolution of ``psi0`` under ``H`` up to ``t_end`` seconds.

    Amplitudes are returned in the frame rotating at ``H.frame_shift``.
    """
    if psi0.basis != H.basis:
        raise ValueError("initial state and Hamiltonian live in different bases")
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    generator = -1j * (H.matrix + H.frame_shift * np.eye(H.dim))
    return integrate_generator(generator, psi0.amplitudes, t_end, t_eval, controls,
                               params=H.params, basis=H.basis)


# ---------------------------------------------------------------------------
# adiabatic elimination


def _ladder_factors(params: SystemParams, step: int) -> tuple[int, int]:
    n = params.n_atoms
    if not 0 <= step <= n - 1:
        raise ValueError(f"ladder step must satisfy 0 <= m <= n-1, got {step}")
    return n - step, step + 1


def transformed_generator(params: SystemParams, step: int = 0) -> np.ndarray:
    """2x2 generator of the ground-manifold amplitudes after eliminating ``e``.

    ``d/dt (lam0, lam1) = M (lam0, lam1)``; ``lam0`` is the L-photon state and
    ``lam1`` the R-photon state of the ladder step.
    """
    if params.delta_L == 0:
        raise ZeroDivisionError("elimination needs Delta_L != 0")
    p, q = _ladder_factors(params, step)
    dl = params.delta_L
    mismatch = params.delta_L - params.delta_R
    return np.array([
        [1j * p * params.g_L**2 / dl - params.kappa_L / 2,
         1j * math.sqrt(p * q) * params.g_L * params.g_R / dl],
        [1j * math.sqrt(p * q) * params.g_L * params.g_R / dl,
         1j * q * params.g_R**2 / dl - 1j * mismatch - params.kappa_R / 2],
    ])


@dataclass(frozen=True)
class EliminatedLadder:
    """Two-state sector left after eliminating the excited level."""

    n: int
    m: int = 0


def eliminated_hamiltonian(params: SystemParams, step: int = 0) -> EffectiveHamiltonian:
    """The eliminated two-level dynamics packaged as an :class:`EffectiveHamiltonian`.

    Shares labels and jump channels with the first two slots of the
    corresponding 3-level sector; the frame shift is already folded in.
    """
    n = params.n_atoms
    full = build_hamiltonian(params, build_basis(SymmetricLadder(n, step)))
    basis = IndexedBasis(EliminatedLadder(n, step), full.basis.labels[:2])
    generator = transformed_generator(params, step)
    matrix = 1j * generator
    channels = tuple(
        JumpChannel(ch.name, ch.rate, ch.operator[:, :2], ch.post_basis, ch.detector)
        for ch in full.channels if ch.detector is not None
    )
    decay = sum((ch.decay_operator() for ch in channels), np.zeros((2, 2), dtype=complex))
    return EffectiveHamiltonian(basis, matrix, matrix + 0.5j * decay, channels,
                                frame_shift=0.0, params=params)


@dataclass(frozen=True)
class EliminationReport:
    max_deviation: float
    max_excited_population: float
    t_end: float
    n_samples: int


def elimination_error(params: SystemParams, t_end: float | None = None,
                      controls: IntegratorControls | None = None,
                      samples_per_period: int = 24, step: int = 0) -> EliminationReport:
    """Compare the 3-level conditional dynamics with the eliminated 2-level ones.

    Both start in the L-photon state.  The sample grid resolves the fast
    excited-state ringing at Delta_L.
    """
    t_end = params.wait_time if t_end is None else t_end
    n = params.n_atoms
    fast = max(abs(params.delta_L), abs(params.delta_R), max(params.g_L, params.g_R), 1.0 / t_end)
    n_samples = max(2001, int(math.ceil(t_end * fast / (2 * math.pi) * samples_per_period)) + 1)
    t_grid = np.linspace(0.0, t_end, n_samples)

    H = build_hamiltonian(params, build_basis(SymmetricLadder(n, step)))
    full = integrate_conditional(H, StateVector.basis_state(H.basis), t_end, controls, t_grid)
    reduced = integrate_generator(transformed_generator(params, step), [1.0, 0.0], t_end,
                                  t_grid, controls, params=params)
    deviation = np.max(np.abs(full.states[:, :2] - reduced.states))
    excited = np.max(np.abs(full.states[:, 2]) ** 2)
    return EliminationReport(float(deviation), float(excited), t_end, n_samples)
