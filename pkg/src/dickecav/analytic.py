"""Closed-form Raman dynamics and heralding probabilities.

Everything here works on the eliminated two-level system of a ladder step
``m -> m+1`` with uniform couplings ``g`` and equal cavity decay ``kappa``.
Writing ``p = n - m``, ``q = m + 1``, ``a = g^2 / Delta_L`` and
``delta = Delta_L - Delta_R``, the step behaves like a driven two-level system
with

    Omega0 = (p + q) a - delta
    Omega1 = sqrt(((p - q) a + delta)^2 + 4 p q a^2)

For ``m = 0`` (``p = n``, ``q = 1``) these are the textbook single-photon W-state
expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .model import SystemParams, optimal_detuning


class PreconditionError(ValueError):
    """Parameters violate the assumption a closed form was derived under."""


@dataclass(frozen=True)
class RabiPair:
    omega0: float
    omega1: float


def _ladder(params: SystemParams, step: int):
    n = params.n_atoms
    if not 0 <= step <= n - 1:
        raise ValueError(f"ladder step must satisfy 0 <= m <= n-1, got {step}")
    if params.delta_L == 0:
        raise ZeroDivisionError("closed forms are singular at Delta_L = 0")
    a = params.g**2 / params.delta_L
    return n - step, step + 1, a, params.delta_L - params.delta_R


def rabi_frequencies(params: SystemParams, step: int = 0) -> RabiPair:
    """Light-shift frequency ``Omega0`` and Raman Rabi frequency ``Omega1``."""
    p, q, a, delta = _ladder(params, step)
    omega0 = (p + q) * a - delta
    omega1 = math.sqrt(((p - q) * a + delta) ** 2 + 4 * p * q * a * a)
    return RabiPair(omega0, omega1)


def amplitudes_general(params: SystemParams, t, step: int = 0):
    """``(lam0(t), lam1(t))`` for arbitrary Delta_R, starting from ``(1, 0)``."""
    p, q, a, delta = _ladder(params, step)
    rabi = rabi_frequencies(params, step)
    if rabi.omega1 == 0:
        raise ZeroDivisionError("Omega1 = 0: use the degenerate limit")
    t = np.asarray(t, dtype=float)
    envelope = np.exp(-params.kappa * t / 2) * np.exp(0.5j * rabi.omega0 * t)
    c = np.cos(rabi.omega1 * t / 2)
    s = np.sin(rabi.omega1 * t / 2)
    lam0 = envelope * (c + 1j * ((p - q) * a + delta) / rabi.omega1 * s)
    lam1 = 1j * envelope * (2 * math.sqrt(p * q) * a / rabi.omega1) * s
    return lam0, lam1


def check_resonance(params: SystemParams, step: int = 0, rtol: float = 1e-9) -> None:
    target = optimal_detuning(params, step)
    scale = max(abs(params.g**2 / params.delta_L), abs(params.delta_L) * 1e-15)
    if abs(params.delta_R - target) > rtol * scale:
        raise PreconditionError(
            f"Delta_R = {params.delta_R!r} is off the Raman resonance {target!r}"
        )


def amplitudes_resonant(params: SystemParams, t, step: int = 0, rtol: float = 1e-9):
    """Amplitudes on Raman resonance: a damped cos/sin population swap."""
    check_resonance(params, step, rtol)
    p, q, a, _ = _ladder(params, step)
    omega0 = (p + q) * a - (params.delta_L - params.delta_R)
    omega1 = 2 * math.sqrt(p * q) * a
    t = np.asarray(t, dtype=float)
    envelope = np.exp(-params.kappa * t / 2) * np.exp(0.5j * omega0 * t)
    return envelope * np.cos(omega1 * t / 2), 1j * envelope * np.sin(omega1 * t / 2)


def d1_click_density(params: SystemParams, t, step: int = 0) -> np.ndarray:
    """Rate of R-photon clicks at time ``t`` (per unit time, efficiency included)."""
    t = np.asarray(t, dtype=float)
    if params.g_L == 0 or params.kappa_R == 0:
        return np.zeros_like(t)
    _, lam1 = amplitudes_general(params, t, step)
    return params.detector_efficiency * params.kappa_R * np.abs(lam1) ** 2


def success_probability_integral(params: SystemParams, T: float, step: int = 0) -> float:
    """Probability of a D1 click within ``[0, T]``, by adaptive quadrature."""
    if T <= 0 or params.g_L == 0 or params.kappa_R == 0:
        return 0.0
    rabi = rabi_frequencies(params, step)
    if rabi.omega1 == 0:
        return 0.0
    # split at Rabi half periods so each panel holds one lobe of the integrand
    half = 2 * math.pi / rabi.omega1
    edges = np.arange(0.0, T, half)
    edges = np.append(edges, T)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = quad(lambda s: float(d1_click_density(params, s, step)), lo, hi,
                      epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return total


def success_probability_closed(params: SystemParams, step: int = 0) -> float:
    """Heralding probability for ``T -> inf`` on Raman resonance.

    ``2 p q g^4 / (Delta_L^2 kappa^2 + 4 p q g^4)``, scaled by detector efficiency.
    """
    p, q, _, _ = _ladder(params, step)
    g4 = params.g**4
    denom = params.delta_L**2 * params.kappa**2 + 4 * p * q * g4
    if denom == 0:
        return 0.0
    return params.detector_efficiency * 2 * p * q * g4 / denom


def cumulative_success(p_single: float, trials: int) -> float:
    if not 0.0 <= p_single <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    if trials < 0:
        raise ValueError("trials must be >= 0")
    return 1.0 - (1.0 - p_single) ** trials


def excited_population_bound(params: SystemParams) -> float:
    """Adiabatic estimate ``((sqrt(n) + 1) g / Delta_L)^2`` of the excited population.

    This follows the slaved amplitude only; the ringing set off by the sudden
    start can exceed it (see :func:`dickecav.dynamics.elimination_error`).
    """
    return ((math.sqrt(params.n_atoms) + 1) * params.g / params.delta_L) ** 2
