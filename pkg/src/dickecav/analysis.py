"""Reference Dicke states, fidelities and the brute-force tensor-space oracle.

The oracle path builds everything from explicit atomic strings and never
touches the collective-operator formulas used by the symmetric bases, so it
can certify them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np
from scipy import stats
from scipy.integrate import quad

from .analytic import d1_click_density
from .dynamics import ORACLE_CONTROLS, IntegratorControls, integrate_conditional
from .model import (
    BasisMismatchError,
    FullTensor,
    IndexedBasis,
    ReducedSymmetric,
    SingleExcitation,
    StateVector,
    SymmetricLadder,
    SystemParams,
    build_basis,
    build_hamiltonian,
)


def _weight_strings(n: int, m: int) -> list[str]:
    out = []
    for ones in combinations(range(n), m):
        out.append("".join("1" if i in ones else "0" for i in range(n)))
    return sorted(out)


def qubit_basis(n: int, cavity=(0, 0)) -> IndexedBasis:
    """All ``2^n`` strings over ``{0, 1}``, lexicographic, with a fixed cavity state."""
    labels = ["".join(bits) for bits in product("01", repeat=n)]
    return IndexedBasis(FullTensor(n, cap=max(n, 4)), [(s, *cavity) for s in labels])


def dicke_state(n: int, m: int, basis: IndexedBasis | None = None, cavity=(0, 0)) -> StateVector:
    """``|n, m>``: equal-weight superposition of the strings with ``m`` atoms in ``|1>``.

    ``basis`` may be per-atom (labels carry strings) or symmetric (count labels);
    it defaults to :func:`qubit_basis`.
    """
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    basis = qubit_basis(n, cavity) if basis is None else basis
    amps = np.zeros(basis.dim, dtype=complex)
    if basis.symmetric:
        label = ((n - m, m, 0), *cavity)
        if label not in basis:
            raise BasisMismatchError(f"basis has no slot for |{n},{m}>")
        amps[basis.index(label)] = 1.0
        return StateVector(basis, amps)
    strings = _weight_strings(n, m)
    for s in strings:
        label = (s, *cavity)
        if label not in basis:
            raise BasisMismatchError(f"basis lacks {s}")
        amps[basis.index(label)] = 1.0 / math.sqrt(len(strings))
    return StateVector(basis, amps)


def dicke_state_collective(n: int, m: int) -> StateVector:
    """``|n,m>`` built as ``C(n,m) s1^m s0^(n-m)`` acting on ``|e...e>``.

    ``s_k = sum_j |k>_j <e|``, ``C(n,m) = 1/sqrt(n! m! (n-m)!)``.  Lives in the
    full ``3^n`` product space (levels ordered ``0, 1, e``).
    """
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    labels = ["".join(s) for s in product("01e", repeat=n)]
    basis = IndexedBasis(FullTensor(n, cap=max(n, 4)), [(s, 0, 0) for s in labels])

    def lower(vec, level):
        out = np.zeros_like(vec)
        for j, s in enumerate(labels):
            if vec[j] == 0:
                continue
            for i, a in enumerate(s):
                if a == "e":
                    out[basis.index((s[:i] + level + s[i + 1:], 0, 0))] += vec[j]
        return out

    vec = np.zeros(basis.dim, dtype=complex)
    vec[basis.index(("e" * n, 0, 0))] = 1.0
    for _ in range(n - m):
        vec = lower(vec, "0")
    for _ in range(m):
        vec = lower(vec, "1")
    coeff = 1.0 / math.sqrt(math.factorial(n) * math.factorial(m) * math.factorial(n - m))
    return StateVector(basis, coeff * vec)


def collective_raise(psi: StateVector) -> StateVector:
    """Apply ``sum_j |1>_j <0|`` to a per-atom state (result in the same basis)."""
    out = np.zeros(psi.basis.dim, dtype=complex)
    for amp, (atoms, n_l, n_r) in zip(psi.amplitudes, psi.basis.labels):
        if amp == 0:
            continue
        for i, a in enumerate(atoms):
            if a == "0":
                out[psi.basis.index((atoms[:i] + "1" + atoms[i + 1:], n_l, n_r))] += amp
    return StateVector(psi.basis, out)


def fidelity(psi: StateVector, phi: StateVector) -> float:
    """``|<phi|psi>|^2`` for normalized states in the same basis."""
    if psi.basis != phi.basis:
        raise BasisMismatchError("fidelity needs both states in the same basis")
    for s in (psi, phi):
        if abs(s.norm_sq - 1.0) > 1e-8:
            raise ValueError("fidelity needs normalized states")
    return float(abs(np.vdot(phi.amplitudes, psi.amplitudes)) ** 2)


def _multinomial(counts) -> int:
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def _class_of(atoms: str):
    return (atoms.count("0"), atoms.count("1"), atoms.count("e"))


def symmetric_projection(full: np.ndarray, full_basis: IndexedBasis,
                         sym_basis: IndexedBasis) -> np.ndarray:
    """Overlaps of per-atom amplitudes (rows = samples) with each symmetric basis state."""
    full = np.atleast_2d(full)
    proj = np.zeros((full.shape[0], sym_basis.dim), dtype=complex)
    slot = {lab: i for i, lab in enumerate(sym_basis.labels)}
    for j, (atoms, n_l, n_r) in enumerate(full_basis.labels):
        counts = _class_of(atoms)
        k = slot.get((counts, n_l, n_r))
        if k is not None:
            proj[:, k] += full[:, j] / math.sqrt(_multinomial(counts))
    return proj


@dataclass(frozen=True)
class OracleReport:
    max_deviation: float
    max_leakage: float
    full_dim: int
    reduced_dim: int


def oracle_compare(params: SystemParams, descriptor_reduced, t_grid,
                   controls: IntegratorControls = ORACLE_CONTROLS) -> OracleReport:
    """Evolve a reduced sector and the full tensor space from matched initial states.

    Deviation is the largest amplitude difference after projecting the full
    state onto the reduced basis; leakage is the full-space weight outside it.
    """
    n = params.n_atoms
    if descriptor_reduced.n != n:
        raise ValueError("descriptor and params disagree on n")
    t_grid = np.asarray(t_grid, dtype=float)
    reduced_basis = build_basis(descriptor_reduced)
    H_red = build_hamiltonian(params, reduced_basis)

    if isinstance(descriptor_reduced, (ReducedSymmetric, SymmetricLadder)):
        m = getattr(descriptor_reduced, "m", 0)
        seed = [(s, 1, 0) for s in _weight_strings(n, m)]
        amps = 1.0 / math.sqrt(len(seed))
    elif isinstance(descriptor_reduced, SingleExcitation):
        seed = [("0" * n, 1, 0)]
        amps = 1.0
    else:
        raise TypeError("oracle compares symmetric or single-excitation sectors")

    full_basis = build_basis(FullTensor(n), seed)
    psi_full = np.zeros(full_basis.dim, dtype=complex)
    for lab in seed:
        psi_full[full_basis.index(lab)] = amps
    H_full = build_hamiltonian(params, full_basis)

    t_end = float(t_grid[-1])
    red = integrate_conditional(H_red, StateVector.basis_state(reduced_basis), t_end, controls, t_grid)
    full = integrate_conditional(H_full, StateVector(full_basis, psi_full), t_end, controls, t_grid)

    if reduced_basis.symmetric:
        proj = symmetric_projection(full.states, full_basis, reduced_basis)
    else:
        proj = np.stack([full.states[:, full_basis.index(lab)] for lab in reduced_basis.labels], axis=1)
    deviation = np.max(np.abs(proj - red.states))
    leakage = np.max(full.norm_sq - np.sum(np.abs(proj) ** 2, axis=1))
    return OracleReport(float(deviation), float(max(leakage, 0.0)), full_basis.dim, reduced_basis.dim)


@dataclass(frozen=True)
class GofResult:
    statistic: float
    pvalue: float
    dof: int
    n_events: int


def click_time_gof(estimate, params: SystemParams, step: int = 0,
                   min_expected: float = 5.0) -> GofResult:
    """Chi-square test of the D1 click-time histogram against the Raman click density.

    The density is renormalized to the histogram window; tail bins are merged
    until every expected count reaches ``min_expected``.
    """
    edges = estimate.hist_edges
    observed = np.asarray(estimate.hist_counts, dtype=float)
    mass = np.array([
        quad(lambda t: float(d1_click_density(params, t, step)), lo, hi,
             epsabs=0, epsrel=1e-10, limit=200)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    ])
    total = observed.sum()
    expected = total * mass / mass.sum()

    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and exp_m:
        obs_m[-1] += acc_o
        exp_m[-1] += acc_e
    res = stats.chisquare(obs_m, exp_m)
    return GofResult(float(res.statistic), float(res.pvalue), len(obs_m) - 1, int(total))
