"""Physical parameters, Hilbert-space sectors and the conditional Hamiltonian.

Atoms carry three relevant levels ``0``, ``1`` and ``e``; the cavity holds at
most one photon per mode (``L`` couples ``0 <-> e``, ``R`` couples ``1 <-> e``).
All rates and detunings are angular frequencies in rad/s.

Basis labels are tuples ``(atoms, n_L, n_R)``.  For per-atom bases ``atoms`` is
a string over ``"01e"`` (atom 1 leftmost).  For the permutation-symmetric bases
``atoms`` is a count triple ``(n0, n1, ne)`` standing for the normalized
equal-weight superposition of every string with those occupations.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

TWO_PI = 2.0 * math.pi
MHZ = 1.0e6

#: Default cap on the atom number for the brute-force tensor basis.
FULL_TENSOR_CAP = 4


class BasisSizeError(ValueError):
    """Requested basis is larger than the configured cap."""


class BasisMismatchError(ValueError):
    """Operands live in incompatible bases."""


@dataclass(frozen=True)
class SystemParams:
    """Rates, detunings and protocol timing for one experiment."""

    g_L: float
    g_R: float
    kappa_L: float
    kappa_R: float
    delta_L: float
    delta_R: float
    n_atoms: int
    wait_time: float
    gamma_s: float = 0.0
    detector_efficiency: float = 1.0

    def __post_init__(self):
        for name in ("g_L", "g_R", "kappa_L", "kappa_R", "gamma_s", "wait_time"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("delta_L", "delta_R"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector_efficiency must lie in [0, 1]")
        g_max = max(self.g_L, self.g_R)
        if g_max > 0 and min(abs(self.delta_L), abs(self.delta_R)) < 10 * g_max:
            warnings.warn(
                "detunings below 10 g: adiabatic elimination is not accurate here",
                stacklevel=3,
            )

    @classmethod
    def uniform(
        cls,
        g: float,
        kappa: float,
        delta_L: float,
        n_atoms: int,
        wait_time: float,
        delta_R: float | None = None,
        gamma_s: float = 0.0,
        detector_efficiency: float = 1.0,
        step: int = 0,
    ) -> "SystemParams":
        """Equal couplings and decay rates on both modes.

        ``delta_R=None`` selects the optimal Raman detuning for ladder ``step``.
        """
        params = cls(g, g, kappa, kappa, delta_L, delta_L if delta_R is None else delta_R,
                     n_atoms, wait_time, gamma_s, detector_efficiency)
        if delta_R is None:
            params = params.replace(delta_R=optimal_detuning(params, step))
        return params

    def replace(self, **changes) -> "SystemParams":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return dataclasses.replace(self, **changes)

    @property
    def g(self) -> float:
        if self.g_L != self.g_R:
            raise ValueError("closed forms assume g_L == g_R")
        return self.g_L

    @property
    def kappa(self) -> float:
        if self.kappa_L != self.kappa_R:
            raise ValueError("closed forms assume kappa_L == kappa_R")
        return self.kappa_L

    @property
    def strong_detuning(self) -> bool:
        g_max = max(self.g_L, self.g_R)
        return min(abs(self.delta_L), abs(self.delta_R)) >= 10 * g_max

    @property
    def timeout_horizon(self) -> float:
        """Trial horizon ``max(T, 10/kappa)``; the slowest open cavity channel sets kappa."""
        rates = [k for k in (self.kappa_L, self.kappa_R) if k > 0]
        if not rates:
            return self.wait_time
        return max(self.wait_time, 10.0 / min(rates))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def practical_params(n_atoms: int = 3, **overrides) -> SystemParams:
    """Trapped-atom parameter set: g = 2pi x 16 MHz, kappa = 2pi x 1.4 MHz,
    T = 0.5 us, Delta_L = 20 g, with the optimal Delta_R."""
    g = TWO_PI * 16 * MHZ
    kwargs = dict(g=g, kappa=TWO_PI * 1.4 * MHZ, delta_L=20 * g, n_atoms=n_atoms,
                  wait_time=0.5e-6)
    kwargs.update(overrides)
    return SystemParams.uniform(**kwargs)


def optimal_detuning(params: SystemParams, step: int = 0) -> float:
    """Delta_R that puts the ladder step ``m -> m+1`` on Raman resonance.

    Equalizes the second-order light shifts of the two ground-manifold states:
    ``Delta_L - Delta_R = ((m+1) g_R^2 - (n-m) g_L^2) / Delta_L``.
    """
    if params.delta_L == 0:
        raise ZeroDivisionError("optimal detuning is singular at Delta_L = 0")
    n = params.n_atoms
    if not 0 <= step <= n - 1:
        raise ValueError(f"ladder step must satisfy 0 <= m <= n-1, got {step}")
    shift = ((step + 1) * params.g_R**2 - (n - step) * params.g_L**2) / params.delta_L
    return params.delta_L - shift


# ---------------------------------------------------------------------------
# coupling profile


@dataclass(frozen=True)
class CouplingProfile:
    """Gaussian standing-wave cavity mode sampled at the atom positions."""

    g0: float
    w0: float
    wave_number: float
    positions: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple(tuple(map(float, p)) for p in self.positions))
        if self.g0 < 0 or self.w0 <= 0:
            raise ValueError("need g0 >= 0 and w0 > 0")

    @classmethod
    def from_factors(cls, g0: float, factors: Sequence[float], w0: float = 20e-6,
                     wavelength: float = 795e-9) -> "CouplingProfile":
        """Place atoms on an antinode with radial offsets giving ``g_i = g0 * f_i``."""
        k = TWO_PI / wavelength
        z = math.pi / (2 * k)
        positions = []
        for f in factors:
            if not 0 < f <= 1:
                raise ValueError("factors must lie in (0, 1]")
            positions.append((w0 * math.sqrt(-math.log(f)), 0.0, z))
        return cls(g0, w0, k, tuple(positions))

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    def couplings(self) -> np.ndarray:
        return np.array([mode_coupling(self, i) for i in range(self.n_atoms)])


def mode_coupling(profile: CouplingProfile, atom_index: int) -> float:
    """``g0 sin(k z) exp(-(x^2 + y^2) / w0^2)`` at the atom's position."""
    x, y, z = profile.positions[atom_index]
    return profile.g0 * math.sin(profile.wave_number * z) * math.exp(-(x * x + y * y) / profile.w0**2)


# ---------------------------------------------------------------------------
# bases


@dataclass(frozen=True)
class ReducedSymmetric:
    n: int


@dataclass(frozen=True)
class SingleExcitation:
    n: int


@dataclass(frozen=True)
class SymmetricLadder:
    n: int
    m: int


@dataclass(frozen=True)
class FullTensor:
    n: int
    cap: int = FULL_TENSOR_CAP


BasisDescriptor = Union[ReducedSymmetric, SingleExcitation, SymmetricLadder, FullTensor]


class IndexedBasis:
    """Ordered list of basis labels with O(1) reverse lookup."""

    def __init__(self, descriptor, labels: Iterable):
        self.descriptor = descriptor
        self.labels = tuple(labels)
        self._index = {label: i for i, label in enumerate(self.labels)}
        if len(self._index) != len(self.labels):
            raise ValueError("duplicate basis labels")

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, IndexedBasis) and self.labels == other.labels

    def __hash__(self) -> int:
        return hash(self.labels)

    def __repr__(self) -> str:
        return f"IndexedBasis({self.descriptor!r}, dim={self.dim})"

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def n_atoms(self) -> int:
        atoms = self.labels[0][0]
        return sum(atoms) if isinstance(atoms, tuple) else len(atoms)

    @property
    def symmetric(self) -> bool:
        return isinstance(self.labels[0][0], tuple)

    def index(self, label) -> int:
        return self._index[label]

    def __contains__(self, label) -> bool:
        return label in self._index

    def label_names(self) -> list[str]:
        return [label_name(label) for label in self.labels]


def label_name(label) -> str:
    atoms, n_l, n_r = label
    cavity = {(0, 0): "vac", (1, 0): "L", (0, 1): "R", (1, 1): "LR"}[(n_l, n_r)]
    if isinstance(atoms, tuple):
        atoms = "S{}.{}.{}".format(*atoms)
    return f"{atoms}|{cavity}"


@dataclass
class StateVector:
    """Complex amplitudes over an :class:`IndexedBasis`."""

    basis: IndexedBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise BasisMismatchError(
                f"amplitude vector of shape {self.amplitudes.shape} for basis of dim {self.basis.dim}"
            )

    @classmethod
    def basis_state(cls, basis: IndexedBasis, label=None) -> "StateVector":
        amps = np.zeros(basis.dim, dtype=complex)
        amps[0 if label is None else basis.index(label)] = 1.0
        return cls(basis, amps)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "StateVector":
        norm = math.sqrt(self.norm_sq)
        if norm == 0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / norm)

    def amplitude(self, label) -> complex:
        return complex(self.amplitudes[self.basis.index(label)])

    def support(self, atol: float = 0.0) -> list:
        return [lab for lab, a in zip(self.basis.labels, self.amplitudes) if abs(a) > atol]


def _string_moves(label):
    """Yield ``(target, atom, mode)`` for every single-atom coupling move.

    Raises if a move would need a second photon in one mode.
    """
    atoms, n_l, n_r = label
    for i, a in enumerate(atoms):
        if a == "0" and n_l:
            yield (atoms[:i] + "e" + atoms[i + 1:], n_l - 1, n_r), i, "L"
        elif a == "1" and n_r:
            yield (atoms[:i] + "e" + atoms[i + 1:], n_l, n_r - 1), i, "R"
        elif a == "e":
            if n_l or n_r:
                raise BasisSizeError(f"state {label_name(label)} couples to two-photon states")
            yield (atoms[:i] + "0" + atoms[i + 1:], 1, 0), i, "L"
            yield (atoms[:i] + "1" + atoms[i + 1:], 0, 1), i, "R"


def _hint_labels(hint) -> list:
    if hint is None:
        raise ValueError("FullTensor basis needs an initial state to seed the closure")
    if isinstance(hint, StateVector):
        labels = hint.support()
    elif isinstance(hint, tuple) and len(hint) == 3 and isinstance(hint[0], str):
        labels = [hint]
    else:
        labels = list(hint)
    for atoms, n_l, n_r in labels:
        if not isinstance(atoms, str) or set(atoms) - set("01e"):
            raise ValueError(f"bad atomic string {atoms!r}")
        if n_l not in (0, 1) or n_r not in (0, 1):
            raise ValueError("cavity occupations must be 0 or 1")
    return labels


def build_basis(descriptor: BasisDescriptor, initial_hint=None) -> IndexedBasis:
    """Enumerate the labels of a sector in its documented order.

    ReducedSymmetric: ``[phi0 (ground, L), phi1 (W, R), phi2 (sym e, vac)]``.
    SymmetricLadder{n, m}: ``[|n,m>|L>, |n,m+1>|R>, sym(m ones, one e)|vac>]``;
    same slot order as ReducedSymmetric so that ``m = 0`` coincides with it.
    SingleExcitation: ``[ground+L, e_1..e_n, 1_1..1_n]``.
    FullTensor: breadth-first closure of ``initial_hint`` under the coupling
    moves, sorted lexicographically over ``(atoms, n_L, n_R)``.
    """
    n = descriptor.n
    if n < 1:
        raise ValueError("need at least one atom")
    if isinstance(descriptor, ReducedSymmetric):
        descriptor = ReducedSymmetric(n)
        labels = [((n, 0, 0), 1, 0), ((n - 1, 1, 0), 0, 1), ((n - 1, 0, 1), 0, 0)]
    elif isinstance(descriptor, SymmetricLadder):
        m = descriptor.m
        if not 0 <= m <= n - 1:
            raise ValueError(f"ladder step must satisfy 0 <= m <= n-1, got {m}")
        labels = [((n - m, m, 0), 1, 0), ((n - m - 1, m + 1, 0), 0, 1), ((n - m - 1, m, 1), 0, 0)]
    elif isinstance(descriptor, SingleExcitation):
        ground = "0" * n
        labels = [(ground, 1, 0)]
        labels += [(ground[:i] + "e" + ground[i + 1:], 0, 0) for i in range(n)]
        labels += [(ground[:i] + "1" + ground[i + 1:], 0, 1) for i in range(n)]
    elif isinstance(descriptor, FullTensor):
        if n > descriptor.cap:
            raise BasisSizeError(f"FullTensor with n={n} exceeds cap {descriptor.cap}")
        seeds = _hint_labels(initial_hint)
        if any(len(s[0]) != n for s in seeds):
            raise ValueError("initial state has the wrong number of atoms")
        seen = set(seeds)
        queue = deque(seeds)
        while queue:
            for target, _, _ in _string_moves(queue.popleft()):
                if target not in seen:
                    seen.add(target)
                    queue.append(target)
        labels = sorted(seen)
    else:
        raise TypeError(f"unknown basis descriptor {descriptor!r}")
    return IndexedBasis(descriptor, labels)


# ---------------------------------------------------------------------------
# Hamiltonian


@dataclass(frozen=True)
class JumpChannel:
    """Collapse operator ``C`` (rows: ``post_basis``) with its rate.

    ``detector`` is ``"D0"``/``"D1"`` for the cavity outputs and ``None`` for
    unmonitored losses.
    """

    name: str
    rate: float
    operator: np.ndarray
    post_basis: IndexedBasis
    detector: str | None

    def decay_operator(self) -> np.ndarray:
        return self.rate * (self.operator.conj().T @ self.operator)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """``H_eff = H_herm - (i/2) sum_k rate_k C_k^dag C_k`` in one basis.

    ``frame_shift`` is added to the diagonal during integration so that states
    are carried in the frame rotating at Delta_L (amplitudes ``c e^{-i Delta_L t}``).
    """

    basis: IndexedBasis
    matrix: np.ndarray
    hermitian: np.ndarray
    channels: tuple[JumpChannel, ...]
    frame_shift: float = 0.0
    params: SystemParams | None = None

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def anti_hermitian(self) -> np.ndarray:
        return self.matrix - self.hermitian

    def channel(self, name_or_detector: str) -> JumpChannel:
        for ch in self.channels:
            if name_or_detector in (ch.name, ch.detector):
                return ch
        raise KeyError(name_or_detector)


def _atom_couplings(params, basis, profile):
    n = basis.n_atoms
    if profile is None:
        return np.full(n, params.g_L), np.full(n, params.g_R)
    if basis.symmetric:
        raise BasisMismatchError("per-atom couplings need a per-atom basis")
    if profile.n_atoms != n:
        raise BasisMismatchError(f"profile has {profile.n_atoms} atoms, basis has {n}")
    g = profile.couplings()
    return g, g.copy()


def _jump_channels(basis, kappa_L, kappa_R, gamma_s):
    channels = []
    for mode, rate, detector in (("L", kappa_L, "D0"), ("R", kappa_R, "D1")):
        slot = 1 if mode == "L" else 2
        sources = [lab for lab in basis.labels if lab[slot]]
        targets = sorted({(a, nl - (mode == "L"), nr - (mode == "R")) for a, nl, nr in sources})
        post = IndexedBasis(basis.descriptor, targets)
        op = np.zeros((post.dim, basis.dim), dtype=complex)
        for lab in sources:
            atoms, nl, nr = lab
            tgt = (atoms, nl - (mode == "L"), nr - (mode == "R"))
            op[post.index(tgt), basis.index(lab)] = math.sqrt(lab[slot])
        channels.append(JumpChannel("a_" + mode, rate, op, post, detector))
    if gamma_s > 0:
        ne = np.array([_excited_count(lab) for lab in basis.labels], dtype=float)
        channels.append(JumpChannel("spontaneous", gamma_s, np.diag(ne).astype(complex), basis, None))
    return tuple(channels)


def _excited_count(label) -> int:
    atoms = label[0]
    return atoms[2] if isinstance(atoms, tuple) else atoms.count("e")


def build_hamiltonian(params: SystemParams, basis: IndexedBasis,
                      profile: CouplingProfile | None = None) -> EffectiveHamiltonian:
    """Interaction-picture non-Hermitian Hamiltonian restricted to ``basis``."""
    if basis.n_atoms != params.n_atoms:
        raise BasisMismatchError(f"basis has {basis.n_atoms} atoms, params have {params.n_atoms}")
    g_l, g_r = _atom_couplings(params, basis, profile)
    dim = basis.dim
    herm = np.zeros((dim, dim), dtype=complex)

    for j, lab in enumerate(basis.labels):
        atoms, n_l, n_r = lab
        herm[j, j] = -params.delta_L * n_l - params.delta_R * n_r
        if basis.symmetric:
            n0, n1, ne = atoms
            # collective |e><0| a_L and |e><1| a_R on normalized symmetric states
            if n_l and n0:
                tgt = ((n0 - 1, n1, ne + 1), n_l - 1, n_r)
                if tgt in basis:
                    herm[basis.index(tgt), j] += g_l[0] * math.sqrt(n0 * (ne + 1))
            if n_r and n1:
                tgt = ((n0, n1 - 1, ne + 1), n_l, n_r - 1)
                if tgt in basis:
                    herm[basis.index(tgt), j] += g_r[0] * math.sqrt(n1 * (ne + 1))
        else:
            for tgt, i, mode in _string_moves(lab):
                if mode == "L" and n_l and tgt in basis:
                    herm[basis.index(tgt), j] += g_l[i]
                elif mode == "R" and n_r and tgt in basis:
                    herm[basis.index(tgt), j] += g_r[i]
    # raising moves are the conjugates of the absorption moves filled above
    lower = np.tril(herm, -1) + np.triu(herm, 1)
    herm = np.diag(np.diag(herm)) + lower + lower.conj().T

    channels = _jump_channels(basis, params.kappa_L, params.kappa_R, params.gamma_s)
    decay = sum((ch.decay_operator() for ch in channels), np.zeros((dim, dim), dtype=complex))
    return EffectiveHamiltonian(basis, herm - 0.5j * decay, herm, channels,
                                frame_shift=params.delta_L, params=params)
