from __future__ import annotations

import math
from itertools import permutations

import numpy as np
import pytest

from conftest import G
from dickecav.analysis import (
    collective_raise,
    dicke_state,
    dicke_state_collective,
    fidelity,
    oracle_compare,
    qubit_basis,
)
from dickecav.dynamics import integrate_conditional
from dickecav.model import (
    BasisMismatchError,
    CouplingProfile,
    FullTensor,
    ReducedSymmetric,
    SingleExcitation,
    StateVector,
    SymmetricLadder,
    build_basis,
    build_hamiltonian,
)
from dickecav.trajectory import apply_jump


def test_two_atom_w_state():
    psi = dicke_state(2, 1)
    assert psi.amplitude(("10", 0, 0)) == pytest.approx(1 / math.sqrt(2))
    assert psi.amplitude(("01", 0, 0)) == pytest.approx(1 / math.sqrt(2))
    assert psi.amplitude(("00", 0, 0)) == 0


def test_three_atom_w_state():
    psi = dicke_state(3, 1)
    for s in ("100", "010", "001"):
        assert psi.amplitude((s, 0, 0)) == pytest.approx(1 / math.sqrt(3))
    assert len(psi.support()) == 3


def test_top_of_ladder():
    psi = dicke_state(3, 3)
    assert psi.support() == [("111", 0, 0)]


def test_out_of_range():
    with pytest.raises(ValueError):
        dicke_state(3, 4)
    with pytest.raises(ValueError):
        dicke_state_collective(2, -1)


def test_symmetric_basis_slot():
    basis = build_basis(SymmetricLadder(3, 1))
    psi = dicke_state(3, 2, basis, cavity=(0, 1))
    assert psi.amplitudes[1] == 1


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_collective_definition_matches_enumeration(n):
    for m in range(n + 1):
        psi = dicke_state_collective(n, m)
        ref = dicke_state(n, m)
        got = {lab: psi.amplitude(lab) for lab in psi.support(1e-14)}
        want = {lab: ref.amplitude(lab) for lab in ref.support()}
        assert got.keys() == want.keys()
        for lab in want:
            assert got[lab] == pytest.approx(want[lab], abs=1e-14)


@pytest.mark.parametrize("n,m", [(3, 1), (4, 2), (4, 3)])
def test_permutation_invariance(n, m):
    psi = dicke_state(n, m)
    for perm in permutations(range(n)):
        for lab in psi.basis.labels:
            moved = ("".join(lab[0][i] for i in perm), 0, 0)
            assert psi.amplitude(moved) == psi.amplitude(lab)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_ladder_algebra(n):
    for m in range(n):
        raised = collective_raise(dicke_state(n, m)).amplitudes
        target = dicke_state(n, m + 1).amplitudes
        coeff = math.sqrt((n - m) * (m + 1))
        np.testing.assert_allclose(raised, coeff * target, atol=1e-14)


def test_fidelity_basics():
    basis = qubit_basis(2)
    a = StateVector.basis_state(basis, ("01", 0, 0))
    b = StateVector.basis_state(basis, ("10", 0, 0))
    w = dicke_state(2, 1)
    assert fidelity(a, a) == 1.0
    assert fidelity(a, b) == 0.0
    assert fidelity(w, a) == pytest.approx(0.5)
    assert fidelity(StateVector(basis, 1j * w.amplitudes), w) == pytest.approx(1.0)


def test_fidelity_rejects_mismatch():
    with pytest.raises(BasisMismatchError):
        fidelity(dicke_state(2, 1), dicke_state(3, 1))
    basis = qubit_basis(2)
    with pytest.raises(ValueError):
        fidelity(StateVector(basis, np.ones(4)), dicke_state(2, 1))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_oracle_reduced(practical, n):
    p = practical.replace(n_atoms=n)
    rep = oracle_compare(p, ReducedSymmetric(n), np.linspace(0, 2e-7, 25))
    assert rep.max_deviation < 1e-9
    assert rep.max_leakage < 1e-9
    if n == 1:
        assert rep.full_dim == rep.reduced_dim == 3


@pytest.mark.parametrize("n,m", [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)])
def test_oracle_ladder(practical, n, m):
    p = practical.replace(n_atoms=n)
    rep = oracle_compare(p, SymmetricLadder(n, m), np.linspace(0, 2e-7, 25))
    assert rep.max_deviation < 1e-9


@pytest.mark.parametrize("n", [2, 3, 4])
def test_oracle_single_excitation(practical, n):
    p = practical.replace(n_atoms=n)
    rep = oracle_compare(p, SingleExcitation(n), np.linspace(0, 2e-7, 25))
    assert rep.max_deviation < 1e-9
    assert rep.full_dim == 2 * n + 1


def test_oracle_rejects_mismatched_n(practical):
    with pytest.raises(ValueError):
        oracle_compare(practical, ReducedSymmetric(2), [0.0, 1e-7])


def test_inhomogeneous_herald_fidelity_is_below_one(practical):
    # reported quantity: the herald no longer projects exactly onto |3,1>
    prof = CouplingProfile.from_factors(G, [1.0, 1.0, 0.9])
    basis = build_basis(FullTensor(3), ("000", 1, 0))
    H = build_hamiltonian(practical, basis, prof)
    traj = integrate_conditional(H, StateVector.basis_state(basis, ("000", 1, 0)), 2e-7,
                                 t_eval=[2e-7])
    post = apply_jump(traj.state(0), H.channel("D1"))
    f = fidelity(post, dicke_state(3, 1, post.basis))
    assert 0.0 < f < 1.0
    print(f"inhomogeneous herald fidelity: {f:.6f}")
