from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.random import Generator, Philox
from scipy import stats
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from conftest import G, KAPPA
from dickecav.analysis import dicke_state, fidelity
from dickecav.analytic import cumulative_success, success_probability_closed
from dickecav.dynamics import integrate_conditional
from dickecav.model import (
    CouplingProfile,
    FullTensor,
    ReducedSymmetric,
    SingleExcitation,
    StateVector,
    SymmetricLadder,
    SystemParams,
    build_basis,
    build_hamiltonian,
    optimal_detuning,
)
from dickecav.trajectory import (
    JumpError,
    LadderSimulator,
    TrialSampler,
    apply_jump,
    estimate_ladder,
    estimate_protocol,
    estimate_success,
    protocol_sampler,
    run_ladder,
    run_protocol,
    sample_trial,
    trajectory_uniforms,
)


def _superposition(basis, lam0, lam1):
    return StateVector(basis, np.array([lam0, lam1, 0.0])).normalized()


def test_d1_jump_heralds_w_state(practical):
    basis = build_basis(ReducedSymmetric(3))
    H = build_hamiltonian(practical, basis)
    post = apply_jump(_superposition(basis, 0.6, 0.8j), H.channel("D1"))
    assert post.basis.labels == (((2, 1, 0), 0, 0),)
    assert post.norm_sq == pytest.approx(1.0, abs=1e-12)


def test_d0_jump_returns_to_ground(practical):
    basis = build_basis(ReducedSymmetric(3))
    H = build_hamiltonian(practical, basis)
    post = apply_jump(_superposition(basis, 0.6, 0.8j), H.channel("a_L"))
    assert post.basis.labels == (((3, 0, 0), 0, 0),)


def test_full_tensor_jump_gives_w_strings(practical):
    basis = build_basis(FullTensor(3), ("000", 1, 0))
    H = build_hamiltonian(practical, basis)
    traj = integrate_conditional(H, StateVector.basis_state(basis, ("000", 1, 0)), 1e-7,
                                 t_eval=[1e-7])
    post = apply_jump(traj.state(0), H.channel("D1"))
    assert all(lab[1:] == (0, 0) for lab in post.basis.labels)
    assert fidelity(post, dicke_state(3, 1, post.basis)) == pytest.approx(1.0, abs=1e-12)
    ground = apply_jump(traj.state(0), H.channel("D0"))
    assert ground.support(1e-12) == [("000", 0, 0)]


def test_jump_without_photon_raises(practical):
    basis = build_basis(ReducedSymmetric(3))
    H = build_hamiltonian(practical, basis)
    with pytest.raises(JumpError):
        apply_jump(StateVector.basis_state(basis), H.channel("D1"))


def test_closed_right_cavity_only_fires_d0(practical):
    p = practical.replace(kappa_R=0.0)
    sampler = protocol_sampler(p)
    batch = sampler.sample(trajectory_uniforms(3, 0, 2000))
    counts = batch.counts()
    assert counts["D1_click"] == 0
    assert counts["D0_click"] > 0


def test_probability_bookkeeping(practical):
    sampler = protocol_sampler(practical.replace(gamma_s=1e6))
    traj = sampler.trajectory
    H = sampler.H
    t = np.linspace(0, sampler.t_max, 20001)
    psi = traj.states_at(t)
    total = sum(np.einsum("bi,ij,bj->b", psi.conj(), ch.decay_operator(), psi).real
                for ch in H.channels)
    integral = trapezoid(total, t)
    assert traj.norm_sq_at(sampler.t_max)[0] + integral == pytest.approx(1.0, abs=1e-6)


def test_jump_times_solve_norm_equation(practical):
    sampler = protocol_sampler(practical)
    u = np.array([0.9, 0.5, 0.2, 0.01])
    batch = sampler.sample(np.column_stack([u, np.zeros((4, 3))]))
    f = sampler.trajectory.norm_sq_at
    for ui, ti in zip(u, batch.times):
        root = brentq(lambda s: f(s)[0] - ui, 0, sampler.t_max, xtol=1e-15)
        assert abs(ti - root) <= 1e-9 * sampler.t_max


def test_outcomes_are_exclusive_and_normalized(practical):
    sampler = protocol_sampler(practical)
    batch = sampler.sample(trajectory_uniforms(11, 0, 300))
    assert sum(batch.counts().values()) == 300
    for i in range(300):
        out = batch.outcome(i)
        if out.event is not None:
            assert out.post_state.norm_sq == pytest.approx(1.0, abs=1e-9)
            assert 0 <= out.event.time <= sampler.t_max
        else:
            assert out.terminal == "timeout"


def test_timeout_keeps_unnormalized_state(practical):
    sampler = protocol_sampler(practical)
    out = sampler.sample(np.array([[1e-9, 0.5, 0.5, 0.5]])).outcome(0)
    assert out.terminal == "timeout"
    assert out.post_state.norm_sq == pytest.approx(sampler.final_norm_sq, rel=1e-9)


def test_sample_trial_from_generator(practical):
    basis = build_basis(ReducedSymmetric(3))
    H = build_hamiltonian(practical, basis)
    out = sample_trial(H, StateVector.basis_state(basis), practical.timeout_horizon,
                       Generator(Philox(key=5)))
    assert out.terminal in ("D0_click", "D1_click", "timeout")


def test_uniform_streams_are_chunk_invariant():
    whole = trajectory_uniforms(42, 0, 1000)
    parts = np.vstack([trajectory_uniforms(42, s, 250) for s in range(0, 1000, 250)])
    np.testing.assert_array_equal(whole, parts)


def test_estimate_is_deterministic_and_job_independent(practical):
    a = estimate_success(practical, 20000, 9, jobs=1)
    b = estimate_success(practical, 20000, 9, jobs=3)
    assert a.p_hat == b.p_hat
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.hist_counts, b.hist_counts)


def test_full_model_click_density_matches_its_own_dynamics(practical):
    # exact D1 density of the 3-level conditional state: kappa_R |c_R(t)|^2
    est = estimate_success(practical, 100000, 17, bins=40, jobs=4)
    sampler = protocol_sampler(practical)
    edges = est.hist_edges
    t = np.linspace(0, sampler.t_max, 40 * 400 + 1)
    dens = KAPPA * np.abs(sampler.trajectory.states_at(t)[:, 1]) ** 2
    cum = np.concatenate([[0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(t))])
    mass = np.diff(np.interp(edges, t, cum))
    expected = est.n_traj * mass
    keep = expected >= 5
    obs = est.hist_counts[keep].astype(float)
    exp = expected[keep]
    chi2 = np.sum((obs - exp) ** 2 / exp)
    assert stats.chi2.sf(chi2, keep.sum()) > 0.001
    # and the overall D1 fraction matches the exact integral
    assert est.p_hat == pytest.approx(cum[-1], abs=3 * est.stderr)


def test_detector_efficiency_scales_heralds(practical):
    half = practical.replace(detector_efficiency=0.5)
    est = estimate_success(half, 60000, 4)
    target = 0.5 * success_probability_closed(practical)
    assert abs(est.p_hat - target) < 3 * est.stderr + 0.002


def test_overdamped_heralds_are_rare():
    p = SystemParams.uniform(G, 10 * G, 20 * G, 3, 0.5e-6)
    closed = success_probability_closed(p)
    assert closed == pytest.approx(6 / (400 * 100 + 12), rel=1e-12)
    est = estimate_success(p, 50000, 8, model="eliminated")
    # expected ~7 events: accept anything a Poisson(50000 * closed) would give at 1e-4
    lam = est.n_traj * closed
    hits = est.counts["D1_click"]
    assert stats.poisson.cdf(hits, lam) > 1e-4 and stats.poisson.sf(hits - 1, lam) > 1e-4


def test_profile_sampler_runs(practical):
    prof = CouplingProfile.from_factors(G, [1.0, 1.0, 0.9])
    est = estimate_success(practical, 5000, 2, basis=SingleExcitation(3), profile=prof)
    assert 0.3 < est.p_hat < 0.5


def test_protocol_single_trial_is_single_shot(practical):
    stats_ = estimate_protocol(practical, 4000, 1, 6)
    assert stats_.success_rate == pytest.approx(0.3983, abs=4 * stats_.stderr + 0.004)
    assert all(t == 1 for t in stats_.trials[:, 0])


def test_protocol_blind_detectors_never_succeed(practical):
    res = run_protocol(practical.replace(detector_efficiency=0.0), 7, 3)
    assert not res.success
    assert res.trials_used == [7]
    assert res.failure == "budget"
    assert res.events == []


def test_protocol_result_fields(practical):
    res = run_protocol(practical, 50, 12)
    assert res.success
    assert res.rng_seed == 12
    assert res.events[-1].detector == "D1"
    assert all(e.detector == "D0" for e in res.events[:-1])
    assert res.trials_used[0] <= 50
    assert res.elapsed > 0
    assert res.final_state.basis.labels == (((2, 1, 0), 0, 0),)


def test_protocol_cumulative(practical):
    s = estimate_protocol(practical, 4000, 10, 21, jobs=2)
    target = cumulative_success(success_probability_closed(practical), 10)
    assert abs(s.success_rate - target) < 3 * math.sqrt(target * (1 - target) / 4000) + 0.003


def test_ladder_first_step_equals_protocol(practical):
    a = run_protocol(practical, 40, 77)
    b = run_ladder(practical, 1, 40, 77)
    assert a.trials_used == b.trials_used
    assert [e.time for e in a.events] == [e.time for e in b.events]


def test_ladder_reaches_top_for_two_atoms():
    p = SystemParams.uniform(G, KAPPA, 20 * G, 2, 0.5e-6)
    res = run_ladder(p, 1, 100, 3, oracle=True)
    assert res.success and res.m_reached == 1
    assert res.step_fidelities[0] == pytest.approx(1.0, abs=1e-9)
    # one more heralded step from |2,1> lands on |11>
    sim = LadderSimulator(p)
    rng = Generator(Philox(key=4))
    batch = sim.sampler(1).sample(rng.random((64, 4)))
    i = int(np.flatnonzero(batch.terminal == 1)[0])
    t_click = float(batch.times[i])
    fids = sim.oracle_replay([res.events[-1].time, t_click])
    assert fids[1] == pytest.approx(1.0, abs=1e-9)


def test_ladder_step_retunes_detuning(practical):
    sim = LadderSimulator(practical)
    assert sim.step_params(1).delta_R == pytest.approx(optimal_detuning(practical, 1))
    assert sim.sampler(1).H.basis.descriptor == SymmetricLadder(3, 1)
    with pytest.raises(ValueError):
        sim.check_target(3)


def test_ladder_budget_zero_fails_immediately(practical):
    res = run_ladder(practical, 2, 0, 1)
    assert not res.success
    assert res.failure == "budget"
    assert res.m_reached == 0


def test_ladder_unheralded_photon_aborts(practical):
    lossy = practical.replace(detector_efficiency=0.3)
    s = estimate_ladder(lossy, 2, 400, 100, 5)
    assert s.failures.get("unheralded", 0) > 0
    assert s.completed + sum(s.failures.values()) == 400


def test_ladder_estimate_job_independent(practical):
    a = estimate_ladder(practical, 2, 1500, 100, 13, jobs=1)
    b = estimate_ladder(practical, 2, 1500, 100, 13, jobs=3)
    assert a.step_trials == b.step_trials
    assert a.step_elapsed == b.step_elapsed


def test_eliminated_ladder_model(practical):
    s = estimate_ladder(practical, 2, 2000, 100, 8, model="eliminated")
    for m in range(2):
        pm = practical.replace(delta_R=optimal_detuning(practical, m))
        assert abs(s.step_p_hat[m] - success_probability_closed(pm, m)) < 4 * s.step_stderr[m]


def test_sampler_needs_normalized_start(practical):
    basis = build_basis(ReducedSymmetric(3))
    H = build_hamiltonian(practical, basis)
    with pytest.raises(ValueError):
        TrialSampler(H, StateVector(basis, [0.5, 0, 0]))
