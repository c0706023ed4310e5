"""Quantum-jump Monte Carlo of the heralding protocol.

Every trial of a given step starts from the same state, so the conditional
no-click trajectory is integrated once per (Hamiltonian, initial state) and
then reused: each trial only needs its own waiting time, found by inverting
the monotone no-click probability ``||psi(t)||^2``.

Random numbers are counter based (Philox).  Trajectory ``i`` of a Monte Carlo
estimate consumes counter block ``i`` of the stream keyed by the seed; run
``r`` of a protocol or ladder estimate owns its own keyed stream.  Results are
therefore identical however the work is split across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .analysis import dicke_state, fidelity
from .dynamics import (
    ORACLE_CONTROLS,
    IntegratorControls,
    eliminated_hamiltonian,
    integrate_conditional,
)
from .model import (
    FULL_TENSOR_CAP,
    CouplingProfile,
    EffectiveHamiltonian,
    FullTensor,
    JumpChannel,
    ReducedSymmetric,
    StateVector,
    SymmetricLadder,
    SystemParams,
    build_basis,
    build_hamiltonian,
    optimal_detuning,
)

TERMINALS = ("D0_click", "D1_click", "timeout")
_CHUNK = 8192


class JumpError(RuntimeError):
    """A collapse was requested through a channel that cannot fire."""


@dataclass(frozen=True)
class DetectionEvent:
    time: float
    detector: str
    trial_index: int
    ladder_step: int = 0


@dataclass
class TrialOutcome:
    terminal: str
    event: DetectionEvent | None
    post_state: StateVector
    time: float
    lost: str | None = None  # channel of an unrecorded decay, if any


@dataclass
class ProtocolResult:
    success: bool
    trials_used: list[int]
    elapsed: float
    final_state: StateVector | None
    rng_seed: int | None
    events: list[DetectionEvent] = field(default_factory=list)
    m_reached: int = 0
    step_fidelities: list[float] = field(default_factory=list)
    step_elapsed: list[float] = field(default_factory=list)
    failure: str | None = None


def apply_jump(psi: StateVector, channel: JumpChannel) -> StateVector:
    """Collapse ``psi`` through ``channel`` and renormalize."""
    if psi.basis.dim != channel.operator.shape[1]:
        raise JumpError("state and channel bases differ")
    out = channel.operator @ psi.amplitudes
    norm = math.sqrt(float(np.vdot(out, out).real))
    if norm == 0.0:
        raise JumpError(f"channel {channel.name} cannot fire from this state")
    return StateVector(channel.post_basis, out / norm)


def trajectory_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms for trajectories ``start .. start+count-1``, four per trajectory."""
    bitgen = Philox(key=int(seed))
    bitgen.advance(int(start))
    return Generator(bitgen).random((count, 4))


def run_stream(seed: int, index: int) -> Generator:
    """Independent counter-based stream for protocol run ``index``."""
    return Generator(Philox(key=int(seed) + ((int(index) + 1) << 64)))


class TrialBatch:
    """Vectorized trial results; ``terminal`` indexes :data:`TERMINALS`."""

    def __init__(self, sampler, times, channel, detected, terminal, states):
        self.sampler = sampler
        self.times = times
        self.channel = channel
        self.detected = detected
        self.terminal = terminal
        self.states = states

    def __len__(self) -> int:
        return len(self.times)

    def counts(self) -> dict[str, int]:
        return {name: int(np.sum(self.terminal == i)) for i, name in enumerate(TERMINALS)}

    def outcome(self, i: int, trial_index: int = 0, step: int = 0) -> TrialOutcome:
        H = self.sampler.H
        psi = StateVector(H.basis, self.states[i])
        k = int(self.channel[i])
        if k < 0:
            return TrialOutcome("timeout", None, psi, float(self.times[i]))
        ch = H.channels[k]
        post = apply_jump(psi, ch)
        if not self.detected[i]:
            return TrialOutcome("timeout", None, post, float(self.times[i]), lost=ch.name)
        event = DetectionEvent(float(self.times[i]), ch.detector, trial_index, step)
        return TrialOutcome(TERMINALS[int(self.terminal[i])], event, post, float(self.times[i]))


class TrialSampler:
    """Waiting-time sampler for repeated trials from one initial state."""

    def __init__(self, H: EffectiveHamiltonian, psi0: StateVector, t_max: float | None = None,
                 controls: IntegratorControls | None = None):
        if abs(psi0.norm_sq - 1.0) > 1e-9:
            raise ValueError("initial state must be normalized")
        self.H = H
        self.psi0 = psi0
        self.t_max = H.params.timeout_horizon if t_max is None else t_max
        self.trajectory = integrate_conditional(H, psi0, self.t_max, controls)
        # running minimum guards the bracket search against round-off wiggles
        self._norm = np.minimum.accumulate(self.trajectory.node_norm_sq)
        self._decay = [ch.decay_operator() for ch in H.channels]
        eta = H.params.detector_efficiency if H.params is not None else 1.0
        self.efficiency = eta
        # fixed iteration count keeps each trial independent of batch composition
        tol = 1e-9 * self.t_max
        widest = float(np.max(np.diff(self.trajectory.nodes_t)))
        self._bisections = max(0, int(math.ceil(math.log2(max(widest, tol) / tol))))
        self._has_detector = np.array([ch.detector is not None for ch in H.channels])
        self._code = np.array([TERMINALS.index(f"{ch.detector}_click") if ch.detector else 2
                               for ch in H.channels])
        self._d1 = np.array([ch.detector == "D1" for ch in H.channels])

    @property
    def final_norm_sq(self) -> float:
        return float(self._norm[-1])

    def _jump_times(self, u):
        traj = self.trajectory
        nodes = traj.nodes_t
        k = np.searchsorted(-self._norm, -u, side="left")
        seg = np.clip(k - 1, 0, len(nodes) - 2)
        lo, hi = nodes[seg].copy(), nodes[seg + 1].copy()
        for _ in range(self._bisections):
            mid = 0.5 * (lo + hi)
            above = traj.norm_sq_at(mid, seg) > u
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        t = 0.5 * (lo + hi)
        return t, traj.states_at(t, seg)

    def sample(self, uniforms: np.ndarray) -> TrialBatch:
        """One trial per row of ``uniforms`` (columns: waiting time, channel, efficiency)."""
        uniforms = np.atleast_2d(uniforms)
        count = len(uniforms)
        u, v, w = uniforms[:, 0], uniforms[:, 1], uniforms[:, 2]
        jumps = u > self._norm[-1]
        times = np.full(count, self.t_max)
        states = np.repeat(self.trajectory.nodes_y[-1:], count, axis=0)
        channel = np.full(count, -1)
        detected = np.zeros(count, dtype=bool)
        terminal = np.full(count, 2)
        if np.any(jumps):
            t, psi = self._jump_times(u[jumps])
            times[jumps] = t
            states[jumps] = psi
            weights = np.stack([np.einsum("bi,ij,bj->b", psi.conj(), m, psi).real
                                for m in self._decay], axis=1)
            cum = np.cumsum(weights, axis=1)
            pick = np.sum(cum < (v[jumps] * cum[:, -1])[:, None], axis=1)
            pick = np.minimum(pick, len(self._decay) - 1)
            channel[jumps] = pick
            seen = self._has_detector[pick] & (w[jumps] < self.efficiency)
            detected[jumps] = seen
            terminal[jumps] = np.where(seen, self._code[pick], 2)
        return TrialBatch(self, times, channel, detected, terminal, states)

    def unheralded_d1(self, batch: TrialBatch) -> np.ndarray:
        """Trials whose R photon escaped without a recorded click."""
        lost = (batch.channel >= 0) & ~batch.detected
        return lost & self._d1[np.maximum(batch.channel, 0)]


def sample_trial(H: EffectiveHamiltonian, psi0: StateVector, T_max: float,
                 rng: Generator, controls: IntegratorControls | None = None) -> TrialOutcome:
    """A single trial; integrates the conditional trajectory afresh."""
    return TrialSampler(H, psi0, T_max, controls).sample(rng.random((1, 4))).outcome(0)


def protocol_sampler(params: SystemParams, basis=None, profile: CouplingProfile | None = None,
                     controls: IntegratorControls | None = None) -> TrialSampler:
    """Sampler for trials starting from the first slot of ``basis`` (ground atoms + L photon)."""
    basis = build_basis(basis or ReducedSymmetric(params.n_atoms))
    H = build_hamiltonian(params, basis, profile)
    return TrialSampler(H, StateVector.basis_state(basis), controls=controls)


def _as_rng(rng) -> tuple[Generator, int | None]:
    if isinstance(rng, Generator):
        return rng, None
    return Generator(Philox(key=int(rng))), int(rng)


@dataclass
class _Climb:
    trials: np.ndarray
    elapsed: np.ndarray
    click_times: np.ndarray
    m_reached: np.ndarray
    failure: list
    post_states: list
    events: list


def _climb(sampler_for, gens, target_m, budget, record_events=False, chunk=16) -> _Climb:
    """Run every stream through ladder steps ``0 .. target_m-1``.

    Each stream draws its trials ``chunk`` at a time; leftovers of a chunk are
    discarded once the step is heralded.  The stopping rules are those of the
    physical protocol: D1 heralds the step, D0 or a timeout repeats it, an
    unrecorded R photon past the first step aborts (the atoms moved up the
    ladder without a herald).
    """
    runs = len(gens)
    out = _Climb(np.zeros((runs, target_m), dtype=int), np.zeros((runs, target_m)),
                 np.full((runs, target_m), np.nan), np.zeros(runs, dtype=int),
                 [None] * runs, [None] * runs, [[] for _ in range(runs)])
    alive = list(range(runs))
    for m in range(target_m):
        sampler = sampler_for(m)
        pending = alive
        while pending:
            sizes = [min(chunk, budget - int(out.trials[r, m])) for r in pending]
            for r, size in zip(pending, sizes):
                if size <= 0:
                    out.failure[r] = "budget"
            drawing = [(r, size) for r, size in zip(pending, sizes) if size > 0]
            if not drawing:
                break
            batch = sampler.sample(np.vstack([gens[r].random((size, 4)) for r, size in drawing]))
            abort = sampler.unheralded_d1(batch) if m > 0 else np.zeros(len(batch), dtype=bool)
            stop_mask = (batch.terminal == 1) | abort
            durations = np.where(batch.terminal == 2, sampler.t_max, batch.times)
            offset = 0
            pending = []
            for r, size in drawing:
                window = slice(offset, offset + size)
                hits = np.flatnonzero(stop_mask[window])
                used = int(hits[0]) + 1 if len(hits) else size
                first = int(out.trials[r, m])
                out.trials[r, m] += used
                out.elapsed[r, m] += float(np.sum(durations[offset:offset + used]))
                if record_events:
                    for i in range(offset, offset + used):
                        code = int(batch.terminal[i])
                        if code != 2:
                            out.events[r].append(DetectionEvent(
                                float(batch.times[i]), TERMINALS[code][:2], first + i - offset, m))
                if len(hits):
                    i = offset + int(hits[0])
                    if batch.terminal[i] == 1:
                        out.m_reached[r] = m + 1
                        out.click_times[r, m] = batch.times[i]
                        out.post_states[r] = batch.outcome(i, first + i - offset, m).post_state
                    else:
                        out.failure[r] = "unheralded"
                elif out.trials[r, m] < budget:
                    pending.append(r)
                else:
                    out.failure[r] = "budget"
                offset += size
        alive = [r for r in alive if out.m_reached[r] == m + 1]
    return out


def run_protocol(params: SystemParams, max_trials: int, rng, *,
                 sampler: TrialSampler | None = None) -> ProtocolResult:
    """Reinject an L photon until D1 heralds the W state or ``max_trials`` is spent.

    A D0 click leaves the atoms in the ground state; a timeout (or a click the
    detector missed) discards the atoms' state and resets them.
    """
    if max_trials < 0:
        raise ValueError("max_trials must be >= 0")
    rng, seed = _as_rng(rng)
    sampler = sampler or protocol_sampler(params)
    climb = _climb(lambda m: sampler, [rng], 1, max_trials, record_events=True)
    success = bool(climb.m_reached[0] == 1)
    return ProtocolResult(success, [int(climb.trials[0, 0])], float(climb.elapsed[0].sum()),
                          climb.post_states[0], seed, climb.events[0], int(climb.m_reached[0]),
                          step_elapsed=[float(climb.elapsed[0, 0])],
                          failure=None if success else climb.failure[0] or "budget")


class LadderSimulator:
    """One trial sampler per ladder step, each at its own optimal Delta_R."""

    def __init__(self, params: SystemParams, controls: IntegratorControls | None = None,
                 model: str = "full"):
        if model not in ("full", "eliminated"):
            raise ValueError(f"unknown model {model!r}")
        self.params = params
        self.controls = controls
        self.model = model
        self._samplers: dict[int, TrialSampler] = {}

    def step_params(self, m: int) -> SystemParams:
        return self.params.replace(delta_R=optimal_detuning(self.params, m))

    def sampler(self, m: int) -> TrialSampler:
        if m not in self._samplers:
            params = self.step_params(m)
            if self.model == "eliminated":
                H = eliminated_hamiltonian(params, m)
                self._samplers[m] = TrialSampler(H, StateVector.basis_state(H.basis),
                                                 controls=self.controls)
            else:
                self._samplers[m] = protocol_sampler(params, SymmetricLadder(self.params.n_atoms, m),
                                                     controls=self.controls)
        return self._samplers[m]

    def check_target(self, target_m: int) -> None:
        if not 1 <= target_m <= max(self.params.n_atoms - 1, 1):
            raise ValueError(f"target_m must lie in [1, n-1], got {target_m}")

    def oracle_replay(self, click_times) -> list[float]:
        """Replay heralded steps in the full tensor space; fidelity with ``|n, m+1>`` per step."""
        n = self.params.n_atoms
        if n > FULL_TENSOR_CAP:
            raise ValueError(f"oracle check limited to n <= {FULL_TENSOR_CAP}")
        atoms = dicke_state(n, 0)
        fids = []
        for m, t_click in enumerate(click_times):
            support = atoms.support()
            basis = build_basis(FullTensor(n), [(a, 1, 0) for a, _, _ in support])
            amps = np.zeros(basis.dim, dtype=complex)
            for lab in support:
                amps[basis.index((lab[0], 1, 0))] = atoms.amplitude(lab)
            H = build_hamiltonian(self.step_params(m), basis)
            traj = integrate_conditional(H, StateVector(basis, amps), t_click, ORACLE_CONTROLS,
                                         t_eval=[t_click])
            atoms = apply_jump(traj.state(0), H.channel("D1"))
            fids.append(fidelity(atoms, dicke_state(n, m + 1, atoms.basis)))
        return fids

    def run(self, target_m: int, max_trials_per_step: int, rng, oracle: bool = False) -> ProtocolResult:
        self.check_target(target_m)
        rng, seed = _as_rng(rng)
        climb = _climb(self.sampler, [rng], target_m, max_trials_per_step, record_events=True)
        reached = int(climb.m_reached[0])
        steps = reached + (climb.failure[0] is not None)
        result = ProtocolResult(reached == target_m, [int(x) for x in climb.trials[0, :steps]],
                                float(climb.elapsed[0].sum()), climb.post_states[0], seed,
                                climb.events[0], reached,
                                step_elapsed=[float(x) for x in climb.elapsed[0, :steps]],
                                failure=climb.failure[0])
        if oracle and reached:
            result.step_fidelities = self.oracle_replay(climb.click_times[0, :reached])
        return result


def run_ladder(params: SystemParams, target_m: int, max_trials_per_step: int, rng, *,
               oracle: bool = False, simulator: LadderSimulator | None = None,
               model: str = "full") -> ProtocolResult:
    """Climb ``|n,0> -> |n,1> -> ... -> |n,target_m>`` one heralded photon at a time.

    A D0 click within a step leaves the atoms in ``|n,m>``, so only that step
    repeats.  With ``oracle=True`` the heralded steps are replayed in the full
    tensor space and their fidelities with the Dicke states recorded.
    """
    simulator = simulator or LadderSimulator(params, model=model)
    return simulator.run(target_m, max_trials_per_step, rng, oracle)


# ---------------------------------------------------------------------------
# batched estimates

_RUN_BLOCK = 1024


def _map_ordered(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class SuccessEstimate:
    p_hat: float
    stderr: float
    n_traj: int
    seed: int
    counts: dict[str, int]
    t_max: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    terminal: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)

    @property
    def d1_times(self) -> np.ndarray:
        return self.times[self.terminal == 1]


def estimate_success(params: SystemParams, n_traj: int, rng_seed: int, *, bins: int = 50,
                     jobs: int = 1, model: str = "full", step: int = 0, basis=None,
                     profile: CouplingProfile | None = None,
                     controls: IntegratorControls | None = None) -> SuccessEstimate:
    """Monte Carlo frequency of D1 heralds over ``n_traj`` independent trials.

    ``model="full"`` samples the conditional dynamics including the excited
    level; ``model="eliminated"`` samples the two-level Raman dynamics left
    after adiabatic elimination.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if model == "full":
        if basis is None and step > 0:
            basis = SymmetricLadder(params.n_atoms, step)
        sampler = protocol_sampler(params, basis, profile, controls)
    elif model == "eliminated":
        H = eliminated_hamiltonian(params, step)
        sampler = TrialSampler(H, StateVector.basis_state(H.basis), controls=controls)
    else:
        raise ValueError(f"unknown model {model!r}")

    def work(start):
        batch = sampler.sample(trajectory_uniforms(rng_seed, start, min(_CHUNK, n_traj - start)))
        return batch.terminal, batch.times

    parts = _map_ordered(work, list(range(0, n_traj, _CHUNK)), jobs)
    terminal = np.concatenate([p[0] for p in parts])
    times = np.concatenate([p[1] for p in parts])
    counts = {name: int(np.sum(terminal == i)) for i, name in enumerate(TERMINALS)}
    p_hat = counts["D1_click"] / n_traj
    edges = np.linspace(0.0, sampler.t_max, bins + 1)
    hist, _ = np.histogram(times[terminal == 1], bins=edges)
    return SuccessEstimate(p_hat, math.sqrt(p_hat * (1 - p_hat) / n_traj), n_traj, int(rng_seed),
                           counts, sampler.t_max, edges, hist, terminal, times)


@dataclass
class LadderStats:
    """Aggregate over independent protocol or ladder runs."""

    n_runs: int
    target_m: int
    seed: int
    completed: int
    step_trials: list[int]
    step_successes: list[int]
    step_elapsed: list[float]
    trials: np.ndarray = field(repr=False)
    failures: dict[str, int] = field(default_factory=dict)
    fidelities: list[list[float]] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.completed / self.n_runs

    @property
    def stderr(self) -> float:
        p = self.success_rate
        return math.sqrt(p * (1 - p) / self.n_runs)

    @property
    def step_p_hat(self) -> list[float]:
        return [s / t if t else float("nan") for s, t in zip(self.step_successes, self.step_trials)]

    @property
    def step_stderr(self) -> list[float]:
        return [math.sqrt(p * (1 - p) / t) if t else float("nan")
                for p, t in zip(self.step_p_hat, self.step_trials)]


def _estimate_climb(sim: LadderSimulator, target_m, n_runs, budget, seed, oracle_runs, jobs):
    for m in range(target_m):
        sim.sampler(m)
    blocks = list(range(0, n_runs, _RUN_BLOCK))

    def work(start):
        gens = [run_stream(seed, r) for r in range(start, min(start + _RUN_BLOCK, n_runs))]
        return _climb(sim.sampler, gens, target_m, budget)

    parts = _map_ordered(work, blocks, jobs)
    trials = np.concatenate([p.trials for p in parts])
    elapsed = np.concatenate([p.elapsed for p in parts])
    reached = np.concatenate([p.m_reached for p in parts])
    clicks = np.concatenate([p.click_times for p in parts])
    failures: dict[str, int] = {}
    for p in parts:
        for f in p.failure:
            if f is not None:
                failures[f] = failures.get(f, 0) + 1
    fids = [sim.oracle_replay(clicks[r, :reached[r]]) for r in range(min(oracle_runs, n_runs))]
    return LadderStats(
        n_runs, target_m, int(seed), int(np.sum(reached == target_m)),
        [int(x) for x in trials.sum(axis=0)],
        [int(np.sum(reached > m)) for m in range(target_m)],
        [float(x) for x in elapsed.mean(axis=0)],
        trials, failures, fids,
    )


def estimate_protocol(params: SystemParams, n_runs: int, max_trials: int, seed: int, *,
                      jobs: int = 1, model: str = "full") -> LadderStats:
    """Fraction of W-state protocol runs heralded within ``max_trials`` trials.

    Uses ``params`` as given (its Delta_R is not re-tuned).
    """
    sim = LadderSimulator(params, model=model)
    if model == "full":
        sim._samplers[0] = protocol_sampler(params)
    else:
        H = eliminated_hamiltonian(params, 0)
        sim._samplers[0] = TrialSampler(H, StateVector.basis_state(H.basis))
    return _estimate_climb(sim, 1, n_runs, max_trials, seed, 0, jobs)


def estimate_ladder(params: SystemParams, target_m: int, n_runs: int, max_trials_per_step: int,
                    seed: int, *, oracle_runs: int = 0, jobs: int = 1,
                    model: str = "full") -> LadderStats:
    """Independent ladder runs; the first ``oracle_runs`` are replayed in the full tensor space.

    Each step runs at its own optimal Delta_R.  ``model`` picks the per-step
    dynamics as in :func:`estimate_success`.
    """
    sim = LadderSimulator(params, model=model)
    sim.check_target(target_m)
    return _estimate_climb(sim, target_m, n_runs, max_trials_per_step, seed, oracle_runs, jobs)
