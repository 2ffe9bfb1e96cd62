"""Gate-level noise, Monte Carlo trajectories and the physical-subspace Kraus map.

Error model: after every noise-bearing gate an error event fires with the
class probability.  The event hits one of the gate's qudits (uniformly) and
applies X^a Z^b drawn by the channel.  The default channel depolarizes or
dephases with equal probability.

Steps without any error event act on the physical subspace through the
cached map K0 = P U P, so noiseless stretches of a trajectory cost a D x D
matrix-vector product.  When all error events of a step sit inside one
operation, the noisy map is obtained from precomputed environment tensors
instead of a full-register propagation.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compiler import Circuit
from .errors import AllTrajectoriesDiscarded, BudgetError, TraceCollapse
from .exact import observables_from_populations
from .gates import GateOp
from .hilbert import PureState
from .model import LatticeModel, PhysicalSubspace, enumerate_physical
from .simulator import CircuitExecutor, StepProgram, apply_dense, apply_gate, measure

BASE_RATES = {"one_body": 3e-5, "CX": 2e-3, "MS": 5e-3}
GUARD_ETA = 1e-10
DEFAULT_SAMPLES = 500
# max (register size x physical dimension) for the cached subspace maps
MAP_BUDGET = 2**26
# environment tensors are built only for large registers and small ops
GAMMA_MIN_SIZE = 2**15
GAMMA_MAX_ENTRIES = 2**20
WEIGHTINGS = ("uniform", "survival")


def shift_clock(dim: int, a: int, b: int) -> np.ndarray:
    """Generalized Pauli X^a Z^b on a d-level system."""
    w = np.exp(2j * np.pi / dim)
    X = np.roll(np.eye(dim), 1, axis=0)
    Z = np.diag(w ** np.arange(dim))
    return np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)


class DepolarizeDephase:
    """Default channel: depolarize (uniform non-identity X^aZ^b) or dephase (uniform Z^b, b>0)."""

    def __init__(self, depolarize_fraction: float = 0.5):
        if not 0 <= depolarize_fraction <= 1:
            raise ValueError("depolarize_fraction must be in [0, 1]")
        self.depolarize_fraction = depolarize_fraction
        self._ops: dict = {}

    def draw(self, dim: int, rng: np.random.Generator) -> np.ndarray:
        if rng.random() < self.depolarize_fraction:
            k = int(rng.integers(1, dim * dim))
            a, b = divmod(k, dim)
        else:
            a, b = 0, int(rng.integers(1, dim))
        key = (dim, a, b)
        if key not in self._ops:
            self._ops[key] = shift_clock(dim, a, b)
        return self._ops[key]

    def average(self, dim: int, rho: np.ndarray) -> np.ndarray:
        """E[E rho E^dagger] over one event on a single d-level system."""
        dep = sum(shift_clock(dim, *divmod(k, dim)) @ rho @ shift_clock(dim, *divmod(k, dim)).conj().T
                  for k in range(1, dim * dim)) / (dim * dim - 1)
        dph = sum(shift_clock(dim, 0, b) @ rho @ shift_clock(dim, 0, b).conj().T
                  for b in range(1, dim)) / (dim - 1)
        f = self.depolarize_fraction
        return f * dep + (1 - f) * dph

    def __eq__(self, other):
        return isinstance(other, DepolarizeDephase) and other.depolarize_fraction == self.depolarize_fraction

    def __hash__(self):
        return hash(("DepolarizeDephase", self.depolarize_fraction))


@dataclass(frozen=True)
class NoiseModel:
    """Per-gate error probabilities p_class = base_class * 10^(-alpha).

    ``overrides`` pins individual classes to fixed probabilities, e.g.
    ``(("MS", 1.0),)``; virtual gates are always noiseless.
    """

    alpha: float = 1.0
    channel: object = field(default_factory=DepolarizeDephase)
    overrides: tuple = ()

    def __post_init__(self):
        if not (self.alpha >= 0):
            raise ValueError("alpha must be non-negative")
        for cls, p in self.overrides:
            if cls not in BASE_RATES:
                raise ValueError(f"unknown noise class {cls!r}")
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls(math.inf)

    def probability(self, noise_class: str) -> float:
        if noise_class == "virtual":
            return 0.0
        for cls, p in self.overrides:
            if cls == noise_class:
                return float(p)
        return BASE_RATES[noise_class] * 10.0 ** (-self.alpha)

    def is_off(self) -> bool:
        return all(self.probability(c) == 0 for c in BASE_RATES)

    def sample_gate(self, gate: GateOp, dims, rng: np.random.Generator):
        """Error list [(qudit, matrix)] for one gate (empty if no event)."""
        p = self.probability(gate.noise_class)
        if p == 0 or rng.random() >= p:
            return []
        q = gate.targets[int(rng.integers(len(gate.targets)))]
        return [(q, self.channel.draw(dims[q], rng))]


def apply_noisy_gate(state: PureState, gate: GateOp, noise: NoiseModel, rng) -> PureState:
    """Ideal gate followed by at most one sampled error event."""
    reg = state.register
    T = apply_gate(state.amplitudes.reshape(reg.dims).copy(), gate, reg.dims)
    for q, E in noise.sample_gate(gate, reg.dims, rng):
        T = apply_dense(T, E, (q,), reg.dims)
    return PureState(np.ascontiguousarray(T).reshape(-1), reg)


def sample_step_events(program: StepProgram, noise: NoiseModel, rng: np.random.Generator):
    """All error events of one step as {gate position: [(qudit, matrix)]}."""
    probs = program.__dict__.get("_probs_cache")
    if probs is None or probs[0] is not noise:
        probs = (noise, np.array([noise.probability(g.noise_class) for g in program.gates]))
        program._probs_cache = probs
    p = probs[1]
    u = rng.random(len(p))
    hits = np.flatnonzero(u < p)
    dims = program.register.dims
    events = {}
    for k in hits:
        g = program.gates[k]
        q = g.targets[int(rng.integers(len(g.targets)))]
        events[int(k)] = [(q, noise.channel.draw(dims[q], rng))]
    return events


def leakage_fraction(state, basis: PhysicalSubspace) -> float:
    """Weight outside the physical subspace, 1 - |P psi|^2 / |psi|^2."""
    amps = state.amplitudes if isinstance(state, PureState) else np.asarray(state)
    tot = float(np.vdot(amps, amps).real)
    if tot == 0:
        raise ValueError("zero state")
    inside = basis.restrict(amps)
    return max(0.0, 1.0 - float(np.vdot(inside, inside).real) / tot)


class StepMap:
    """Physical-subspace maps K = P U_c P of one step program."""

    def __init__(self, program: StepProgram, basis: PhysicalSubspace, use_gamma: bool | None = None):
        self.program = program
        self.basis = basis
        reg = program.register
        D = basis.dim
        if reg.size * D > MAP_BUDGET:
            raise BudgetError(f"subspace maps need {reg.size * D} amplitudes (> {MAP_BUDGET})")
        if use_gamma is None:
            use_gamma = reg.size >= GAMMA_MIN_SIZE
        self.gamma: dict[int, np.ndarray] = {}
        P = basis.embed(np.eye(D, dtype=complex)).reshape(reg.dims + (D,))
        noisy_ops = {int(program.op_of_gate[k]) for k in program.noisy}
        if use_gamma:
            self.K0 = self._sweep(P, noisy_ops)
        else:
            self.K0 = basis.restrict(program.run(P.reshape(reg.size, D)))

    def _sweep(self, P, noisy_ops):
        prog = self.program
        reg = prog.register
        D = self.basis.dim
        B = P.copy()
        for oi in reversed(range(len(prog.ops))):
            B = prog.apply_op_adjoint(B, oi)
        A = P
        for oi, op in enumerate(prog.ops):
            B = prog.apply_op(B, oi)
            s = int(np.prod([reg.dims[q] for q in op.targets]))
            if oi in noisy_ops and (s * D) ** 2 <= GAMMA_MAX_ENTRIES:
                k = len(op.targets)
                R = reg.size // s
                Am = np.moveaxis(A, op.targets, tuple(range(k))).reshape(s, R, D)
                Bm = np.moveaxis(B, op.targets, tuple(range(k))).reshape(s, R, D)
                Am = Am.transpose(1, 0, 2).reshape(R, s * D)
                Bm = Bm.transpose(1, 0, 2).reshape(R, s * D)
                self.gamma[oi] = (Bm.conj().T @ Am).reshape(s, D, s, D)
            A = prog.apply_op(A, oi)
        return np.ascontiguousarray(A).reshape(reg.size, D)[self.basis.indices]

    def _single_op(self, events):
        ops = {int(self.program.op_of_gate[p]) for p in events}
        if len(ops) == 1:
            oi = ops.pop()
            if oi in self.gamma:
                return oi
        return None

    def kraus(self, events) -> np.ndarray:
        if not events:
            return self.K0
        oi = self._single_op(events)
        if oi is not None:
            W = self.program.op_matrix(oi, events)
            return np.einsum("yx,ybxa->ba", W, self.gamma[oi], optimize=True)
        D = self.basis.dim
        cols = self.program.run(self.basis.embed(np.eye(D, dtype=complex)), events)
        return self.basis.restrict(cols)

    def apply(self, c: np.ndarray, events) -> np.ndarray:
        if not events:
            return self.K0 @ c
        oi = self._single_op(events)
        if oi is not None:
            return self.kraus(events) @ c
        return self.basis.restrict(self.program.run(self.basis.embed(c), events))


@dataclass
class TrajectoryResult:
    index: int
    seed: tuple
    survival: np.ndarray  # per-step post-selection weight (1 without post-selection)
    charges: np.ndarray
    fluxes: np.ndarray
    leakage: np.ndarray  # weight outside the physical subspace before projection
    discarded: bool = False
    discard_step: int | None = None
    n_events: int = 0

    @property
    def cumulative_weight(self) -> np.ndarray:
        w = np.concatenate([[1.0], np.cumprod(self.survival)])
        if self.discarded:
            w[self.discard_step:] = 0.0
        return w


class TrajectoryRunner:
    """Noisy pure-state trajectories of one circuit."""

    def __init__(self, circuit: Circuit, model: LatticeModel, noise: NoiseModel,
                 postselect: bool = True, eta: float = GUARD_ETA, use_maps: bool | None = None):
        self.circuit = circuit
        self.model = model
        self.noise = noise
        self.postselect = postselect
        self.eta = eta
        self.executor = CircuitExecutor(circuit)
        self.basis = enumerate_physical(model)
        if use_maps is None:
            use_maps = postselect and circuit.register.size * self.basis.dim <= MAP_BUDGET
        self.use_maps = use_maps and postselect
        self._maps: dict = {}

    def step_map(self, n: int) -> StepMap:
        key = self.executor.step_key(n)
        m = self._maps.get(key)
        if m is None:
            m = StepMap(self.executor.program(n), self.basis)
            self._maps[key] = m
        return m

    def draw_events(self, rng) -> list[dict]:
        return [sample_step_events(self.executor.program(n), self.noise, rng)
                for n in range(self.circuit.n_steps)]

    def _obs_phys(self, c):
        p = np.abs(c) ** 2
        return observables_from_populations(p / p.sum(), self.basis)

    def _result(self, index, seed, N):
        L = self.model.L
        return TrajectoryResult(index, seed, np.ones(N), np.full((N + 1, L), np.nan),
                                np.full((N + 1, L - 1), np.nan), np.zeros(N + 1))

    def _events_for(self, index: int, seed: tuple):
        rng = np.random.default_rng(np.random.SeedSequence(seed[0], spawn_key=(seed[1],)))
        return self.draw_events(rng)

    def run_one(self, index: int, seed: tuple, c0: np.ndarray) -> TrajectoryResult:
        """One trajectory from a physical-basis initial state."""
        return self.run_batch_seeds([(index, seed)], c0)[0]

    def _start(self, index, seed, events, c):
        N = self.circuit.n_steps
        res = self._result(index, seed, N)
        res.n_events = sum(len(e) for e in events)
        res.charges[0], res.fluxes[0] = self._obs_phys(c)
        return res

    def _subspace_run(self, index, seed, c):
        events = self._events_for(index, seed)
        res = self._start(index, seed, events, c)
        for n in range(self.circuit.n_steps):
            c = self.step_map(n).apply(c, events[n])
            if not self._project(res, n, c):
                return res
            c = c / math.sqrt(res.survival[n])
            res.charges[n + 1], res.fluxes[n + 1] = self._obs_phys(c)
        return res

    def _full_step(self, res, n, psi, ev):
        """Advance a full-register state by one step; None once discarded."""
        psi = self.executor.program(n).run(psi, ev)
        if self.postselect:
            c = self.basis.restrict(psi)
            if not self._project(res, n, c):
                return None
            c = c / math.sqrt(res.survival[n])
            res.charges[n + 1], res.fluxes[n + 1] = self._obs_phys(c)
            return self.basis.embed(c)
        res.leakage[n + 1] = leakage_fraction(psi, self.basis)
        res.charges[n + 1], res.fluxes[n + 1] = measure(psi, self.model)
        return psi

    def run_batch_seeds(self, jobs, c0) -> list[TrajectoryResult]:
        c = np.asarray(c0, dtype=complex) / np.linalg.norm(c0)
        if self.use_maps:
            return [self._subspace_run(i, sd, c) for i, sd in jobs]
        # full-register path: trajectories share the noiseless prefix before
        # their first error event, advanced once in order of that step
        N = self.circuit.n_steps
        drawn = []
        for i, sd in jobs:
            ev = self._events_for(i, sd)
            first = next((n for n in range(N) if ev[n]), N)
            drawn.append((first, i, sd, ev))
        drawn.sort(key=lambda x: (x[0], x[1]))
        out = {}
        clean = self._result(-1, (), N)
        clean.charges[0], clean.fluxes[0] = self._obs_phys(c)
        psi = self.basis.embed(c)
        cur = 0
        for first, i, sd, ev in drawn:
            while cur < first:
                psi = self._full_step(clean, cur, psi, None)
                cur += 1
            res = self._start(i, sd, ev, c)
            res.charges[: cur + 1] = clean.charges[: cur + 1]
            res.fluxes[: cur + 1] = clean.fluxes[: cur + 1]
            res.leakage[: cur + 1] = clean.leakage[: cur + 1]
            res.survival[:cur] = clean.survival[:cur]
            state = psi.copy()
            for n in range(cur, N):
                state = self._full_step(res, n, state, ev[n])
                if state is None:
                    break
            out[i] = res
        return [out[i] for i, _ in jobs]

    def _project(self, res: TrajectoryResult, n: int, c: np.ndarray) -> bool:
        w = float(np.vdot(c, c).real)
        res.leakage[n + 1] = max(0.0, 1.0 - w)
        res.survival[n] = min(w, 1.0)
        if w < self.eta:
            res.discarded = True
            res.discard_step = n + 1
            return False
        return True

    def run_batch(self, indices: Sequence[int], master_seed: int, c0: np.ndarray) -> list[TrajectoryResult]:
        return self.run_batch_seeds([(i, (master_seed, i)) for i in indices], c0)


def _worker(args):
    circuit, model, noise, postselect, eta, indices, seed, c0 = args
    runner = TrajectoryRunner(circuit, model, noise, postselect, eta)
    return runner.run_batch(indices, seed, c0)


@dataclass
class TrajectoryAverage:
    charges: np.ndarray
    fluxes: np.ndarray
    charge_err: np.ndarray
    flux_err: np.ndarray
    n_alive: np.ndarray
    weighting: str


def average_trajectories(results: Sequence[TrajectoryResult], weighting: str = "uniform") -> TrajectoryAverage:
    """Combine trajectories per time slice.

    ``uniform``: plain mean over trajectories not yet discarded (post-selected
    shots renormalized one by one).  ``survival``: weights are the cumulative
    post-selection probabilities, which reproduces the normalized Kraus
    ensemble in expectation.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}")
    if not results:
        raise ValueError("no trajectories")
    Q = np.stack([r.charges for r in results])
    F = np.stack([r.fluxes for r in results])
    alive = np.stack([~np.isnan(r.charges[:, 0]) for r in results])
    if weighting == "uniform":
        W = alive.astype(float)
    else:
        W = np.stack([r.cumulative_weight for r in results]) * alive
    n_alive = alive.sum(axis=0)
    wsum = W.sum(axis=0)
    dead = np.flatnonzero(wsum <= 0)
    if dead.size:
        step = int(dead[0])
        raise AllTrajectoriesDiscarded(step, len(results))
    out = []
    for X in (Q, F):
        Xz = np.nan_to_num(X)
        mean = np.einsum("it,itj->tj", W, Xz) / wsum[:, None]
        dev = (Xz - mean[None]) * W[..., None]
        err = np.sqrt(np.einsum("itj,itj->tj", dev, dev)) / wsum[:, None]
        out += [mean, err]
    return TrajectoryAverage(out[0], out[2], out[1], out[3], n_alive, weighting)


def run_trajectories(circuit: Circuit, model: LatticeModel, c0: np.ndarray, noise: NoiseModel,
                     n_samples: int = DEFAULT_SAMPLES, postselect: bool = True, seed: int = 0,
                     eta: float = GUARD_ETA, jobs: int = 1):
    """Run ``n_samples`` trajectories; returns (results, runner).

    Trajectory i draws all of its randomness from SeedSequence(seed,
    spawn_key=(i,)), so outputs do not depend on ``jobs``.
    """
    if n_samples < 1:
        raise ValueError("need at least one trajectory")
    indices = list(range(n_samples))
    if jobs <= 1:
        runner = TrajectoryRunner(circuit, model, noise, postselect, eta)
        return runner.run_batch(indices, seed, c0)
    chunks = [indices[k::jobs] for k in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = pool.map(_worker, [(circuit, model, noise, postselect, eta, ch, seed, c0) for ch in chunks])
        results = [r for part in parts for r in part]
    return sorted(results, key=lambda r: r.index)


@dataclass
class KrausRun:
    rhos: list  # PhysicalDensityMatrix per time
    traces: np.ndarray  # pre-normalization trace per step
    basis: PhysicalSubspace

    def observables(self):
        out = [observables_from_populations(np.real(np.diag(r)), self.basis) for r in self.rhos]
        rho, flux = zip(*out)
        return np.array(rho), np.array(flux)

    def purity(self) -> np.ndarray:
        return np.array([np.real(np.trace(r @ r)) for r in self.rhos])


def run_kraus_physical(circuit: Circuit, model: LatticeModel, c0: np.ndarray, noise: NoiseModel,
                       n_samples: int = DEFAULT_SAMPLES, seed: int = 0, eta: float = GUARD_ETA) -> KrausRun:
    """Ensemble map evolution: rho <- sum_c K_c rho K_c^dagger / trace, once per step."""
    basis = enumerate_physical(model)
    if basis.dim > 2000:
        raise BudgetError(f"physical dimension {basis.dim} too large for the Kraus engine")
    runner = TrajectoryRunner(circuit, model, noise, postselect=True, eta=eta, use_maps=True)
    c = np.asarray(c0, dtype=complex) / np.linalg.norm(c0)
    rho = np.outer(c, c.conj())
    rhos = [rho]
    traces = np.ones(circuit.n_steps)
    for n in range(circuit.n_steps):
        smap = runner.step_map(n)
        prog = runner.executor.program(n)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1 << 20, n)))
        acc = np.zeros_like(rho)
        n_clean = 0
        for _ in range(n_samples):
            ev = sample_step_events(prog, noise, rng)
            if not ev:
                n_clean += 1
                continue
            K = smap.kraus(ev)
            acc += K @ rho @ K.conj().T
        if n_clean:
            acc += n_clean * (smap.K0 @ rho @ smap.K0.conj().T)
        acc /= n_samples
        tr = float(np.real(np.trace(acc)))
        traces[n] = tr
        if tr < eta:
            raise TraceCollapse(n + 1, tr)
        rho = acc / tr
        rho = 0.5 * (rho + rho.conj().T)
        rhos.append(rho)
    return KrausRun(rhos, traces, basis)
