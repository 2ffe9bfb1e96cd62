"""State-vector execution of compiled circuits.

States are kept as tensors of shape ``register.dims + batch`` so that gates
act through slicing on the affected axes.  Two-level rotations, phases and
controlled swaps are applied in place; everything else goes through a dense
tensordot on its support.  Gate blocks whose support is small enough are
fused into a single dense matrix once and reused on every step.
"""
from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .compiler import Block, Circuit
from .errors import DimensionError
from .gates import GateOp, matrix_of
from .hilbert import QuditRegister
from .model import LatticeModel, M_OF_LEVEL, matter_charges, original_frame_fluxes, reconstruct_charge

FUSE_MAX_DIM = 16
# runs of virtual phases are merged into one full-register diagonal up to this size
DIAG_MAX_SIZE = 2**22

_TWO_LEVEL = ("RX", "RY", "RZ", "H")

# gate matrices are immutable in practice; cache them across steps
_matrix = functools.lru_cache(maxsize=8192)(matrix_of)


def _index(n_axes: int, pairs) -> tuple:
    idx = [slice(None)] * n_axes
    for axis, level in pairs:
        idx[axis] = level
    return tuple(idx)


def apply_dense(T: np.ndarray, op: np.ndarray, targets: Sequence[int], dims) -> np.ndarray:
    """Apply a dense operator on ``targets`` of a state tensor; returns a new tensor."""
    k = len(targets)
    tdims = tuple(dims[t] for t in targets)
    t0 = targets[0]
    if tuple(targets) == tuple(range(t0, t0 + k)):
        # adjacent ascending axes: one batched matmul, no transposes
        m = int(np.prod(tdims))
        pre = int(np.prod(T.shape[:t0], dtype=np.int64))
        out = np.matmul(op, T.reshape(pre, m, -1))
        return out.reshape(T.shape)
    out = np.tensordot(op.reshape(tdims + tdims), T, axes=(tuple(range(k, 2 * k)), tuple(targets)))
    return np.moveaxis(out, tuple(range(k)), tuple(targets))


def _two_level_inplace(T, n_axes, axis, a, b, u, ctrl=()):
    ia = _index(n_axes, list(ctrl) + [(axis, a)])
    ib = _index(n_axes, list(ctrl) + [(axis, b)])
    if u[0, 1] == 0 and u[1, 0] == 0:
        T[ia] *= u[0, 0]
        T[ib] *= u[1, 1]
        return
    A = T[ia].copy()
    B = T[ib].copy()
    T[ia] = u[0, 0] * A + u[0, 1] * B
    T[ib] = u[1, 0] * A + u[1, 1] * B


def apply_gate(T: np.ndarray, g: GateOp, dims) -> np.ndarray:
    """Apply one gate to a state tensor (in place when possible); returns the tensor."""
    n = len(dims)
    kind = g.kind
    if kind == "VRZ":
        T[_index(n, [(g.targets[0], g.levels[0])])] *= np.exp(-1j * g.params[0])
        return T
    if kind in _TWO_LEVEL:
        a, b = g.levels
        full = _matrix(g)
        u = full[np.ix_((a, b), (a, b))]
        _two_level_inplace(T, n, g.targets[0], a, b, u)
        return T
    if kind == "CX":
        c, l1, l2 = g.levels
        ctl, tgt = g.targets
        i1 = _index(n, [(ctl, c), (tgt, l1)])
        i2 = _index(n, [(ctl, c), (tgt, l2)])
        tmp = T[i1].copy()
        T[i1] = T[i2]
        T[i2] = tmp
        return T
    if kind == "CROT":
        c, a, b = g.levels
        ctl, tgt = g.targets
        full = _matrix(g)
        dt = dims[tgt]
        u = full[np.ix_((c * dt + a, c * dt + b), (c * dt + a, c * dt + b))]
        _two_level_inplace(T, n, tgt, a, b, u, ctrl=[(ctl, c)])
        return T
    return apply_dense(T, _matrix(g), g.targets, dims)


_NEGATE_ALL = ("RX", "RY", "RZ", "VRZ", "MS", "RZZ")


def inverse_gate(g: GateOp) -> GateOp | None:
    """Inverse as another native gate, or None when there is no such form."""
    if g.kind in ("H", "CX"):
        return g
    if g.kind in _NEGATE_ALL:
        return dataclasses.replace(g, params=tuple(-p for p in g.params))
    if g.kind == "CROT":
        return dataclasses.replace(g, params=(-g.params[0], g.params[1]))
    return None


def _local_gate(g: GateOp, pos: dict[int, int]) -> GateOp:
    return dataclasses.replace(g, targets=tuple(pos[t] for t in g.targets))


def block_matrix(gates: Sequence[GateOp], support: Sequence[int], dims, events=None, offset=0) -> np.ndarray:
    """Dense unitary of a gate sequence on ``support``.

    ``events`` maps absolute gate positions (``offset`` + local index) to lists
    of (qudit, matrix) errors applied right after that gate.
    """
    sdims = tuple(dims[q] for q in support)
    s = int(np.prod(sdims))
    pos = {q: i for i, q in enumerate(support)}
    T = np.eye(s, dtype=complex).reshape(sdims + (s,))
    for k, g in enumerate(gates):
        T = apply_gate(T, _local_gate(g, pos), sdims)
        if events:
            for q, E in events.get(offset + k, ()):
                T = apply_dense(T, E, (pos[q],), sdims)
    return T.reshape(s, s)


@dataclass
class _Op:
    start: int
    stop: int
    targets: tuple[int, ...]
    gate: GateOp | None = None
    matrix: np.ndarray | None = None
    gates: tuple[GateOp, ...] = ()
    diag: np.ndarray | None = None

    @property
    def fused(self) -> bool:
        return self.matrix is not None


class StepProgram:
    """Executable form of one Trotter step (gate positions are step-local)."""

    def __init__(self, gates: Sequence[GateOp], blocks: Sequence[Block], register: QuditRegister,
                 fuse_max: int = FUSE_MAX_DIM):
        self.register = register
        self.gates = tuple(gates)
        dims = register.dims
        starts = {b.start: b for b in blocks}
        ops: list[_Op] = []
        k = 0
        while k < len(gates):
            b = starts.get(k)
            if b is not None and int(np.prod([dims[q] for q in b.support])) <= fuse_max:
                seq = self.gates[b.start:b.stop]
                ops.append(_Op(b.start, b.stop, tuple(b.support), None,
                               block_matrix(seq, b.support, dims), seq))
                k = b.stop
                continue
            if self.gates[k].kind == "VRZ" and register.size <= DIAG_MAX_SIZE:
                stop = k
                while stop < len(gates) and self.gates[stop].kind == "VRZ" and stop not in starts:
                    stop += 1
                if stop - k > 1:
                    seq = self.gates[k:stop]
                    phase = np.ones(dims, dtype=complex)
                    for g in seq:
                        phase = apply_gate(phase, g, dims)
                    tg = tuple(sorted({g.targets[0] for g in seq}))
                    ops.append(_Op(k, stop, tg, None, None, seq, phase))
                    k = stop
                    continue
            ops.append(_Op(k, k + 1, self.gates[k].targets, self.gates[k]))
            k += 1
        self.ops = ops
        # noise-bearing positions and their classes
        self.noisy = [i for i, g in enumerate(self.gates) if g.noise_class != "virtual"]
        self.op_of_gate = np.empty(len(self.gates), dtype=np.int64)
        for oi, op in enumerate(ops):
            self.op_of_gate[op.start:op.stop] = oi

    def op_matrix(self, oi: int, events=None) -> np.ndarray:
        """Dense matrix of op ``oi`` on its targets, with optional errors inserted."""
        op = self.ops[oi]
        if op.diag is not None:
            raise ValueError("merged phase ops have no local matrix")
        if op.fused and not events:
            return op.matrix
        seq = op.gates if op.fused else (op.gate,)
        return block_matrix(seq, op.targets, self.register.dims, events, op.start)

    def apply_op(self, T: np.ndarray, oi: int, events=None) -> np.ndarray:
        op = self.ops[oi]
        dims = self.register.dims
        if op.diag is not None:
            T *= op.diag.reshape(op.diag.shape + (1,) * (T.ndim - op.diag.ndim))
            return T
        if op.fused:
            if events:
                return apply_dense(T, self.op_matrix(oi, events), op.targets, dims)
            return apply_dense(T, op.matrix, op.targets, dims)
        T = apply_gate(T, op.gate, dims)
        if events:
            for q, E in events.get(op.start, ()):
                T = apply_dense(T, E, (q,), dims)
        return T

    def apply_op_adjoint(self, T: np.ndarray, oi: int) -> np.ndarray:
        op = self.ops[oi]
        dims = self.register.dims
        if op.diag is not None:
            T *= op.diag.conj().reshape(op.diag.shape + (1,) * (T.ndim - op.diag.ndim))
            return T
        if not op.fused:
            inv = inverse_gate(op.gate)
            if inv is not None:
                return apply_gate(T, inv, dims)
        M = op.matrix if op.fused else _matrix(op.gate)
        return apply_dense(T, M.conj().T, op.targets, dims)

    def run(self, amplitudes: np.ndarray, events=None) -> np.ndarray:
        """Apply the step to a state vector or a (size, k) column batch."""
        reg = self.register
        batch = amplitudes.shape[1:]
        if amplitudes.shape[0] != reg.size:
            raise DimensionError("state does not match register")
        T = np.array(amplitudes, dtype=complex).reshape(reg.dims + batch)
        if events:
            hit = {int(self.op_of_gate[p]) for p in events}
        else:
            hit = ()
        for oi in range(len(self.ops)):
            T = self.apply_op(T, oi, events if oi in hit else None)
        return np.ascontiguousarray(T).reshape(amplitudes.shape)


class CircuitExecutor:
    """Runs a circuit step by step, sharing programs between identical steps."""

    def __init__(self, circuit: Circuit, fuse_max: int = FUSE_MAX_DIM):
        self.circuit = circuit
        self.fuse_max = fuse_max
        self._programs: dict[int, StepProgram] = {}
        self._specs: list = []
        self._key_ids: list[int] = []
        ids: dict = {}
        by_start: dict = {}
        for b in circuit.blocks:
            by_start[b.start] = b
        for n in range(circuit.n_steps):
            s, e = circuit.steps[n]
            blocks = tuple(Block(b.start - s, b.stop - s, b.support, b.label)
                           for k, b in sorted(by_start.items()) if s <= k < e)
            key = (tuple(circuit.gates[s:e]), blocks)
            if key not in ids:
                ids[key] = len(self._specs)
                self._specs.append(key)
            self._key_ids.append(ids[key])

    def program(self, n: int) -> StepProgram:
        kid = self._key_ids[n]
        prog = self._programs.get(kid)
        if prog is None:
            gates, blocks = self._specs[kid]
            prog = StepProgram(gates, blocks, self.circuit.register, self.fuse_max)
            self._programs[kid] = prog
        return prog

    def step_key(self, n: int) -> int:
        """Small integer shared by steps with identical gate content."""
        return self._key_ids[n]

    def run(self, amplitudes: np.ndarray, observe: Callable | None = None) -> list:
        """Evolve through all steps; ``observe(step, amplitudes)`` is called at each boundary."""
        out = []
        psi = np.asarray(amplitudes, dtype=complex)
        if observe is not None:
            out.append(observe(0, psi))
        for n in range(self.circuit.n_steps):
            psi = self.program(n).run(psi)
            if observe is not None:
                out.append(observe(n + 1, psi))
        if observe is None:
            out.append(psi)
        return out


def link_fluxes(amplitudes: np.ndarray, model: LatticeModel) -> np.ndarray:
    """p-h frame <s^z> of every link (auxiliary level counts as m = 0)."""
    reg = model.register()
    p = np.abs(amplitudes.reshape(reg.dims)) ** 2
    tot = p.sum()
    out = np.empty(model.n_links)
    m = np.array(M_OF_LEVEL + (0,), dtype=float)
    for j in range(model.n_links):
        q = model.link_qudit(j)
        axes = tuple(k for k in range(reg.n) if k != q)
        marg = p.sum(axis=axes)
        out[j] = marg @ m[: reg.dims[q]] / tot
    return out


def measure(amplitudes: np.ndarray, model: LatticeModel) -> tuple[np.ndarray, np.ndarray]:
    """Original-frame charges (L,) and electric fluxes (L-1,) of a pure state."""
    s = link_fluxes(amplitudes, model)
    if model.formulation == "integrated_out":
        rho = reconstruct_charge(s, model.L)
    else:
        reg = model.register()
        p = np.abs(amplitudes.reshape(reg.dims)) ** 2
        tot = p.sum()
        occ = np.empty(model.L)
        for j in range(model.L):
            q = model.matter_qudit(j)
            axes = tuple(k for k in range(reg.n) if k != q)
            occ[j] = p.sum(axis=axes)[0] / tot
        rho = matter_charges(occ)
    return rho, original_frame_fluxes(s)
