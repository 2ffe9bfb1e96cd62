"""Mixed-radix Hilbert-space bookkeeping.

Basis ordering convention: qudit 0 is the most significant digit, so the
basis index of ``digits`` on ``dims`` is ``sum(d_k * prod(dims[k+1:]))``.
Qudit 0 is always the leftmost object of the lattice.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BoundsError, BudgetError, DimensionError

MAX_AMPLITUDES = 2**27
NORM_EPS = 1e-12


@dataclass(frozen=True)
class QuditRegister:
    dims: tuple[int, ...]
    roles: tuple[tuple, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims:
            raise DimensionError("register needs at least one qudit")
        if any(d not in (2, 3, 4) for d in dims):
            raise DimensionError(f"local dimensions must be 2, 3 or 4, got {dims}")
        roles = tuple(tuple(r) for r in self.roles)
        if roles and len(roles) != len(dims):
            raise DimensionError("roles and dims differ in length")
        object.__setattr__(self, "roles", roles)
        if self.size > MAX_AMPLITUDES:
            raise BudgetError(f"register dimension {self.size} exceeds 2^27 amplitudes")

    @property
    def size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def strides(self) -> tuple[int, ...]:
        out = []
        acc = 1
        for d in reversed(self.dims):
            out.append(acc)
            acc *= d
        return tuple(reversed(out))

    @classmethod
    def integrated_out(cls, L: int) -> "QuditRegister":
        """One qutrit for the leftmost link, ququarts for links 1..L-2."""
        if L < 2:
            raise DimensionError("L must be at least 2")
        dims = (3,) + (4,) * (L - 2)
        roles = tuple(("link", j, j + 1) for j in range(L - 1))
        return cls(dims, roles)

    @classmethod
    def matterful(cls, L: int) -> "QuditRegister":
        """Matter qubits interleaved with link qutrits: q0, l01, q1, ..., q_{L-1}."""
        if L < 2:
            raise DimensionError("L must be at least 2")
        dims, roles = [], []
        for j in range(L):
            dims.append(2)
            roles.append(("matter", j))
            if j < L - 1:
                dims.append(3)
                roles.append(("link", j, j + 1))
        return cls(tuple(dims), tuple(roles))


@dataclass(frozen=True)
class BasisConfig:
    digits: tuple[int, ...]

    def check(self, reg: QuditRegister) -> None:
        if len(self.digits) != reg.n:
            raise BoundsError(f"config has {len(self.digits)} digits, register has {reg.n}")
        for k, (x, d) in enumerate(zip(self.digits, reg.dims)):
            if not 0 <= x < d:
                raise BoundsError(f"digit {x} out of range for qudit {k} of dimension {d}")


def index_of(config: BasisConfig | Sequence[int], reg: QuditRegister) -> int:
    if not isinstance(config, BasisConfig):
        config = BasisConfig(tuple(int(x) for x in config))
    config.check(reg)
    idx = 0
    for x, d in zip(config.digits, reg.dims):
        idx = idx * d + x
    return idx


def config_of(index: int, reg: QuditRegister) -> BasisConfig:
    if not 0 <= index < reg.size:
        raise BoundsError(f"index {index} outside register of size {reg.size}")
    digits = []
    for d in reversed(reg.dims):
        index, r = divmod(index, d)
        digits.append(r)
    return BasisConfig(tuple(reversed(digits)))


def digit_table(reg: QuditRegister) -> np.ndarray:
    """All basis configurations as an (size, n) integer array, index order."""
    grids = np.indices(reg.dims).reshape(reg.n, -1)
    return grids.T.astype(np.int8)


def local_marginals(amplitudes: np.ndarray, reg: QuditRegister, qudit: int) -> np.ndarray:
    """Populations of the levels of one qudit (unnormalized)."""
    p = np.abs(amplitudes.reshape(reg.dims)) ** 2
    axes = tuple(k for k in range(reg.n) if k != qudit)
    return p.sum(axis=axes)


def embed_local_operator(
    amplitudes: np.ndarray, op: np.ndarray, targets: Sequence[int], reg: QuditRegister
) -> np.ndarray:
    """Return ``(op ⊗ 1_rest) @ amplitudes`` without building the full matrix.

    ``amplitudes`` may carry one trailing batch axis (columns are independent
    states).  ``op`` acts on ``targets`` in the listed order.
    """
    targets = tuple(int(t) for t in targets)
    if len(set(targets)) != len(targets):
        raise DimensionError(f"targets must be distinct, got {targets}")
    tdims = tuple(reg.dims[t] for t in targets)
    m = int(np.prod(tdims))
    if op.shape != (m, m):
        raise DimensionError(f"operator shape {op.shape} does not match target dims {tdims}")
    batch = amplitudes.shape[1:]
    if amplitudes.shape[0] != reg.size or len(batch) > 1:
        raise DimensionError("amplitude array does not match register")
    psi = amplitudes.reshape(reg.dims + batch)
    k = len(targets)
    opt = op.reshape(tdims + tdims)
    out = np.tensordot(opt, psi, axes=(tuple(range(k, 2 * k)), targets))
    # tensordot puts the op's output axes first; move them back into place
    out = np.moveaxis(out, tuple(range(k)), targets)
    return out.reshape(amplitudes.shape)


def kron_embed(op: np.ndarray, targets: Sequence[int], reg: QuditRegister) -> np.ndarray:
    """Dense full-space matrix of a local operator (small registers only)."""
    eye = np.eye(reg.size, dtype=complex)
    return embed_local_operator(eye, np.asarray(op, dtype=complex), targets, reg)


@dataclass
class PureState:
    amplitudes: np.ndarray
    register: QuditRegister = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.register.size,):
            raise DimensionError(
                f"state of length {self.amplitudes.shape} for register size {self.register.size}"
            )
        if self.norm() > 1 + NORM_EPS:
            raise ValueError(f"state norm {self.norm()} exceeds 1")

    @classmethod
    def basis(cls, config, reg: QuditRegister) -> "PureState":
        amps = np.zeros(reg.size, dtype=complex)
        amps[index_of(config, reg)] = 1.0
        return cls(amps, reg)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero state")
        return PureState(self.amplitudes / nrm, self.register)

    def apply(self, op: np.ndarray, targets: Sequence[int]) -> "PureState":
        amps = embed_local_operator(self.amplitudes, op, targets, self.register)
        return PureState(amps, self.register)

    def marginal(self, qudit: int) -> np.ndarray:
        return local_marginals(self.amplitudes, self.register, qudit)

    def copy(self) -> "PureState":
        return PureState(self.amplitudes.copy(), self.register)
