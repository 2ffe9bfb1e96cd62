"""Native gate set as subspace-structured unitaries.

Conventions
-----------
* ``R_mu^{ab}(theta) = exp(-i theta/2 sigma^{mu;ab})`` for mu in x, y, z, where
  sigma^{mu;ab} is the Pauli matrix on span{|a>, |b>} (|a> plays the role of
  the Pauli |0>) and zero elsewhere.
* ``VRZ^a(phi) = exp(-i phi |a><a|)``.
* ``H^{ab} = (sigma^{x;ab} + sigma^{z;ab}) / sqrt(2)`` on the subspace,
  identity on the remaining levels.  With this choice the sequence
  H, RZ(theta/2), CX, RZ(-theta/2), CX, H composes to an exact controlled
  R_x^{ab}(theta) (no residual phase).
* ``CX_{c, l1<->l2}`` swaps levels l1, l2 of the target when the control is
  in |c>.
* ``MS^{mu nu}(alpha) = exp(i alpha/4 (sigma^{mu;01}_A + sigma^nu_B)^2)``
  with A the first target (qutrit side, {0,1} subspace) and B a qubit.
* ``RZZ(alpha) = exp(i alpha/2 sigma^{z;01}_A sigma^z_B)``.
* ``CROT_{c}(theta, phi)`` applies exp(-i theta/2 (cos phi sx + sin phi sy))
  on levels (i, j) of the target when the control is in |c>.
* ``PERM_PLUS = R_Y^{01}(pi) R_Y^{12}(pi)`` (matrix product), which sends
  |0> -> |1> -> |2> -> |0> with all signs +1.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidGate

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

NOISE_CLASSES = ("one_body", "CX", "MS", "virtual")
ONE_QUDIT_KINDS = ("RX", "RY", "RZ", "H", "VRZ", "PERM_PLUS")
TWO_QUDIT_KINDS = ("CX", "MS", "RZZ", "CROT")

DEFAULT_NOISE_CLASS = {
    "RX": "one_body",
    "RY": "one_body",
    "RZ": "one_body",
    "H": "one_body",
    "PERM_PLUS": "one_body",
    "VRZ": "virtual",
    "CX": "CX",
    "MS": "MS",
    "RZZ": "MS",
    "CROT": "CX",
}


@dataclass(frozen=True)
class GateOp:
    """One gate instance.

    ``levels`` holds the subspace labels: (a, b) for two-level rotations,
    (a,) for VRZ, (c, l1, l2) for CX and CROT.  ``axes`` names the MS Pauli
    pair, e.g. "xx" or "zy".
    """

    kind: str
    targets: tuple[int, ...]
    dims: tuple[int, ...]
    params: tuple[float, ...] = ()
    levels: tuple[int, ...] = ()
    axes: str = ""
    noise_class: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "levels", tuple(int(x) for x in self.levels))
        if not self.noise_class:
            object.__setattr__(self, "noise_class", DEFAULT_NOISE_CLASS.get(self.kind, ""))
        validate(self)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "targets": list(self.targets),
            "dims": list(self.dims),
            "params": list(self.params),
            "levels": list(self.levels),
            "axes": self.axes,
            "noise_class": self.noise_class,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "GateOp":
        return cls(
            kind=rec["kind"],
            targets=tuple(rec["targets"]),
            dims=tuple(rec["dims"]),
            params=tuple(rec.get("params", ())),
            levels=tuple(rec.get("levels", ())),
            axes=rec.get("axes", ""),
            noise_class=rec.get("noise_class", ""),
        )


def validate(g: GateOp) -> None:
    if g.kind in ONE_QUDIT_KINDS:
        n_targets = 1
    elif g.kind in TWO_QUDIT_KINDS:
        n_targets = 2
    else:
        raise InvalidGate(f"unknown gate kind {g.kind!r}")
    if len(g.targets) != n_targets or len(g.dims) != n_targets:
        raise InvalidGate(f"{g.kind} needs {n_targets} target(s) with dims")
    if len(set(g.targets)) != len(g.targets):
        raise InvalidGate("targets must be distinct")
    if g.noise_class not in NOISE_CLASSES:
        raise InvalidGate(f"unknown noise class {g.noise_class!r}")
    if g.kind == "VRZ" and g.noise_class != "virtual":
        raise InvalidGate("VRZ gates are always virtual")

    def need(levels, dim, n):
        if len(levels) != n:
            raise InvalidGate(f"{g.kind} needs {n} subspace label(s), got {levels}")
        if any(not 0 <= x < dim for x in levels):
            raise InvalidGate(f"subspace labels {levels} invalid for dimension {dim}")

    if g.kind in ("RX", "RY", "RZ", "H"):
        need(g.levels, g.dims[0], 2)
        if g.levels[0] == g.levels[1]:
            raise InvalidGate("two-level gate needs distinct levels")
    elif g.kind == "VRZ":
        need(g.levels, g.dims[0], 1)
    elif g.kind == "PERM_PLUS":
        if g.dims[0] < 3:
            raise InvalidGate("PERM_PLUS needs at least three levels")
    elif g.kind in ("CX", "CROT"):
        need(g.levels[:1], g.dims[0], 1)
        need(g.levels[1:], g.dims[1], 2)
        if g.levels[1] == g.levels[2]:
            raise InvalidGate("exchange pair must be distinct")
    elif g.kind in ("MS", "RZZ"):
        if g.dims[1] != 2:
            raise InvalidGate(f"{g.kind} second target must be a qubit")
        if g.kind == "MS" and (len(g.axes) != 2 or any(a not in PAULI for a in g.axes)):
            raise InvalidGate(f"bad MS axes {g.axes!r}")

    n_params = {"H": 0, "PERM_PLUS": 0, "CX": 0, "CROT": 2}.get(g.kind, 1)
    if len(g.params) != n_params:
        raise InvalidGate(f"{g.kind} takes {n_params} parameter(s), got {len(g.params)}")


# -- constructors -----------------------------------------------------------


def rx(t, dim, a, b, theta):
    return GateOp("RX", (t,), (dim,), (theta,), (a, b))


def ry(t, dim, a, b, theta):
    return GateOp("RY", (t,), (dim,), (theta,), (a, b))


def rz(t, dim, a, b, theta):
    return GateOp("RZ", (t,), (dim,), (theta,), (a, b))


def hadamard(t, dim, a, b):
    return GateOp("H", (t,), (dim,), (), (a, b))


def vrz(t, dim, a, phi):
    return GateOp("VRZ", (t,), (dim,), (phi,), (a,))


def perm_plus(t, dim=3):
    return GateOp("PERM_PLUS", (t,), (dim,))


def cx(control, target, dims, c, l1, l2):
    return GateOp("CX", (control, target), dims, (), (c, l1, l2))


def ms(a, b, dims, alpha, axes="xx"):
    return GateOp("MS", (a, b), dims, (alpha,), (), axes)


def rzz(a, b, dims, alpha):
    return GateOp("RZZ", (a, b), dims, (alpha,))


def crot(control, target, dims, c, i, j, theta, phi):
    return GateOp("CROT", (control, target), dims, (theta, phi), (c, i, j))


# -- matrices ---------------------------------------------------------------


def embed_pauli(mu: str, dim: int, a: int = 0, b: int = 1) -> np.ndarray:
    """sigma^{mu;ab} on a ``dim``-level system (zero outside span{a,b})."""
    out = np.zeros((dim, dim), dtype=complex)
    out[np.ix_([a, b], [a, b])] = PAULI[mu]
    return out


def two_level(u2: np.ndarray, dim: int, a: int, b: int) -> np.ndarray:
    out = np.eye(dim, dtype=complex)
    out[np.ix_([a, b], [a, b])] = u2
    return out


def rot2(mu: str, theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return c * np.eye(2, dtype=complex) - 1j * s * PAULI[mu]


def _rot_phi2(theta, phi):
    n = math.cos(phi) * PAULI["x"] + math.sin(phi) * PAULI["y"]
    return math.cos(theta / 2) * np.eye(2) - 1j * math.sin(theta / 2) * n


def _controlled(dc, dt, c, u_target):
    out = np.eye(dc * dt, dtype=complex)
    out[c * dt:(c + 1) * dt, c * dt:(c + 1) * dt] = u_target
    return out


def _ms_matrix(dim_a, alpha, axes):
    # (A + B)^2 = A^2 + 1 + 2 A⊗B with A^2 = projector on {0,1}, B^2 = 1;
    # all three pieces commute so the exponential factorizes exactly.
    mu, nu = axes
    A = embed_pauli(mu, dim_a)
    gen = np.kron(A @ A, np.eye(2)) + np.eye(2 * dim_a) + 2 * np.kron(A, PAULI[nu])
    return _expi_hermitian(gen, alpha / 4)


def _expi_hermitian(h, t):
    """exp(i t h) for Hermitian h via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(1j * t * w)) @ v.conj().T


def matrix_of(g: GateOp) -> np.ndarray:
    d = g.dims[0]
    if g.kind in ("RX", "RY", "RZ"):
        a, b = g.levels
        return two_level(rot2(g.kind[1].lower(), g.params[0]), d, a, b)
    if g.kind == "H":
        a, b = g.levels
        return two_level((PAULI["x"] + PAULI["z"]) / math.sqrt(2), d, a, b)
    if g.kind == "VRZ":
        out = np.eye(d, dtype=complex)
        out[g.levels[0], g.levels[0]] = np.exp(-1j * g.params[0])
        return out
    if g.kind == "PERM_PLUS":
        r01 = two_level(rot2("y", math.pi), d, 0, 1)
        r12 = two_level(rot2("y", math.pi), d, 1, 2)
        return r01 @ r12
    dc, dt = g.dims
    if g.kind == "CX":
        c, l1, l2 = g.levels
        return _controlled(dc, dt, c, two_level(PAULI["x"], dt, l1, l2))
    if g.kind == "CROT":
        c, i, j = g.levels
        theta, phi = g.params
        return _controlled(dc, dt, c, two_level(_rot_phi2(theta, phi), dt, i, j))
    if g.kind == "MS":
        return _ms_matrix(dc, g.params[0], g.axes)
    if g.kind == "RZZ":
        gen = np.kron(embed_pauli("z", dc), PAULI["z"])
        return _expi_hermitian(gen, g.params[0] / 2)
    raise InvalidGate(g.kind)


def is_unitary(g, atol: float = 1e-12) -> bool:
    """Check U^dagger U = 1; accepts a GateOp or a bare matrix."""
    u = matrix_of(g) if isinstance(g, GateOp) else np.asarray(g)
    return bool(np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0))


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Spectral-norm distance between a and b after optimal global-phase alignment."""
    ov = np.vdot(a, b)
    phase = ov / abs(ov) if abs(ov) > 1e-300 else 1.0
    return float(np.linalg.norm(a * phase - b, 2))


# -- text records -----------------------------------------------------------


def dumps_gates(gates: Iterable[GateOp]) -> str:
    """One JSON object per line; floats are written with full repr precision."""
    return "".join(json.dumps(g.to_record(), separators=(",", ":")) + "\n" for g in gates)


def loads_gates(text: str) -> list[GateOp]:
    return [GateOp.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]
