"""Spin-1 U(1) quantum link model in the particle-hole (p-h) frame.

Everything here lives in the p-h frame; the original frame only appears in
the reporting helpers at the bottom (``original_frame_fluxes`` and friends).

Encoding: link qutrit |0>, |1>, |2> carry m = +1, 0, -1.  Matter qubit |0>
is an occupied site (sigma^z = +1), |1> an empty one.  Gauss's law in the
p-h frame reads  s^z_{j-1,j} + s^z_{j,j+1} = n_j  with n_j = (sigma^z_j+1)/2,
so pair creation on a link has to *raise* m by one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BudgetError, DimensionError, GaugeViolation
from .gates import PAULI, embed_pauli
from .hilbert import QuditRegister

FORMULATIONS = ("integrated_out", "matterful")
MAX_ENUMERATE_L = 14

# m eigenvalue of each qutrit level, and its inverse
M_OF_LEVEL = (1, 0, -1)
LEVEL_OF_M = {1: 0, 0: 1, -1: 2}

S_Z = np.diag([1.0, 0.0, -1.0]).astype(complex)
# ladder matrix exactly as printed for the link operators; under the level
# labels above it lowers m ([s_z, S_PLUS_PRINTED] = -S_PLUS_PRINTED)
S_PLUS_PRINTED = math.sqrt(2) * np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=complex)
# the m-raising ladder that makes the minimal coupling commute with Gauss's law
S_RAISE = S_PLUS_PRINTED.T.copy()

SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|: empty -> occupied
SIGMA_Z = PAULI["z"]
OCCUPATION = np.diag([1.0, 0.0]).astype(complex)


def projector(level: int, dim: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[level, level] = 1.0
    return p


def link_diag(dim: int, values: Sequence[float]) -> np.ndarray:
    """Diagonal operator on a link qudit; any auxiliary level |3> gets 0."""
    d = np.zeros(dim, dtype=complex)
    d[:3] = values
    return np.diag(d)


@dataclass(frozen=True)
class LatticeModel:
    L: int
    kappa: float = 1.0
    mu: float = 1.0
    g: float = 1.0
    formulation: str = "integrated_out"

    def __post_init__(self):
        if self.L < 2:
            raise DimensionError("L must be at least 2")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        for name in ("kappa", "mu", "g"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def n_links(self) -> int:
        return self.L - 1

    @property
    def dims(self) -> tuple[int, ...]:
        """Local dimensions of the register, without allocating or budget-checking it."""
        if self.formulation == "matterful":
            return tuple([2, 3] * (self.L - 1) + [2])
        return (3,) + (4,) * (self.L - 2)

    def register(self) -> QuditRegister:
        if self.formulation == "matterful":
            return QuditRegister.matterful(self.L)
        return QuditRegister.integrated_out(self.L)

    def link_qudit(self, j: int) -> int:
        return 2 * j + 1 if self.formulation == "matterful" else j

    def matter_qudit(self, j: int) -> int:
        if self.formulation != "matterful":
            raise ValueError("matter is integrated out")
        return 2 * j

    def with_formulation(self, formulation: str) -> "LatticeModel":
        return LatticeModel(self.L, self.kappa, self.mu, self.g, formulation)


@dataclass(frozen=True)
class Term:
    support: tuple[int, ...]
    matrix: np.ndarray
    group: str  # "min" or "sg"
    link: int | None = None  # lattice link index for minimal-coupling terms


@dataclass(frozen=True)
class HamiltonianTerms:
    model: LatticeModel
    terms: tuple[Term, ...]

    @property
    def minimal(self) -> list[Term]:
        return [t for t in self.terms if t.group == "min"]

    @property
    def single(self) -> list[Term]:
        return [t for t in self.terms if t.group == "sg"]

    def without_links(self, links) -> "HamiltonianTerms":
        """Drop the minimal-coupling terms on the given links (walls)."""
        links = set(links)
        kept = tuple(t for t in self.terms if not (t.group == "min" and t.link in links))
        return HamiltonianTerms(self.model, kept)


def _min_link_term(model: LatticeModel, j: int, dims) -> Term:
    """Minimal-coupling term of link j with matter integrated out.

    Bulk: sqrt2 k (P1 sx01 P1 + P0 sx12 P0) on links (j-1, j, j+1).  The
    edges keep only the pair-creation channel with the neighbour in m = 0
    (the boundary flux is m = 0, so the P0-P0 channel can never fire).
    """
    c = math.sqrt(2) * model.kappa
    nl = model.n_links
    d = dims
    if nl == 1:
        return Term((0,), c * embed_pauli("x", d[0], 0, 1), "min", 0)
    if j == 0:
        h = np.kron(embed_pauli("x", d[0], 0, 1), projector(1, d[1]))
        return Term((0, 1), c * h, "min", 0)
    if j == nl - 1:
        h = np.kron(projector(1, d[j - 1]), embed_pauli("x", d[j], 0, 1))
        return Term((j - 1, j), c * h, "min", j)
    dl, dm, dr = d[j - 1], d[j], d[j + 1]
    h = np.kron(np.kron(projector(1, dl), embed_pauli("x", dm, 0, 1)), projector(1, dr))
    h = h + np.kron(np.kron(projector(0, dl), embed_pauli("x", dm, 1, 2)), projector(0, dr))
    return Term((j - 1, j, j + 1), c * h, "min", j)


def build_terms(model: LatticeModel) -> HamiltonianTerms:
    reg = model.register()
    terms: list[Term] = []
    if model.formulation == "integrated_out":
        for j in range(model.n_links):
            terms.append(_min_link_term(model, j, reg.dims))
        for j in range(model.n_links):
            d = reg.dims[j]
            # 2 mu s^z + g^2/2 (s^z)^2 on every link (mass via sum sigma^z = 4 sum s^z - L)
            vals = [2 * model.mu * m + 0.5 * model.g**2 * m * m for m in M_OF_LEVEL]
            terms.append(Term((j,), link_diag(d, vals), "sg", j))
        return HamiltonianTerms(model, tuple(terms))

    for j in range(model.n_links):
        h = np.kron(np.kron(SIGMA_PLUS, S_RAISE), SIGMA_PLUS)
        h = model.kappa * (h + h.conj().T)
        terms.append(Term((2 * j, 2 * j + 1, 2 * j + 2), h, "min", j))
    for j in range(model.L):
        terms.append(Term((2 * j,), 0.5 * model.mu * SIGMA_Z, "sg", None))
    for j in range(model.n_links):
        terms.append(Term((2 * j + 1,), 0.5 * model.g**2 * (S_Z @ S_Z), "sg", j))
    return HamiltonianTerms(model, tuple(terms))


def gauss_generator(j: int, model: LatticeModel) -> tuple[tuple[int, ...], np.ndarray]:
    """G_j^{p-h} on the matterful register as (targets, matrix).

    Links outside the chain are the scalar m = 0 and do not appear.
    """
    if not 0 <= j < model.L:
        raise IndexError(f"site {j} outside chain of length {model.L}")
    sign = (-1) ** j
    targets = []
    if j > 0:
        targets.append(2 * j - 1)
    targets.append(2 * j)
    if j < model.L - 1:
        targets.append(2 * j + 1)
    diag = np.zeros(1)
    for t in targets:
        if t == 2 * j:
            v = -np.array([1.0, 0.0])  # -(sigma^z + 1)/2
        else:
            v = np.array(M_OF_LEVEL, dtype=float)
        diag = np.add.outer(diag, v).ravel()
    return tuple(targets), np.diag(sign * diag).astype(complex)


@dataclass(frozen=True)
class PhysicalSubspace:
    """Gauge-invariant basis of a model, sorted by register index.

    ``links`` holds p-h frame m values (D, L-1); ``occupations`` the matter
    occupations n_j (D, L); ``indices`` the basis index of each state in the
    model's register.
    """

    model: LatticeModel
    links: np.ndarray
    occupations: np.ndarray
    indices: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.indices)

    def digits(self) -> np.ndarray:
        """Register digits of each physical state."""
        levels = np.vectorize(LEVEL_OF_M.get)(self.links) if self.links.size else self.links
        if self.model.formulation == "integrated_out":
            return levels.astype(np.int64)
        out = np.zeros((self.dim, 2 * self.model.L - 1), dtype=np.int64)
        out[:, 0::2] = 1 - self.occupations
        out[:, 1::2] = levels
        return out

    def position(self) -> dict[int, int]:
        return {int(i): k for k, i in enumerate(self.indices)}

    def embed(self, coeffs: np.ndarray) -> np.ndarray:
        """Lift a physical-basis vector (or column batch) to the full register."""
        reg = self.model.register()
        out = np.zeros((reg.size,) + coeffs.shape[1:], dtype=complex)
        out[self.indices] = coeffs
        return out

    def restrict(self, amplitudes: np.ndarray) -> np.ndarray:
        return amplitudes[self.indices]

    def charges(self) -> np.ndarray:
        """Original-frame charge rho_j of every basis state, shape (D, L)."""
        signs = (-1) ** np.arange(self.model.L)
        return self.occupations * signs


def _link_sequences(L: int) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []

    def walk(prefix, prev):
        if len(prefix) == L - 1:
            if prev in (0, 1):  # last site sees the m = 0 boundary
                out.append(tuple(prefix))
            return
        for m in (-prev, 1 - prev):
            if -1 <= m <= 1:
                walk(prefix + [m], m)

    walk([], 0)
    return out


def enumerate_physical(model: LatticeModel) -> PhysicalSubspace:
    if model.L > MAX_ENUMERATE_L:
        raise BudgetError(f"enumeration limited to L <= {MAX_ENUMERATE_L}")
    seqs = np.array(_link_sequences(model.L), dtype=np.int64).reshape(-1, model.L - 1)
    padded = np.pad(seqs, ((0, 0), (1, 1)))
    occ = padded[:, :-1] + padded[:, 1:]
    reg = model.register()
    strides = np.array(reg.strides, dtype=np.int64)
    levels = np.vectorize(LEVEL_OF_M.get)(seqs) if seqs.size else seqs
    if model.formulation == "integrated_out":
        digits = levels
    else:
        digits = np.zeros((len(seqs), reg.n), dtype=np.int64)
        digits[:, 0::2] = 1 - occ
        digits[:, 1::2] = levels
    idx = digits @ strides
    order = np.argsort(idx, kind="stable")
    return PhysicalSubspace(model, seqs[order], occ[order], idx[order])


def occupations_from_links(links: Sequence[int]) -> np.ndarray:
    """Matter occupations fixed by Gauss's law; raises if the pattern is unphysical."""
    m = np.pad(np.asarray(links, dtype=int), 1)
    occ = m[:-1] + m[1:]
    if np.any((occ < 0) | (occ > 1)):
        raise GaugeViolation(f"link pattern {list(links)} violates Gauss's law")
    return occ


def reconstruct_charge(link_fluxes: np.ndarray, L: int | None = None) -> np.ndarray:
    """Site charges rho_j = (-1)^j (<s_{j-1,j}> + <s_{j,j+1}>) from p-h frame fluxes.

    Works on the last axis, so a (times, L-1) array gives (times, L).
    """
    s = np.asarray(link_fluxes, dtype=float)
    if L is not None and s.shape[-1] != L - 1:
        raise DimensionError(f"expected {L - 1} link values, got {s.shape[-1]}")
    pad = [(0, 0)] * (s.ndim - 1) + [(1, 1)]
    sp = np.pad(s, pad)
    n = sp[..., :-1] + sp[..., 1:]
    return n * (-1) ** np.arange(n.shape[-1])


def original_frame_fluxes(link_fluxes: np.ndarray) -> np.ndarray:
    """p-h frame link fluxes -> original-frame electric fields E_j = (-1)^j s_j."""
    s = np.asarray(link_fluxes, dtype=float)
    return s * (-1) ** np.arange(s.shape[-1])


def charges_from_original_fluxes(fluxes: np.ndarray) -> np.ndarray:
    """Original-frame Gauss's law rho_j = E_{j,j+1} - E_{j-1,j} (boundary E = 0)."""
    e = np.asarray(fluxes, dtype=float)
    pad = [(0, 0)] * (e.ndim - 1) + [(1, 1)]
    ep = np.pad(e, pad)
    return ep[..., 1:] - ep[..., :-1]


def matter_charges(occupations: np.ndarray) -> np.ndarray:
    """Original-frame charge from p-h frame occupations: rho_j = (-1)^j n_j."""
    n = np.asarray(occupations, dtype=float)
    return n * (-1) ** np.arange(n.shape[-1])
