"""Exact time evolution restricted to the gauge-invariant subspace."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import BudgetError, GaugeViolation
from .hilbert import QuditRegister
from .model import HamiltonianTerms, LatticeModel, PhysicalSubspace, build_terms, enumerate_physical

MAX_EXACT_DIM = 20000


def expm_local(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i t h) for a Hermitian matrix via its eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    if not np.allclose(h, h.conj().T, atol=1e-12):
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * t * w)) @ v.conj().T


def subspace_hamiltonian(terms: HamiltonianTerms, basis: PhysicalSubspace) -> np.ndarray:
    """Dense matrix of the summed terms in the physical basis.

    Every term is applied to all basis configurations at once; an image
    outside the basis means the term does not conserve the gauge charges.
    """
    reg: QuditRegister = basis.model.register()
    D = basis.dim
    if D > MAX_EXACT_DIM:
        raise BudgetError(f"physical dimension {D} exceeds exact-engine budget {MAX_EXACT_DIM}")
    digits = basis.digits()
    strides = np.array(reg.strides, dtype=np.int64)
    H = np.zeros((D, D), dtype=complex)
    cols = np.arange(D)
    for term in terms.terms:
        sup = list(term.support)
        sdims = [reg.dims[q] for q in sup]
        local = np.zeros(D, dtype=np.int64)
        for q, d in zip(sup, sdims):
            local = local * d + digits[:, q]
        base = digits @ strides - digits[:, sup] @ strides[sup]
        out_digits = np.array(np.unravel_index(np.arange(int(np.prod(sdims))), sdims)).T
        for y, yd in enumerate(out_digits):
            amp = term.matrix[y, local]
            nz = amp != 0
            if not nz.any():
                continue
            target = base[nz] + yd @ strides[sup]
            rows = np.searchsorted(basis.indices, target)
            rows = np.minimum(rows, D - 1)
            if np.any(basis.indices[rows] != target):
                raise GaugeViolation("Hamiltonian term leaves the physical subspace")
            np.add.at(H, (rows, cols[nz]), amp[nz])
    return H


class ExactEvolver:
    """Piecewise-constant exact evolution in the physical subspace.

    Before ``t_hold`` the minimal-coupling terms on ``walls`` are absent;
    afterwards the full Hamiltonian acts.
    """

    def __init__(self, model: LatticeModel, walls: Sequence[int] = (), t_hold: float = 0.0):
        self.model = model
        self.basis = enumerate_physical(model)
        if self.basis.dim > MAX_EXACT_DIM:
            raise BudgetError(f"physical dimension {self.basis.dim} exceeds {MAX_EXACT_DIM}")
        terms = build_terms(model)
        self.walls = tuple(walls)
        self.t_hold = float(t_hold) if self.walls else 0.0
        self._full = np.linalg.eigh(subspace_hamiltonian(terms, self.basis))
        if self.walls:
            self._held = np.linalg.eigh(subspace_hamiltonian(terms.without_links(self.walls), self.basis))
        else:
            self._held = self._full

    @staticmethod
    def _prop(eig, c, t):
        w, v = eig
        return v @ (np.exp(-1j * t * w) * (v.conj().T @ c))

    def evolve(self, c0: np.ndarray, t: float) -> np.ndarray:
        """Physical-basis state at time t (t >= 0)."""
        if t < 0:
            raise ValueError("time must be non-negative")
        c0 = np.asarray(c0, dtype=complex)
        if t <= self.t_hold:
            return self._prop(self._held, c0, t)
        c = self._prop(self._held, c0, self.t_hold)
        return self._prop(self._full, c, t - self.t_hold)

    def observables(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Original-frame charges (L,) and fluxes (L-1,) of a physical-basis state."""
        p = np.abs(c) ** 2
        p = p / p.sum()
        return observables_from_populations(p, self.basis)

    def series(self, c0: np.ndarray, times: Sequence[float]):
        rho, flux = zip(*(self.observables(self.evolve(c0, t)) for t in times))
        return np.array(rho), np.array(flux)


def observables_from_populations(p: np.ndarray, basis: PhysicalSubspace):
    s = p @ basis.links
    rho = p @ basis.charges()
    flux = s * (-1) ** np.arange(s.shape[-1])
    return rho, flux


def evolve_exact(model: LatticeModel, c0: np.ndarray, t: float, walls=(), t_hold: float = 0.0) -> np.ndarray:
    return ExactEvolver(model, walls, t_hold).evolve(c0, t)
