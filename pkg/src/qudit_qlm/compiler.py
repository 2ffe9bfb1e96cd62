"""Circuit synthesis for both formulations and second-order Trotter assembly.

Gate lists returned by the ``compile_*`` helpers are in application order
(first element acts first).  Operator identities quoted in docstrings are
ordinary matrix products (rightmost factor acts first).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import gates as G
from .errors import DimensionError, InvalidGate
from .gates import GateOp
from .hilbert import QuditRegister
from .model import M_OF_LEVEL, LatticeModel

CIRCUIT_FORMAT = "qudit_qlm.circuit"
CIRCUIT_VERSION = 1


@dataclass(frozen=True)
class Block:
    """Gate range [start, stop) realizing one Hamiltonian-term exponential."""

    start: int
    stop: int
    support: tuple[int, ...]
    label: str = ""


@dataclass(frozen=True)
class WallSchedule:
    """Minimal-coupling terms on ``links`` are dropped for the first ``hold_steps`` steps."""

    links: tuple[int, ...] = ()
    hold_steps: int = 0

    def active(self, step: int) -> tuple[int, ...]:
        return self.links if step < self.hold_steps else ()


NO_WALLS = WallSchedule()


@dataclass
class Circuit:
    register: QuditRegister
    gates: list[GateOp]
    steps: list[tuple[int, int]]
    blocks: list[Block] = field(default_factory=list)
    T: float = 0.0
    wall_off_step: int | None = None

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def step_gates(self, n: int) -> list[GateOp]:
        s, e = self.steps[n]
        return self.gates[s:e]

    def step_blocks(self, n: int) -> list[Block]:
        s, e = self.steps[n]
        return [b for b in self.blocks if s <= b.start and b.stop <= e]

    def dumps(self) -> str:
        header = {
            "format": CIRCUIT_FORMAT,
            "version": CIRCUIT_VERSION,
            "dims": list(self.register.dims),
            "roles": [list(r) for r in self.register.roles],
            "T": self.T,
            "wall_off_step": self.wall_off_step,
            "steps": [list(s) for s in self.steps],
            "blocks": [[b.start, b.stop, list(b.support), b.label] for b in self.blocks],
        }
        return json.dumps(header, separators=(",", ":")) + "\n" + G.dumps_gates(self.gates)

    @classmethod
    def loads(cls, text: str) -> "Circuit":
        first, _, rest = text.partition("\n")
        header = json.loads(first)
        if header.get("format") != CIRCUIT_FORMAT or header.get("version") != CIRCUIT_VERSION:
            raise ValueError("not a qudit_qlm circuit file of a supported version")
        reg = QuditRegister(tuple(header["dims"]), tuple(tuple(r) for r in header["roles"]))
        return cls(
            register=reg,
            gates=G.loads_gates(rest),
            steps=[tuple(s) for s in header["steps"]],
            blocks=[Block(s, e, tuple(sup), lab) for s, e, sup, lab in header["blocks"]],
            T=header["T"],
            wall_off_step=header["wall_off_step"],
        )


# -- matter-integrated-out blocks ------------------------------------------


def compile_crx(control, target, dims, c, a, b, angle) -> list[GateOp]:
    """Controlled R_x^{ab}(angle) from two CX gates.

    H RZ(angle/2) CX RZ(-angle/2) CX H: with the control away from |c> the
    two RZ cancel; with the control in |c> the CX pair conjugates the second
    RZ into RZ(+angle/2), leaving H RZ(angle) H = RX(angle).
    """
    dc, dt = dims
    if not 0 <= c < dc or not (0 <= a < dt and 0 <= b < dt) or a == b:
        raise InvalidGate(f"invalid CRX levels c={c}, a={a}, b={b} for dims {dims}")
    return [
        G.hadamard(target, dt, a, b),
        G.rz(target, dt, a, b, angle / 2),
        G.cx(control, target, dims, c, a, b),
        G.rz(target, dt, a, b, -angle / 2),
        G.cx(control, target, dims, c, a, b),
        G.hadamard(target, dt, a, b),
    ]


def link_angle(model: LatticeModel, T: float) -> float:
    # exp(-i T sqrt2 kappa sigma^x) = R_x(2 sqrt2 kappa T)
    return 2 * math.sqrt(2) * model.kappa * T


def compile_umin_link(j: int, model: LatticeModel, T: float) -> list[GateOp]:
    """exp(-i T H^min_{links;j}) for a bulk link with 8 CX gates.

    The right neighbour's auxiliary level |3> flags which projector
    condition holds: (0, 0) neighbours trigger the 1<->2 rotation, (1, 1)
    neighbours the 0<->1 rotation.  Both blocks commute, so their order is
    free; the 1<->2 block goes first.
    """
    if model.formulation != "integrated_out":
        raise ValueError("compile_umin_link needs the integrated-out formulation")
    if not 1 <= j <= model.L - 3:
        raise IndexError(f"link {j} is not a bulk link; use compile_umin_edge")
    dims = model.dims
    left, mid, right = j - 1, j, j + 1
    dl, dm, dr = dims[left], dims[mid], dims[right]
    theta = link_angle(model, T)
    seq = [G.cx(left, right, (dl, dr), 0, 0, 3)]
    seq += compile_crx(right, mid, (dr, dm), 3, 1, 2, theta)
    seq += [G.cx(left, right, (dl, dr), 0, 0, 3), G.cx(left, right, (dl, dr), 1, 1, 3)]
    seq += compile_crx(right, mid, (dr, dm), 3, 0, 1, theta)
    seq += [G.cx(left, right, (dl, dr), 1, 1, 3)]
    return seq


def compile_umin_edge(side: str, model: LatticeModel, T: float) -> list[GateOp]:
    """Edge links: a single CRX conditioned on the inner neighbour being in |1>."""
    if model.formulation != "integrated_out":
        raise ValueError("compile_umin_edge needs the integrated-out formulation")
    dims = model.dims
    theta = link_angle(model, T)
    nl = model.n_links
    if nl == 1:
        return [G.rx(0, dims[0], 0, 1, theta)]
    if side == "left":
        tgt, ctl = 0, 1
    elif side == "right":
        tgt, ctl = nl - 1, nl - 2
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return compile_crx(ctl, tgt, (dims[ctl], dims[tgt]), 1, 0, 1, theta)


def compile_usg(model: LatticeModel, tau: float) -> list[GateOp]:
    """exp(-i tau H^sg) as virtual RZ gates (tau = T/2 for a half step).

    Zero-angle phases are not emitted.
    """
    dims = model.dims
    out: list[GateOp] = []

    def emit(q, level, phi):
        if phi != 0.0:
            out.append(G.vrz(q, dims[q], level, phi))

    if model.formulation == "integrated_out":
        for j in range(model.n_links):
            for level in (0, 2):
                m = M_OF_LEVEL[level]
                emit(j, level, tau * (2 * model.mu * m + 0.5 * model.g**2 * m * m))
        return out
    for q in range(len(dims)):
        if q % 2 == 0:
            # (mu/2) sigma^z: phase tau*mu/2 on |0>, -tau*mu/2 on |1>
            emit(q, 0, tau * model.mu / 2)
            emit(q, 1, -tau * model.mu / 2)
        else:
            emit(q, 0, tau * model.g**2 / 2)
            emit(q, 2, tau * model.g**2 / 2)
    return out


# -- matterful blocks -------------------------------------------------------

# (axes, s, angle) for the twelve MS factors of U^min(theta), written as an
# operator product left to right; "t" stands for +theta and "-t" for -theta.
_UMIN_FACTORS = (
    ("zy", 0, -0.5), ("xx", 1, "t"), ("zy", 0, 0.5),
    ("yy", 0, -0.5), ("zy", 1, "t"), ("yy", 0, 0.5),
    ("yx", 0, -0.5), ("zx", 1, "-t"), ("yx", 0, 0.5),
    ("xx", 0, -0.5), ("zy", 1, "-t"), ("xx", 0, 0.5),
)


def _to_x(q: int, dim: int, axis: str, inverse: bool) -> list[GateOp]:
    """Gates realizing C (or C^dagger) with C sigma^x C^dagger = sigma^axis on levels {0,1}."""
    if axis == "x":
        return []
    sign = -1.0 if inverse else 1.0
    if axis == "z":
        return [G.ry(q, dim, 0, 1, -sign * math.pi / 2)]
    return [G.rz(q, dim, 0, 1, sign * math.pi / 2)]


def _to_z(q: int, dim: int, axis: str, inverse: bool) -> list[GateOp]:
    """Gates realizing D (or D^dagger) with D sigma^z D^dagger = sigma^axis."""
    sign = -1.0 if inverse else 1.0
    if axis == "z":
        return []
    if axis == "x":
        return [G.ry(q, dim, 0, 1, sign * math.pi / 2)]
    # D_y = RZ(pi/2) RY(pi/2): apply RY first
    seq = [G.ry(q, dim, 0, 1, math.pi / 2), G.rz(q, dim, 0, 1, math.pi / 2)]
    if inverse:
        seq = [G.rz(q, dim, 0, 1, -math.pi / 2), G.ry(q, dim, 0, 1, -math.pi / 2)]
    return seq


def lowered_ms(qutrit: int, qubit: int, dims, alpha: float, axes: str, entangler: str = "ms"):
    """M^{mu nu}(alpha) as native MS^{xx} (or RZZ) dressed with basis changes.

    (C_mu ⊗ C_nu) M^{xx} (C_mu ⊗ C_nu)^dagger = M^{mu nu} because the MS
    generator (sigma^mu + sigma^nu)^2 transforms covariantly.
    """
    mu, nu = axes
    d3, d2 = dims
    change = _to_x if entangler == "ms" else _to_z
    pre = change(qutrit, d3, mu, True) + change(qubit, d2, nu, True)
    post = change(qutrit, d3, mu, False) + change(qubit, d2, nu, False)
    if entangler == "ms":
        core = G.ms(qutrit, qubit, dims, alpha, "xx")
    elif entangler == "rzz":
        core = G.rzz(qutrit, qubit, dims, alpha)
    else:
        raise ValueError(f"unknown entangler {entangler!r}")
    return pre + [core] + post


def compile_umin_half(j: int, model: LatticeModel, theta: float, entangler: str = "ms"):
    """U^min(theta): twelve MS gates on (qubit j, link qutrit, qubit j+1)."""
    qL, lk, qR = 2 * j, 2 * j + 1, 2 * j + 2
    ops: list[GateOp] = []
    for axes, s, a in reversed(_UMIN_FACTORS):
        alpha = {"t": theta, "-t": -theta}.get(a) if isinstance(a, str) else a * math.pi
        qubit = qL if s == 0 else qR
        ops += lowered_ms(lk, qubit, (3, 2), alpha, axes, entangler)
    return ops


def compile_umin_matterful(j: int, model: LatticeModel, T: float, entangler: str = "ms"):
    """exp(-i T H^min_j) with matter kept: 24 MS gates.

    Circuit order: U^min(T k/sqrt2), R_Y^{01}(pi), R_Y^{12}(pi), U^min(T k/sqrt2),
    R_Y^{12}(-pi), R_Y^{01}(-pi).  The cyclic relabelling moves the 1<->2 link
    transition into the {0,1} subspace where the MS gates act.
    """
    if model.formulation != "matterful":
        raise ValueError("compile_umin_matterful needs the matterful formulation")
    if not 0 <= j < model.n_links:
        raise IndexError(f"link {j} outside chain")
    lk = 2 * j + 1
    theta = T * model.kappa / math.sqrt(2)
    half = compile_umin_half(j, model, theta, entangler)
    return (
        half
        + [G.ry(lk, 3, 0, 1, math.pi), G.ry(lk, 3, 1, 2, math.pi)]
        + half
        + [G.ry(lk, 3, 1, 2, -math.pi), G.ry(lk, 3, 0, 1, -math.pi)]
    )


def compile_min_term(j: int, model: LatticeModel, T: float, entangler: str = "ms"):
    """Dispatch to the right block for link j; returns (gates, support)."""
    if model.formulation == "matterful":
        return compile_umin_matterful(j, model, T, entangler), (2 * j, 2 * j + 1, 2 * j + 2)
    nl = model.n_links
    if nl == 1:
        return compile_umin_edge("left", model, T), (0,)
    if j == 0:
        return compile_umin_edge("left", model, T), (0, 1)
    if j == nl - 1:
        return compile_umin_edge("right", model, T), (nl - 2, nl - 1)
    return compile_umin_link(j, model, T), (j - 1, j, j + 1)


# -- Trotter assembly -------------------------------------------------------


def assemble_trotter(
    model: LatticeModel,
    T: float,
    N: int,
    walls: WallSchedule = NO_WALLS,
    ordering: str = "alternate",
    entangler: str = "ms",
) -> Circuit:
    """Second-order product formula repeated N times.

    Each step is U^sg(T/2) [prod_j U^min_j(T)] U^sg(T/2); the inner half
    steps of neighbouring steps are merged into one U^sg(T).  Since U^sg is
    diagonal this does not change any diagonal observable at a step
    boundary.

    The minimal-coupling layer runs over ascending links on even steps and
    descending links on odd steps (``ordering="alternate"``), so that each
    pair of steps is a palindromic, hence second-order, product.  The
    alternation restarts at the wall-off step.  A fixed ascending order
    (``ordering="ascending"``) only converges at first order because
    neighbouring link terms do not commute.
    """
    if T <= 0:
        raise ValueError("step size T must be positive")
    if N < 0:
        raise ValueError("N must be non-negative")
    if ordering not in ("alternate", "ascending"):
        raise ValueError(f"unknown ordering {ordering!r}")
    for w in walls.links:
        if not 0 <= w < model.n_links:
            raise DimensionError(f"wall link {w} outside chain")
    gates: list[GateOp] = []
    steps: list[tuple[int, int]] = []
    blocks: list[Block] = []
    for n in range(N):
        start = len(gates)
        for seq, support, label in _step_pieces(model, T, n, N, walls, ordering, entangler):
            b0 = len(gates)
            gates += seq
            if support is not None:
                blocks.append(Block(b0, len(gates), support, label))
        steps.append((start, len(gates)))
    wall_off = walls.hold_steps if walls.links else None
    return Circuit(model.register(), gates, steps, blocks, T, wall_off)


def _step_pieces(model, T, n, N, walls, ordering, entangler):
    """(gates, block support or None, label) pieces of Trotter step n."""
    if n == 0:
        yield compile_usg(model, T / 2), None, "sg"
    skip = set(walls.active(n))
    # direction parity restarts when the walls switch off so that each
    # Hamiltonian regime is built from palindromic step pairs
    k = n - walls.hold_steps if (walls.links and n >= walls.hold_steps) else n
    links = list(range(model.n_links))
    order = links if (ordering == "ascending" or k % 2 == 0) else links[::-1]
    for j in order:
        if j in skip:
            continue
        seq, support = compile_min_term(j, model, T, entangler)
        yield seq, support, f"min{j}"
    yield compile_usg(model, T if n < N - 1 else T / 2), None, "sg"


def gate_count(circuit_or_gates: Circuit | Iterable[GateOp]) -> dict[str, int]:
    gates = circuit_or_gates.gates if isinstance(circuit_or_gates, Circuit) else circuit_or_gates
    counts = {"MS": 0, "CX": 0, "one_body": 0}
    for g in gates:
        if g.noise_class in counts:
            counts[g.noise_class] += 1
    return counts


def step_gate_count(model: LatticeModel, entangler: str = "ms") -> dict[str, int]:
    """Noise-bearing gate counts of one Trotter step without walls (no register needed)."""
    gates = [g for seq, _, _ in _step_pieces(model, 0.25, 0, 1, NO_WALLS, "alternate", entangler) for g in seq]
    return gate_count(gates)


def gate_count_table(Ls: Sequence[int], kappa=1.0, mu=1.0, g=1.0) -> list[dict]:
    """Rows (L, formulation, MS, CX, one_body, ratio) for both formulations."""
    rows = []
    for L in Ls:
        per = {}
        for form in ("integrated_out", "matterful"):
            per[form] = step_gate_count(LatticeModel(L, kappa, mu, g, form))
        two_io = per["integrated_out"]["CX"] + per["integrated_out"]["MS"]
        two_mf = per["matterful"]["CX"] + per["matterful"]["MS"]
        ratio = two_mf / two_io if two_io else float("nan")
        for form in ("integrated_out", "matterful"):
            rows.append({"L": L, "formulation": form, **per[form], "ratio": ratio})
    return rows
