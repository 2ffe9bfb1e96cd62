"""Acceptance criteria 1-8.  Each check prints one ``CRITERION`` line.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary.  Checks that the implementation cannot
meet are marked strict xfail: they run in full and print FAIL.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from qudit_qlm.compiler import (assemble_trotter, compile_crx, compile_min_term, gate_count,
                                step_gate_count)
from qudit_qlm.gates import embed_pauli, phase_distance
from qudit_qlm.model import LatticeModel, build_terms, enumerate_physical
from qudit_qlm.noise import (GUARD_ETA, AllTrajectoriesDiscarded, NoiseModel, average_trajectories,
                             leakage_fraction, run_kraus_physical, run_trajectories)
from qudit_qlm.scattering import prepare_initial, preset, run_experiment, subtract_free, vacuum_floor
from qudit_qlm.simulator import CircuitExecutor, block_matrix

GOLDEN = Path(__file__).parent / "golden"
REG = json.loads((GOLDEN / "regression.json").read_text())
LINES: list[str] = []  # collected for the terminal summary


def report(label, ok, detail):
    line = f"CRITERION {label}: {'PASS' if ok else 'FAIL'} {detail}"
    LINES.append(line)
    print(line)
    return ok


def trotter_error(T, t=5.0):
    p = preset("noise_l7_g3", T=T, N=int(round(t / T)), hold_steps=int(round(2.25 / T)))
    nl = run_experiment(p, "noiseless")
    ex = run_experiment(p, "exact")
    return float(np.abs(nl.charges[-1] - ex.charges[-1]).max())


@pytest.fixture(scope="module")
def trotter_band():
    """Criterion-4 errors at T = 0.25, 0.125; the first is the band at the preset step."""
    return trotter_error(0.25), trotter_error(0.125)


# -- 1 ----------------------------------------------------------------------


def test_criterion_1_physical_counts():
    t0 = time.perf_counter()
    d7 = enumerate_physical(LatticeModel(7)).dim
    d8 = enumerate_physical(LatticeModel(8)).dim
    dt = time.perf_counter() - t0
    ok = d7 == 33 and d8 == 61 and dt < 1.0
    assert report("1", ok, f"dim(L=7)={d7} (33) dim(L=8)={d8} (61) runtime={dt:.3f}s (<1s)")


# -- 2 ----------------------------------------------------------------------


def _aux_free(sdims):
    local = np.array(np.unravel_index(np.arange(int(np.prod(sdims))), sdims)).T
    return np.flatnonzero(~np.any(local == 3, axis=1))


def test_criterion_2_circuit_exponential_equivalence():
    rng = np.random.default_rng(2024)
    Ts = rng.uniform(0, 1, 20)
    t0 = time.perf_counter()
    # (a) CRX composition vs controlled rotation on a qubit-controlled qutrit and a ququart pair
    ea = 0.0
    for T in Ts:
        for dims, c, a, b in (((2, 3), 1, 0, 1), ((4, 4), 2, 1, 2)):
            U = block_matrix(compile_crx(0, 1, dims, c, a, b, 2 * T), (0, 1), dims)
            P = np.diag(np.arange(dims[0]) == c).astype(float)
            V = np.kron(P, expm(-1j * T * embed_pauli("x", dims[1], a, b))) + np.kron(np.eye(dims[0]) - P,
                                                                                        np.eye(dims[1]))
            ea = max(ea, phase_distance(U, V))
    # (b) integrated-out link block on the |3>-free subspace
    eb, n_ent_b = 0.0, set()
    for T in Ts:
        model = LatticeModel(6, kappa=1.0, g=3.0)
        term = next(t for t in build_terms(model).minimal if t.link == 2)
        gates, support = compile_min_term(2, model, T)
        n_ent_b.add(gate_count(gates).get("CX", 0))
        U = block_matrix(gates, support, model.dims)
        keep = _aux_free([model.dims[q] for q in support])
        V = expm(-1j * T * term.matrix)
        eb = max(eb, phase_distance(U[np.ix_(keep, keep)], V[np.ix_(keep, keep)]))
    # (c) matterful MS composition
    ec, n_ent_c = 0.0, set()
    for T in Ts:
        model = LatticeModel(3, kappa=1.0, g=3.0, formulation="matterful")
        term = next(t for t in build_terms(model).minimal if t.link == 1)
        gates, support = compile_min_term(1, model, T)
        n_ent_c.add(gate_count(gates).get("MS", 0))
        U = block_matrix(gates, support, model.dims)
        ec = max(ec, phase_distance(U, expm(-1j * T * term.matrix)))
    dt = time.perf_counter() - t0
    ok = max(ea, eb, ec) < 1e-10 and dt < 10 and n_ent_b == {8} and n_ent_c == {24}
    assert report("2", ok, f"(a) {ea:.1e} (b) {eb:.1e} [{n_ent_b} CX] (c) {ec:.1e} [{n_ent_c} MS] "
                           f"over {len(Ts)} T, tol 1e-10, runtime={dt:.2f}s (<10s)")


# -- 3 ----------------------------------------------------------------------


def test_criterion_3_gauge_invariance():
    rng = np.random.default_rng(3)
    worst = {}
    for form in ("integrated_out", "matterful"):
        model = LatticeModel(7, kappa=1.0, mu=1.0, g=3.0, formulation=form)
        basis = enumerate_physical(model)
        c = rng.normal(size=(basis.dim, 2)) + 1j * rng.normal(size=(basis.dim, 2))
        c /= np.linalg.norm(c, axis=0)
        circ = assemble_trotter(model, 0.25, 50)
        ex = CircuitExecutor(circ)
        worst[form] = max(leakage_fraction(ex.run(basis.embed(c[:, k]))[-1], basis) for k in range(2))
    ok = max(worst.values()) < 1e-10
    assert report("3", ok, "leakage after 50 steps " +
                  " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (<1e-10)")


# -- 4 ----------------------------------------------------------------------


def test_criterion_4_trotter_order(trotter_band):
    e1, e2 = trotter_band
    ratio = e1 / e2
    assert e1 == pytest.approx(REG["trotter_errors_l7_t5"][0], rel=1e-9)
    ok = 3 <= ratio <= 5
    assert report("4", ok, f"err(T=0.25)={e1:.4f} err(T=0.125)={e2:.4f} ratio={ratio:.2f} (in [3,5])")


# -- 5 ----------------------------------------------------------------------


SCATTER = ("meson_meson_g3", "meson_antimeson_g3", "meson_antimeson_g05")


@pytest.fixture(scope="module")
def scatter_runs():
    """Noiseless and exact runs of the scattering presets and their backgrounds."""
    out = {}
    for name in SCATTER:
        p = preset(name)
        kinds = (p.kind,) if p.kind == "meson_meson" else (p.kind, "free_left", "free_right", "vacuum")
        for k in kinds:
            q = p.variant(k)
            out[name, k] = {e: run_experiment(q, e) for e in ("noiseless", "exact")}
    return out


@pytest.mark.xfail(strict=True, reason="Trotter error at L=11/12 up to t=10 exceeds the L=7, t=5 band")
def test_criterion_5a_noiseless_vs_exact(scatter_runs, trotter_band):
    band = trotter_band[0]
    devs = {n: float(np.abs(scatter_runs[n, preset(n).kind]["noiseless"].charges -
                            scatter_runs[n, preset(n).kind]["exact"].charges).max()) for n in SCATTER}
    ok = max(devs.values()) < band
    assert report("5a", ok, " ".join(f"{n}={d:.4f}" for n, d in devs.items()) + f" (band {band:.4f})")


def _free_subtracted(runs, name, engine):
    p = preset(name)
    r = {k: runs[name, k][engine] for k in (p.kind, "free_left", "free_right", "vacuum")}
    d = subtract_free(r[p.kind], r["free_left"], r["free_right"], r["vacuum"])
    pre = d.times <= p.t_hold + 1e-12
    return np.abs(d.charges[pre]).max(), np.abs(d.charges[~pre]).max()


def test_criterion_5b_qualitative_structure(scatter_runs):
    floors = {n: vacuum_floor(scatter_runs[n, "vacuum"]["exact"], preset(n).t_hold)
              for n in ("meson_antimeson_g3", "meson_antimeson_g05")}
    pre3, post3 = _free_subtracted(scatter_runs, "meson_antimeson_g3", "noiseless")
    pre05, post05 = _free_subtracted(scatter_runs, "meson_antimeson_g05", "noiseless")
    # the meson-meson collision is mirror symmetric and charge neutral
    mm = scatter_runs["meson_meson_g3", "meson_meson"]["noiseless"].charges
    neutral = np.abs(mm.sum(axis=1)).max()
    ok = (pre3 < floors["meson_antimeson_g3"] < post3 and post05 < floors["meson_antimeson_g05"]
          and neutral < 1e-9)
    assert report("5b", ok, f"g=3 |drho| pre={pre3:.4f} post={post3:.4f} (floor {floors['meson_antimeson_g3']:.4f},"
                            f" reflection needs post>floor); g=0.5 post={post05:.4f} "
                            f"(floor {floors['meson_antimeson_g05']:.4f}, pass-through needs post<floor)")


def test_criterion_5c_golden_regression(scatter_runs):
    worst = 0.0
    for n in SCATTER:
        rec = scatter_runs[n, preset(n).kind]["exact"]
        rows = np.loadtxt(GOLDEN / f"{n}_exact_charge.csv", delimiter=",", skiprows=1)
        worst = max(worst, np.abs(rows[:, 1:] - rec.charges).max())
    pins = REG["free_subtraction"]
    got = _free_subtracted(scatter_runs, "meson_antimeson_g3", "exact")
    pin_ok = np.allclose(got, (pins["meson_antimeson_g3"]["pre_max"], pins["meson_antimeson_g3"]["post_max"]),
                         atol=1e-9)
    ok = worst < 1e-9 and pin_ok
    assert report("5c", ok, f"exact heatmaps vs golden max diff {worst:.1e} (<1e-9), pinned thresholds match={pin_ok}")


# -- 6 ----------------------------------------------------------------------

LS = range(3, 13)


def _ratio(L):
    mf = step_gate_count(LatticeModel(L, formulation="matterful"))
    io = step_gate_count(LatticeModel(L))
    return mf.get("MS", 0) / io.get("CX", 0)


@pytest.mark.xfail(strict=True, reason="per-step two-body ratio is 24(L-1)/(8(L-3)+4), 4.0 at L=7")
def test_criterion_6a_ratio_at_l7():
    r = _ratio(7)
    assert report("6a", 8 <= r <= 12, f"two-body ratio matterful/integrated-out at L=7 = {r:.2f} (in [8,12])")


@pytest.mark.xfail(strict=True, reason="the ratio decreases towards 3 as L grows")
def test_criterion_6b_ratio_grows():
    rs = [_ratio(L) for L in LS]
    ok = all(b > a for a, b in zip(rs, rs[1:]))
    assert report("6b", ok, "ratios L=3..12 " + " ".join(f"{r:.2f}" for r in rs) + " (increasing)")


def test_criterion_6c_pinned_counts():
    bad = [k for k, v in REG["step_gate_counts"].items()
           if step_gate_count(LatticeModel(int(k.split("/")[1]), formulation=k.split("/")[0])) != v]
    for L in LS:
        mf = step_gate_count(LatticeModel(L, formulation="matterful"))
        io = step_gate_count(LatticeModel(L))
        if mf.get("MS") != 24 * (L - 1) or io.get("CX") != 8 * (L - 3) + 4:
            bad.append(L)
    assert report("6c", not bad, f"per-step counts match pinned values for {len(REG['step_gate_counts'])} "
                                 f"(formulation, L) pairs; mismatches={bad}")


# -- 7 ----------------------------------------------------------------------


def test_criterion_7_noise_sanity():
    p = preset("noise_l7_g3")
    nl = run_experiment(p, "noiseless")
    ex = run_experiment(p, "exact")
    model = p.model()
    _, c0 = prepare_initial(p)
    circ = assemble_trotter(model, p.T, p.N, p.wall_schedule())
    # p = 0: trajectories without post-selection reproduce the noiseless engine bit for bit
    off = run_trajectories(circ, model, c0, NoiseModel.off(), 2, postselect=False, seed=0)
    bitwise = all(np.array_equal(r.charges, nl.charges) for r in off)
    kr_off = run_experiment(p, "noisy", NoiseModel.off(), n_samples=2, mode="kraus")
    kraus_off = float(np.abs(kr_off.charges - nl.charges).max())
    # matched sampling: trajectories (survival weighted) vs Kraus at the final time
    noise = NoiseModel(0.0)
    tr = run_experiment(p, "noisy", noise, n_samples=500, weighting="survival", seed=1)
    kr = run_experiment(p, "noisy", noise, n_samples=500, mode="kraus", seed=2)
    se = np.sqrt(2) * np.maximum(tr.charge_err[-1], 1e-12)
    z = float((np.abs(tr.charges[-1] - kr.charges[-1]) / se).max())
    # alpha = 1 rates: noisy integrated-out vs exact, relative to the noiseless band
    band = float(np.abs(nl.charges - ex.charges).max())
    noisy = run_experiment(p, "noisy", NoiseModel(1.0), n_samples=500, seed=0)
    dev = float(np.abs(noisy.charges - ex.charges).max())
    pinned = dev == pytest.approx(REG["noisy_io_l7_a1_max_dev"], rel=1e-6)
    ok = bitwise and kraus_off < 1e-12 and z < 3 and dev < 2 * band and pinned
    assert report("7", ok, f"p=0 bitwise={bitwise} kraus(p=0)-noiseless={kraus_off:.1e}; "
                           f"traj vs Kraus max z={z:.2f} (<3); alpha=1 dev={dev:.4f} vs 2x band {2 * band:.4f}; "
                           f"pinned={pinned}")


# -- 8 ----------------------------------------------------------------------


def test_criterion_8_norm_jumps():
    p = preset("noise_l7_g3", formulation="matterful")
    model = p.model()
    _, c0 = prepare_initial(p)
    circ = assemble_trotter(model, p.T, p.N, p.wall_schedule())
    res = run_trajectories(circ, model, c0, NoiseModel(0.0), 20, postselect=True, seed=0)
    triggers = sum(r.discarded for r in res)
    smin = min(float(r.survival.min()) for r in res)
    try:
        average_trajectories(res)
        all_lost = False
    except AllTrajectoriesDiscarded:
        all_lost = True
    kr = run_kraus_physical(circ, model, c0, NoiseModel(0.0), 100, seed=0)
    tmin = float(kr.traces.min())
    rho_ok = all(abs(np.trace(r) - 1) < 1e-10 for r in kr.rhos)
    ok = triggers >= 1 and smin < GUARD_ETA and tmin > GUARD_ETA and rho_ok
    assert report("8", ok, f"trajectories: {triggers}/{len(res)} guard triggers, min survival {smin:.1e} "
                           f"(eta {GUARD_ETA:.0e}), all discarded={all_lost}; Kraus min trace {tmin:.3f}, "
                           f"completed={rho_ok}")
