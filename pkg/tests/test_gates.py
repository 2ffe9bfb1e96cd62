import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from qudit_qlm.errors import InvalidGate
from qudit_qlm.gates import (PAULI, GateOp, crot, cx, dumps_gates, embed_pauli, hadamard, is_unitary,
                             loads_gates, matrix_of, ms, perm_plus, rx, ry, rz, rzz, vrz)

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def ket(d, k):
    v = np.zeros(d, dtype=complex)
    v[k] = 1
    return v


def test_cx_action():
    U = matrix_of(cx(0, 1, (3, 4), 1, 0, 2))
    for j in range(3):
        for k in range(4):
            out = U @ np.kron(ket(3, j), ket(4, k))
            kk = {0: 2, 2: 0}.get(k, k) if j == 1 else k
            assert np.allclose(out, np.kron(ket(3, j), ket(4, kk)))


@pytest.mark.parametrize("dims,levels", [((2, 2), (1, 0, 1)), ((3, 4), (2, 1, 3)), ((4, 3), (0, 0, 2))])
def test_cx_involution(dims, levels):
    U = matrix_of(cx(0, 1, dims, *levels))
    assert np.allclose(U @ U, np.eye(U.shape[0]))


@given(phi=angles, a=st.integers(0, 3))
def test_vrz(phi, a):
    U = matrix_of(vrz(0, 4, a, phi))
    for b in range(4):
        expect = np.exp(-1j * phi) if b == a else 1.0
        assert np.allclose(U @ ket(4, b), expect * ket(4, b))


@pytest.mark.parametrize("g", [rx(0, 3, 0, 1, 0.0), ry(0, 4, 1, 3, 0.0), rz(0, 2, 0, 1, 0.0), vrz(0, 3, 2, 0.0),
                               ms(0, 1, (3, 2), 0.0, "zy"), rzz(0, 1, (4, 2), 0.0),
                               crot(0, 1, (2, 3), 1, 0, 2, 0.0, 0.3)])
def test_zero_angle_identity(g):
    assert np.allclose(matrix_of(g), np.eye(g.size), atol=1e-14)


def test_perm_plus_oracle():
    def ry2(a, b):
        c = math.cos(math.pi / 2)
        s = math.sin(math.pi / 2)
        m = np.eye(3, dtype=complex)
        m[a, a] = m[b, b] = c
        m[a, b], m[b, a] = -s, s
        return m
    oracle = ry2(0, 1) @ ry2(1, 2)
    U = matrix_of(perm_plus(0))
    assert np.allclose(U, oracle)
    for k in range(3):
        out = U @ ket(3, k)
        assert abs(abs(out[(k + 1) % 3]) - 1) < 1e-12


@given(theta=angles, a=st.integers(0, 2), b=st.integers(0, 2), mu=st.sampled_from("xyz"))
def test_rotations_match_expm(theta, a, b, mu):
    if a == b:
        return
    g = {"x": rx, "y": ry, "z": rz}[mu](0, 3, a, b, theta)
    assert np.allclose(matrix_of(g), expm(-0.5j * theta * embed_pauli(mu, 3, a, b)), atol=1e-12)



def test_hadamard_two_level():
    H = matrix_of(hadamard(0, 3, 0, 2))
    assert np.allclose(H @ H, np.eye(3))
    assert np.allclose(H @ ket(3, 1), ket(3, 1))
    assert np.allclose(H @ ket(3, 0), (ket(3, 0) + ket(3, 2)) / math.sqrt(2))


@given(alpha=angles, axes=st.sampled_from(["xx", "xy", "zx", "yz", "zz"]), d=st.sampled_from([2, 3, 4]))
def test_ms_matches_expm(alpha, axes, d):
    gen = np.kron(embed_pauli(axes[0], d), np.eye(2)) + np.kron(np.eye(d), PAULI[axes[1]])
    assert np.allclose(matrix_of(ms(0, 1, (d, 2), alpha, axes)), expm(0.25j * alpha * gen @ gen), atol=1e-12)


@given(alpha=angles)
def test_rzz_matches_expm(alpha):
    gen = np.kron(embed_pauli("z", 3), PAULI["z"])
    assert np.allclose(matrix_of(rzz(0, 1, (3, 2), alpha)), expm(0.5j * alpha * gen), atol=1e-12)


@given(alpha=angles)
def test_ms_basis_change(alpha):
    # gate-application order: the first rotation acts first
    M = matrix_of(ms(0, 1, (3, 2), alpha, "xx"))
    I2 = np.eye(2)
    ry_p = np.kron(matrix_of(ry(0, 3, 0, 1, math.pi / 2)), I2)
    ry_m = np.kron(matrix_of(ry(0, 3, 0, 1, -math.pi / 2)), I2)
    rz_p = np.kron(matrix_of(rz(0, 3, 0, 1, math.pi / 2)), I2)
    rz_m = np.kron(matrix_of(rz(0, 3, 0, 1, -math.pi / 2)), I2)
    assert np.allclose(matrix_of(ms(0, 1, (3, 2), alpha, "zx")), ry_m @ M @ ry_p, atol=1e-12)
    assert np.allclose(matrix_of(ms(0, 1, (3, 2), alpha, "yx")), rz_p @ M @ rz_m, atol=1e-12)


def test_is_unitary(rng):
    assert is_unitary(ms(0, 1, (3, 2), 0.7, "xx"))
    for _ in range(5):
        th, ph = rng.uniform(-7, 7, 2)
        assert is_unitary(crot(0, 1, (3, 4), 2, 1, 3, th, ph))
    bad = matrix_of(ms(0, 1, (3, 2), 0.7, "xx")).copy()
    bad[0, 0] += 1e-6
    assert not is_unitary(bad)


def test_crot_spectators():
    U = matrix_of(crot(0, 1, (2, 3), 1, 0, 2, 0.9, 0.4))
    for j, k in [(0, 0), (0, 1), (0, 2), (1, 1)]:
        assert np.allclose(U @ np.kron(ket(2, j), ket(3, k)), np.kron(ket(2, j), ket(3, k)))


@pytest.mark.parametrize("kwargs", [
    dict(kind="RX", targets=(0,), dims=(3,), params=(0.1,), levels=(0, 3)),
    dict(kind="RX", targets=(0,), dims=(3,), params=(0.1,), levels=(1, 1)),
    dict(kind="CX", targets=(0, 1), dims=(2, 3), levels=(2, 0, 1)),
    dict(kind="CX", targets=(0, 0), dims=(2, 3), levels=(1, 0, 1)),
    dict(kind="MS", targets=(0, 1), dims=(3, 3), params=(0.1,), axes="xx"),
    dict(kind="MS", targets=(0, 1), dims=(3, 2), params=(0.1,), axes="xw"),
    dict(kind="VRZ", targets=(0,), dims=(3,), params=(0.1,), levels=(0,), noise_class="one_body"),
    dict(kind="SWAP", targets=(0, 1), dims=(2, 2)),
])
def test_invalid_gates(kwargs):
    with pytest.raises(InvalidGate):
        GateOp(**kwargs)


def test_noise_classes():
    assert vrz(0, 3, 0, 1.0).noise_class == "virtual"
    assert cx(0, 1, (2, 2), 1, 0, 1).noise_class == "CX"
    assert ms(0, 1, (3, 2), 1.0).noise_class == "MS"
    assert rx(0, 3, 0, 1, 1.0).noise_class == "one_body"


def test_serialization_roundtrip():
    gates = [rx(0, 3, 0, 1, 0.1234567890123), cx(1, 2, (4, 4), 1, 0, 1), ms(0, 1, (3, 2), -2.5, "zy"),
             vrz(3, 4, 2, 1e-9), crot(0, 1, (2, 3), 1, 0, 2, 0.3, -0.7)]
    back = loads_gates(dumps_gates(gates))
    assert back == gates
