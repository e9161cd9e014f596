import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsenet.quantum import (
    KET0,
    bloch_coords,
    check_unitary,
    gate_fidelity,
    random_unitary,
    rx_gate,
    unitarity_error,
)

angles = st.floats(-10, 10, allow_nan=False)


def test_rx_identity():
    np.testing.assert_array_equal(rx_gate(0.0), np.eye(2))


def test_rx_pi():
    np.testing.assert_allclose(rx_gate(np.pi), [[0, -1j], [-1j, 0]], atol=1e-15)


def test_rx_half_pi():
    np.testing.assert_allclose(rx_gate(np.pi / 2), np.array([[1, -1j], [-1j, 1]]) / np.sqrt(2), atol=1e-15)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_rx_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        rx_gate(bad)


@given(angles)
def test_rx_is_unitary(beta):
    u = rx_gate(beta)
    assert unitarity_error(u) <= 1e-10
    assert abs(abs(np.linalg.det(u)) - 1) <= 1e-10


@given(angles, angles)
def test_rx_group_property(a, b):
    np.testing.assert_allclose(rx_gate(a) @ rx_gate(b), rx_gate(a + b), atol=1e-12)


def test_fidelity_examples(rng):
    u = random_unitary(rng)
    assert gate_fidelity(u, u) == pytest.approx(1.0, abs=1e-15)
    assert gate_fidelity(np.eye(2), rx_gate(np.pi)) == pytest.approx(1 / 3, abs=1e-15)
    assert gate_fidelity(u, np.exp(0.7j) * u) == pytest.approx(1.0, abs=1e-15)


def test_fidelity_rejects_non_unitary():
    with pytest.raises(ValueError):
        gate_fidelity(np.eye(2), [[1, 0], [0, 1.01]])
    with pytest.raises(ValueError):
        gate_fidelity(np.eye(3), np.eye(3))
    # inside the 1e-8 validation tolerance
    gate_fidelity(np.eye(2), np.diag([1, 1 + 1e-9]))


def test_fidelity_properties(rng):
    for _ in range(200):
        u1, u2, v = (random_unitary(rng) for _ in range(3))
        phi = rng.uniform(0, 2 * np.pi)
        f = gate_fidelity(u1, u2)
        assert f == gate_fidelity(u2, u1)
        assert abs(gate_fidelity(u1, np.exp(1j * phi) * u2) - f) <= 1e-12
        assert abs(gate_fidelity(v @ u1, v @ u2) - f) <= 1e-12


def test_fidelity_range(rng):
    fs = [gate_fidelity(random_unitary(rng), random_unitary(rng)) for _ in range(1000)]
    assert min(fs) >= 1 / 3 - 1e-15
    assert max(fs) <= 1 + 1e-15


def test_fidelity_matches_rotation_angle_formula():
    # Rx(a)^dag Rx(b) = Rx(b - a), trace 2 cos((b - a)/2)
    for a, b in [(0.3, -1.2), (2.0, 2.5), (-3.0, 3.0)]:
        expected = (2 + 4 * np.cos((b - a) / 2) ** 2) / 6
        assert gate_fidelity(rx_gate(a), rx_gate(b)) == pytest.approx(expected, abs=1e-14)


def test_bloch_examples():
    np.testing.assert_allclose(bloch_coords(KET0), (0, 0, 1))
    np.testing.assert_allclose(bloch_coords(np.array([1, 1]) / np.sqrt(2)), (1, 0, 0), atol=1e-15)
    # Rx(pi/2)|0> = (|0> - i|1>)/sqrt(2): x* y = -i/2 -> (0, -1, 0)
    np.testing.assert_allclose(bloch_coords(rx_gate(np.pi / 2) @ KET0), (0, -1, 0), atol=1e-15)


def test_bloch_rejects_unnormalized():
    with pytest.raises(ValueError):
        bloch_coords(np.array([1, 1]))


@settings(max_examples=50)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_bloch_unit_length(theta, phi):
    psi = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    x, y, z = bloch_coords(psi)
    assert abs(x * x + y * y + z * z - 1) <= 1e-9
    np.testing.assert_allclose((x, y, z), (np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)),
                               atol=1e-12)


def test_check_unitary_passthrough(rng):
    u = random_unitary(rng)
    np.testing.assert_array_equal(check_unitary(u), u)
