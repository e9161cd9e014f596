"""Single-qubit linear algebra: rotation gates, gate fidelity, Bloch coordinates.

Unitaries are plain ``(2, 2)`` complex128 numpy arrays and qubit states are
length-2 complex128 vectors. Nothing here is quantized.
"""

import numpy as np

HILBERT_DIM = 2

#: Tolerance used when validating user-supplied unitaries/states.
UNITARY_ATOL = 1e-8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)


def _as_matrix(u, name="u"):
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"{name} must be a 2x2 matrix, got shape {u.shape}")
    return u


def unitarity_error(u) -> float:
    """Max-abs entry of ``U^dagger U - I``."""
    u = _as_matrix(u)
    return float(np.max(np.abs(u.conj().T @ u - IDENTITY)))


def is_unitary(u, atol: float = UNITARY_ATOL) -> bool:
    return unitarity_error(u) <= atol


def check_unitary(u, name="u", atol: float = UNITARY_ATOL):
    u = _as_matrix(u, name)
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} has non-finite entries")
    err = unitarity_error(u)
    if err > atol:
        raise ValueError(f"{name} is not unitary (max |U'U - I| = {err:.3e})")
    return u


def rx_gate(beta: float) -> np.ndarray:
    """Rotation about the x axis, ``exp(-i beta sigma_x / 2)``.

    >>> np.allclose(rx_gate(np.pi), [[0, -1j], [-1j, 0]])
    True
    """
    beta = float(beta)
    if not np.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta}")
    c = np.cos(beta / 2)
    s = np.sin(beta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def gate_fidelity(u1, u2, check: bool = True) -> float:
    """Gate fidelity ``(M + |tr(U1^dagger U2)|^2) / (M (M + 1))`` with M = 2.

    The value lies in [1/3, 1] and is insensitive to a global phase on either
    argument. Symmetric in its arguments because ``|tr(A^dagger)| = |tr(A)|``.

    Args:
        u1, u2: 2x2 unitaries.
        check: validate unitarity of both inputs (tolerance 1e-8).

    Raises:
        ValueError: if an input is not a 2x2 unitary.
    """
    if check:
        u1 = check_unitary(u1, "u1")
        u2 = check_unitary(u2, "u2")
    else:
        u1 = np.asarray(u1, dtype=complex)
        u2 = np.asarray(u2, dtype=complex)
    # tr(A^dagger B) in explicit real arithmetic: swapping the arguments only
    # negates the imaginary part, so F(u1, u2) == F(u2, u1) bit-for-bit.
    a_re, a_im, b_re, b_im = u1.real, u1.imag, u2.real, u2.imag
    re = np.sum(a_re * b_re + a_im * b_im)
    im = np.sum(a_re * b_im - a_im * b_re)
    m = HILBERT_DIM
    return float((m + (re * re + im * im)) / (m * (m + 1)))


def trace_overlap(u1, u2) -> complex:
    """``tr(U1^dagger U2)`` without validation."""
    return complex(np.sum(np.conj(u1) * u2))


def normalize_state(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi / np.linalg.norm(psi)


def check_state(psi, name="state", atol: float = UNITARY_ATOL):
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (2,):
        raise ValueError(f"{name} must be a length-2 vector, got shape {psi.shape}")
    norm2 = float(np.vdot(psi, psi).real)
    if not np.isfinite(norm2) or abs(norm2 - 1.0) > atol:
        raise ValueError(f"{name} is not normalized (|psi|^2 = {norm2!r})")
    return psi


def bloch_coords(psi) -> tuple[float, float, float]:
    """Bloch vector ``(2 Re(x* y), 2 Im(x* y), |x|^2 - |y|^2)`` of ``x|0> + y|1>``."""
    x, y = check_state(psi)
    xy = np.conj(x) * y
    return (float(2 * xy.real), float(2 * xy.imag), float(abs(x) ** 2 - abs(y) ** 2))


def bloch_coords_many(states) -> np.ndarray:
    """Vectorized :func:`bloch_coords` for an ``(n, 2)`` array; no validation."""
    states = np.asarray(states, dtype=complex)
    x, y = states[:, 0], states[:, 1]
    xy = np.conj(x) * y
    return np.column_stack([2 * xy.real, 2 * xy.imag, np.abs(x) ** 2 - np.abs(y) ** 2])


def random_unitary(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2x2 unitary (QR of a complex Ginibre matrix)."""
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
