"""B-spline control pulses and the piecewise-exact two-level propagator.

A pulse is a length ``2 * D`` vector ``alpha = [p_0..p_{D-1}, q_0..q_{D-1}]`` of
quadratic B-spline coefficients (rad/ns) for the in-phase (``sigma_x``) and
quadrature (``sigma_y``) controls. In the rotating frame of a single resonant
carrier the Hamiltonian is

    H(t) = (p(t) sigma_x + q(t) sigma_y) / 2

so a constant ``p`` held for the whole duration ``T`` produces ``Rx(p T)``.

The propagator samples ``H`` at the midpoint of ``N`` uniform steps and uses
the exact 2x2 exponential for each step, which keeps every step unitary and
makes the scheme second-order accurate in ``dt``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quantum import IDENTITY, check_state, check_unitary

SPLINE_DEGREE = 2


@dataclass(frozen=True)
class PulseConfig:
    """Pulse discretization.

    Attributes:
        duration: pulse length T in ns.
        spline_count: number of B-spline basis functions D per quadrature.
        carrier_count: number of carrier frequencies (only 1 is supported).
        time_steps: number of propagator steps N.
    """

    duration: float = 100.0
    spline_count: int = 10
    carrier_count: int = 1
    time_steps: int = 1000

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.spline_count < SPLINE_DEGREE + 1:
            raise ValueError(f"spline_count must be >= {SPLINE_DEGREE + 1}")
        if self.carrier_count != 1:
            raise ValueError("only carrier_count = 1 is supported")
        if self.time_steps < 10:
            raise ValueError("time_steps must be >= 10")

    @property
    def n_params(self) -> int:
        return 2 * self.spline_count * self.carrier_count

    @property
    def dt(self) -> float:
        return self.duration / self.time_steps

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "spline_count": self.spline_count,
            "carrier_count": self.carrier_count,
            "time_steps": self.time_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulseConfig":
        return cls(**{k: d[k] for k in ("duration", "spline_count", "carrier_count", "time_steps") if k in d})


DEFAULT_CONFIG = PulseConfig()


# --------------------------------------------------------------------------
# B-splines
# --------------------------------------------------------------------------


def knot_vector(cfg: PulseConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Clamped uniform knots over [0, T]: ``degree + 1`` copies at each end."""
    n_inner = cfg.spline_count - SPLINE_DEGREE - 1
    breaks = np.linspace(0.0, cfg.duration, n_inner + 2)
    return np.concatenate(
        [np.zeros(SPLINE_DEGREE), breaks, np.full(SPLINE_DEGREE, cfg.duration)]
    )


def basis_matrix(t, cfg: PulseConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Evaluate all D basis functions at times ``t``; returns shape ``(len(t), D)``.

    Vectorized Cox-de Boor recursion with the convention 0/0 = 0. The last
    non-degenerate knot span is closed on the right so ``t = T`` is covered.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > cfg.duration):
        raise ValueError(f"times must lie in [0, {cfg.duration}]")
    knots = knot_vector(cfg)
    n_spans = len(knots) - 1

    b = np.zeros((t.size, n_spans))
    for i in range(n_spans):
        lo, hi = knots[i], knots[i + 1]
        if hi > lo:
            b[:, i] = (t >= lo) & (t < hi)
    # right endpoint belongs to the last non-empty span
    last = max(i for i in range(n_spans) if knots[i + 1] > knots[i])
    b[t == cfg.duration, last] = 1.0

    for k in range(1, SPLINE_DEGREE + 1):
        nxt = np.zeros((t.size, n_spans - k))
        for i in range(n_spans - k):
            d1 = knots[i + k] - knots[i]
            d2 = knots[i + k + 1] - knots[i + 1]
            if d1 > 0:
                nxt[:, i] += (t - knots[i]) / d1 * b[:, i]
            if d2 > 0:
                nxt[:, i] += (knots[i + k + 1] - t) / d2 * b[:, i + 1]
        b = nxt
    return b


def bspline_basis(d: int, t: float, cfg: PulseConfig = DEFAULT_CONFIG) -> float:
    """Value of the ``d``-th quadratic B-spline at time ``t`` (ns)."""
    if not 0 <= d < cfg.spline_count:
        raise ValueError(f"basis index {d} out of range [0, {cfg.spline_count})")
    return float(basis_matrix([t], cfg)[0, d])


@lru_cache(maxsize=32)
def midpoint_basis(cfg: PulseConfig) -> np.ndarray:
    """Basis values at the step midpoints, shape ``(N, D)``; read-only and cached."""
    t_mid = (np.arange(cfg.time_steps) + 0.5) * cfg.dt
    b = basis_matrix(t_mid, cfg)
    b.setflags(write=False)
    return b


def check_params(alpha, cfg: PulseConfig = DEFAULT_CONFIG) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (cfg.n_params,):
        raise ValueError(f"alpha must have shape ({cfg.n_params},), got {alpha.shape}")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("alpha has non-finite entries")
    return alpha


def split_params(alpha, cfg: PulseConfig = DEFAULT_CONFIG):
    """Return the ``(p_coeffs, q_coeffs)`` halves of alpha."""
    alpha = check_params(alpha, cfg)
    return alpha[: cfg.spline_count], alpha[cfg.spline_count :]


def envelope(alpha, t, cfg: PulseConfig = DEFAULT_CONFIG):
    """Control amplitudes ``(p(t), q(t))`` in rad/ns.

    Scalar ``t`` gives a pair of floats; array ``t`` gives a pair of arrays.
    """
    p_c, q_c = split_params(alpha, cfg)
    scalar = np.ndim(t) == 0
    b = basis_matrix(t, cfg)
    p, q = b @ p_c, b @ q_c
    if scalar:
        return float(p[0]), float(q[0])
    return p, q


def constant_pulse(beta: float, cfg: PulseConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Pulse with constant ``p = beta / T`` and ``q = 0``; propagates exactly to ``Rx(beta)``."""
    alpha = np.zeros(cfg.n_params)
    alpha[: cfg.spline_count] = beta / cfg.duration
    return alpha


# --------------------------------------------------------------------------
# Propagation
# --------------------------------------------------------------------------


def _sinc_terms(theta):
    """``f = sin(th)/th`` and ``g = f'(th)/th`` with series near zero."""
    f = np.empty_like(theta)
    g = np.empty_like(theta)
    small = theta < 0.1
    ts = theta[small] ** 2
    f[small] = 1 - ts / 6 * (1 - ts / 20 * (1 - ts / 42 * (1 - ts / 72)))
    g[small] = -1 / 3 + ts * (1 / 30 + ts * (-1 / 840 + ts * (1 / 45360 - ts / 3991680)))
    tb = theta[~small]
    sb, cb = np.sin(tb), np.cos(tb)
    f[~small] = sb / tb
    g[~small] = (tb * cb - sb) / tb ** 3
    return f, g


def _steps(alpha, cfg: PulseConfig, with_derivs: bool = False):
    """Per-step unitaries ``exp(-i H(t_mid) dt)``, shape ``(N, 2, 2)``.

    With ``with_derivs`` also returns derivatives of each step with respect
    to that step's ``p`` and ``q`` sample.
    """
    p_c, q_c = split_params(alpha, cfg)
    b = midpoint_basis(cfg)
    half_dt = 0.5 * cfg.dt
    phx = half_dt * (b @ p_c)
    phy = half_dt * (b @ q_c)
    theta = np.hypot(phx, phy)
    f, g = _sinc_terms(theta)
    c = np.cos(theta)
    a = f * phx
    bb = f * phy

    u = np.empty((cfg.time_steps, 2, 2), dtype=complex)
    u[:, 0, 0] = c
    u[:, 1, 1] = c
    u[:, 0, 1] = -bb - 1j * a
    u[:, 1, 0] = bb - 1j * a
    if not with_derivs:
        return u

    def d_step(dc, da, db):
        du = np.empty_like(u)
        du[:, 0, 0] = dc
        du[:, 1, 1] = dc
        du[:, 0, 1] = -db - 1j * da
        du[:, 1, 0] = db - 1j * da
        return du * half_dt

    gxy = g * phx * phy
    du_dp = d_step(-f * phx, f + g * phx ** 2, gxy)
    du_dq = d_step(-f * phy, gxy, f + g * phy ** 2)
    return u, du_dp, du_dq


def _ordered_product(u: np.ndarray) -> np.ndarray:
    """Time-ordered product ``u[-1] @ ... @ u[0]`` by pairwise reduction."""
    while len(u) > 1:
        if len(u) % 2:
            tail = u[-1:]
            u = u[:-1]
        else:
            tail = None
        u = np.matmul(u[1::2], u[0::2])
        if tail is not None:
            u = np.concatenate([u, tail])
    return u[0]


def _prefix_products(u: np.ndarray) -> np.ndarray:
    """``out[j] = u[j] @ ... @ u[0]`` via a log-depth scan."""
    out = u.copy()
    off = 1
    n = len(u)
    while off < n:
        out[off:] = np.matmul(out[off:], out[: n - off])
        off *= 2
    return out


def _suffix_products(u: np.ndarray) -> np.ndarray:
    """``out[j] = u[-1] @ ... @ u[j]`` via a log-depth scan."""
    out = u.copy()
    off = 1
    n = len(u)
    while off < n:
        out[: n - off] = np.matmul(out[off:], out[: n - off])
        off *= 2
    return out


def propagate(alpha, cfg: PulseConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Unitary produced by pulse ``alpha`` over the full duration."""
    return _ordered_product(_steps(alpha, cfg))


def propagate_trajectory(alpha, cfg: PulseConfig = DEFAULT_CONFIG, s0=None, samples: int = 101):
    """Sample the state at ``samples`` uniformly spaced times in [0, T].

    Sample times that fall inside a propagator step are reached by evolving
    with that step's (constant) midpoint Hamiltonian for the partial duration,
    so the final sample agrees with :func:`propagate` applied to ``s0``.

    Returns:
        ``(times, states)`` with ``states`` of shape ``(samples, 2)``.
    """
    if s0 is None:
        s0 = np.array([1, 0], dtype=complex)
    s0 = check_state(s0, "s0")
    if samples < 2:
        raise ValueError("samples must be >= 2")
    alpha = check_params(alpha, cfg)

    u = _steps(alpha, cfg)
    prefix = _prefix_products(u)
    times = np.linspace(0.0, cfg.duration, samples)
    states = np.empty((samples, 2), dtype=complex)

    p_c, q_c = split_params(alpha, cfg)
    b = midpoint_basis(cfg)
    for s, t in enumerate(times):
        pos = t / cfg.dt
        j = min(int(np.floor(pos)), cfg.time_steps)
        frac = pos - j
        full = IDENTITY if j == 0 else prefix[j - 1]
        psi = full @ s0
        if j < cfg.time_steps and frac > 1e-12:
            psi = _partial_step(b[j] @ p_c, b[j] @ q_c, frac * cfg.dt) @ psi
        states[s] = psi
    return times, states


def _partial_step(p: float, q: float, tau: float) -> np.ndarray:
    phx = np.array([0.5 * tau * p])
    phy = np.array([0.5 * tau * q])
    theta = np.hypot(phx, phy)
    f, _ = _sinc_terms(theta)
    c = np.cos(theta)[0]
    a = (f * phx)[0]
    bb = (f * phy)[0]
    return np.array([[c, -bb - 1j * a], [bb - 1j * a, c]])


# --------------------------------------------------------------------------
# Fidelity and its gradient
# --------------------------------------------------------------------------


def pulse_fidelity(alpha, target, cfg: PulseConfig = DEFAULT_CONFIG) -> float:
    """Gate fidelity between ``target`` and the unitary realized by ``alpha``."""
    target = check_unitary(target, "target")
    u = propagate(alpha, cfg)
    z = np.sum(target.conj() * u)
    return float((2 + abs(z) ** 2) / 6)


def fidelity_and_gradient(alpha, target, cfg: PulseConfig = DEFAULT_CONFIG):
    """Fidelity and its exact gradient with respect to ``alpha``.

    The gradient is exact for the discretized propagator: each step's
    closed-form exponential is differentiated analytically and combined with
    prefix/suffix products of the remaining steps.

    Returns:
        ``(F, dF/dalpha)`` with the gradient as a length ``2 D`` array.
    """
    target = check_unitary(target, "target")
    u, du_dp, du_dq = _steps(alpha, cfg, with_derivs=True)
    prefix = _prefix_products(u)
    suffix = _suffix_products(u)
    total = prefix[-1]
    z = np.sum(target.conj() * total)

    left = np.empty_like(u)   # steps after j
    right = np.empty_like(u)  # steps before j
    left[:-1] = suffix[1:]
    left[-1] = IDENTITY
    right[1:] = prefix[:-1]
    right[0] = IDENTITY
    # d tr(T^dag U) = tr(R_j T^dag L_j dU_j)
    env = np.matmul(np.matmul(right, target.conj().T), left)
    dz_dp = np.einsum("nij,nji->n", env, du_dp)
    dz_dq = np.einsum("nij,nji->n", env, du_dq)
    b = midpoint_basis(cfg)
    dz = np.concatenate([b.T @ dz_dp, b.T @ dz_dq])
    grad = 2 * (np.conj(z) * dz).real / 6
    return float((2 + abs(z) ** 2) / 6), grad


def fidelity_gradient(alpha, target, cfg: PulseConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``dF/dalpha`` for ``F = gate_fidelity(target, propagate(alpha))``."""
    return fidelity_and_gradient(alpha, target, cfg)[1]
