"""Independent reference computations shared by the test modules."""

import numpy as np

from pulsenet.mlp import unpack

LD = np.longdouble
EXTENDED = np.finfo(LD).eps < np.finfo(float).eps


def mlp_loss_extended(theta, x, y, spec):
    """Plain-loop MLP loss in extended precision (float MLPs only)."""
    ws, bs = unpack(np.asarray(theta, dtype=LD), spec)
    h = np.asarray(x, dtype=LD)
    for w, b, act in zip(ws, bs, spec.activations):
        z = h @ w + b
        h = np.maximum(z, 0) if act == "relu" else z
    return np.mean((h - np.asarray(y, dtype=LD)) ** 2)


def mlp_fd_gradient(theta, x, y, spec, h=1e-6):
    """Central differences of the loss.

    The loss is quadratic in any single parameter away from ReLU kinks, so
    the difference quotient has no truncation error; computing it in
    extended precision removes most of the cancellation error as well.
    """
    theta = np.asarray(theta, dtype=LD)
    step = LD(h)
    out = np.empty(theta.size)
    for i in range(theta.size):
        e = np.zeros(theta.size, dtype=LD)
        e[i] = step
        out[i] = float((mlp_loss_extended(theta + e, x, y, spec) - mlp_loss_extended(theta - e, x, y, spec)) / (2 * step))
    return out


def max_relative_error(g, ref):
    """Componentwise relative error; exact zeros in ``ref`` must be zero in ``g``."""
    g, ref = np.asarray(g), np.asarray(ref)
    nz = ref != 0
    if np.any(g[~nz] != 0):
        return np.inf
    return float(np.max(np.abs(g[nz] - ref[nz]) / np.abs(ref[nz]))) if nz.any() else 0.0


def quantization_error_bound(model, layer_formats, input_format, betas):
    """Worst-case per-component |quantized - float| output error, in alpha units.

    Propagates interval-style bounds through the float network: each layer
    adds weight/bias rounding (half an ulp times the input magnitude),
    requantization rounding (half an ulp) and any saturation excess of the
    float activation. ReLU is 1-Lipschitz so it does not amplify the bound.
    """
    spec = model.spec
    x = np.asarray(betas, dtype=float).reshape(-1, 1) / spec.beta_scale
    h = x
    e = np.full_like(x, 2.0 ** -(input_format.frac_bits + 1))
    e = e + np.maximum(0, np.maximum(x - input_format.max_value, input_format.min_value - x))
    for w, b, fmts, act in zip(model.weights, model.biases, layer_formats, spec.activations):
        dw = 2.0 ** -(fmts.weight.frac_bits + 1)
        sat_w = np.maximum(0, np.abs(w) - fmts.weight.max_value).max(initial=0)
        sat_b = np.maximum(0, np.abs(b) - fmts.weight.max_value).max(initial=0)
        z = h @ w + b
        ez = e @ np.abs(w) + (dw + sat_w) * (np.abs(h) + e).sum(axis=1, keepdims=True) + dw + sat_b
        a = np.maximum(z, 0) if act == "relu" else z
        af = fmts.activation
        excess = np.maximum(0, np.maximum(a - af.max_value, af.min_value - a))
        e = ez + excess + 2.0 ** -(af.frac_bits + 1)
        h = a
    return e * model.alpha_scale
