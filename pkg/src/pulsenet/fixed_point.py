"""Fixed-point formats, bit-exact quantized MLP inference and a resource model.

Format convention: ``FxFormat(int_bits=I, frac_bits=F)`` is a two's-complement
word of ``W = 1 + I + F`` bits; ``I`` excludes the sign bit. Values are
rounded half-to-even and saturate at ``[-2**I, 2**I - 2**-F]``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: Multipliers whose operands are all this wide or narrower map to LUTs.
LUT_MULTIPLIER_MAX_BITS = 12


@dataclass(frozen=True)
class FxFormat:
    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.int_bits < 0 or self.frac_bits < 0:
            raise ValueError("int_bits and frac_bits must be non-negative")
        if self.width < 2:
            raise ValueError("word width must be at least 2 bits")

    @classmethod
    def from_width(cls, width: int, int_bits: int) -> "FxFormat":
        """Format with total word width ``width`` (sign included) and ``int_bits`` integer bits."""
        return cls(int_bits, width - 1 - int_bits)

    @property
    def width(self) -> int:
        return 1 + self.int_bits + self.frac_bits

    @property
    def code_min(self) -> int:
        return -(1 << (self.int_bits + self.frac_bits))

    @property
    def code_max(self) -> int:
        return (1 << (self.int_bits + self.frac_bits)) - 1

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def min_value(self) -> float:
        return self.code_min * self.resolution

    @property
    def max_value(self) -> float:
        return self.code_max * self.resolution

    def to_dict(self) -> dict:
        return {"W": self.width, "I": self.int_bits}

    @classmethod
    def from_dict(cls, d: dict) -> "FxFormat":
        return cls.from_width(int(d["W"]), int(d["I"]))

    def __str__(self):
        return f"<{self.width},{self.int_bits}>"


def quantize_real(x, fmt: FxFormat):
    """Integer code(s) for ``x``: ``clamp(round_half_even(x * 2**F), code_min, code_max)``.

    Scalars return a Python ``int``; arrays return an int64 array (or an
    object array of Python ints when the format is wider than 62 bits).
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite values")
    # scaling by a power of two is exact, and rint rounds half to even
    scaled = np.rint(np.ldexp(arr, fmt.frac_bits))
    scaled = np.clip(scaled, fmt.code_min, fmt.code_max)
    if arr.ndim == 0:
        return int(scaled)
    if fmt.width <= 62:
        return scaled.astype(np.int64)
    return np.array([int(v) for v in scaled.ravel()], dtype=object).reshape(scaled.shape)


def decode(code, fmt: FxFormat):
    """Real value of integer code(s)."""
    if isinstance(code, (int, np.integer)):
        return float(np.ldexp(float(code), -fmt.frac_bits))
    return np.ldexp(np.asarray(code, dtype=float), -fmt.frac_bits)


def fake_quantize(x, fmt: FxFormat) -> np.ndarray:
    """Quantize-then-decode in floating point, as used during training."""
    scaled = np.rint(np.ldexp(np.asarray(x, dtype=float), fmt.frac_bits))
    return np.ldexp(np.clip(scaled, fmt.code_min, fmt.code_max), -fmt.frac_bits)


def in_range(x, fmt: FxFormat) -> np.ndarray:
    """Mask of values that do not saturate; the straight-through gradient is zero elsewhere."""
    x = np.asarray(x, dtype=float)
    half = 0.5 * fmt.resolution
    return (x >= fmt.min_value - half) & (x <= fmt.max_value + half)


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerFormats:
    """Weight (and bias) format plus the format each layer's output is requantized to."""

    weight: FxFormat
    activation: FxFormat


def _uniform(width, int_bits):
    f = FxFormat.from_width(width, int_bits)
    return LayerFormats(f, f)


PRESETS = ("genesys16", "ultra96", "arty-mixed")


def preset_formats(name: str, n_layers: int):
    """Per-layer formats and the input format for a named board preset.

    ``n_layers`` counts dense layers including the output layer.

    * ``genesys16``: every layer 16 bits, 6 integer bits.
    * ``ultra96``: 2 integer bits; 11-bit words on the first and output
      layers, 10-bit words elsewhere.
    * ``arty-mixed``: 14, 12, 12 bits on the first three layers, 16 on the
      output layer, 10 on the rest; 2 integer bits except 0 on the output.

    The input format matches the first layer's format.

    Returns:
        ``(input_format, [LayerFormats, ...])``
    """
    if n_layers < 1:
        raise ValueError("model must have at least one layer")
    if name == "genesys16":
        layers = [_uniform(16, 6) for _ in range(n_layers)]
    elif name == "ultra96":
        layers = [_uniform(11 if i in (0, n_layers - 1) else 10, 2) for i in range(n_layers)]
    elif name == "arty-mixed":
        if n_layers < 4:
            raise ValueError(f"arty-mixed needs at least 4 layers, model has {n_layers}")
        widths = [14, 12, 12] + [10] * (n_layers - 4) + [16]
        layers = [_uniform(w, 2) for w in widths[:-1]] + [_uniform(16, 0)]
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    return layers[0].activation, layers


# --------------------------------------------------------------------------
# Quantized model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantizedLayer:
    weight_codes: np.ndarray  # (fan_in, fan_out) integer codes
    bias_codes: np.ndarray    # (fan_out,) integer codes, weight format
    formats: LayerFormats
    activation: str           # "relu" or "linear"

    @property
    def fan_in(self) -> int:
        return self.weight_codes.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight_codes.shape[1]


@dataclass(frozen=True)
class QuantizedModel:
    """Integer-only MLP.

    ``predict`` quantizes ``beta / beta_scale`` to ``input_format``, then per
    layer forms an exact integer dot product, adds the bias shifted to the
    accumulator scale, applies the activation and requantizes to the layer's
    activation format. Only the final decode and ``alpha_scale`` multiply
    touch floating point.
    """

    layers: tuple
    input_format: FxFormat
    alpha_scale: float
    beta_scale: float = float(np.pi)

    @property
    def output_format(self) -> FxFormat:
        return self.layers[-1].formats.activation

    def input_codes(self, betas) -> np.ndarray:
        betas = np.atleast_1d(np.asarray(betas, dtype=float))
        _check_betas(betas)
        return quantize_real(betas / self.beta_scale, self.input_format).reshape(-1, 1)

    def infer_codes(self, betas) -> np.ndarray:
        """Output integer codes, shape ``(n, 20)``."""
        h = self.input_codes(betas)
        h_fmt = self.input_format
        for layer in self.layers:
            h = _layer_codes(h, h_fmt, layer)
            h_fmt = layer.formats.activation
        return h

    def predict(self, betas) -> np.ndarray:
        codes = self.infer_codes(betas)
        return decode(codes, self.output_format) * self.alpha_scale

    def __call__(self, beta):
        return self.predict([beta])[0]

    def accumulator_bits(self) -> int:
        """Bits needed by the widest exact accumulator (sign included)."""
        worst = 0
        h_fmt = self.input_format
        for layer in self.layers:
            wf = layer.formats.weight
            prod = (wf.width - 1) + (h_fmt.width - 1)
            worst = max(worst, prod + int(np.ceil(np.log2(layer.fan_in + 1))) + 1 + 1)
            h_fmt = layer.formats.activation
        return worst

    def to_dict(self) -> dict:
        return {
            "input_format": self.input_format.to_dict(),
            "output_format": self.output_format.to_dict(),
            "alpha_scale": self.alpha_scale,
            "beta_scale": self.beta_scale,
            "layers": [
                {
                    "weight_format": lay.formats.weight.to_dict(),
                    "activation_format": lay.formats.activation.to_dict(),
                    "W": lay.formats.weight.width,
                    "I": lay.formats.weight.int_bits,
                    "activation": lay.activation,
                    "weight_codes": np.asarray(lay.weight_codes).tolist(),
                    "bias_codes": np.asarray(lay.bias_codes).tolist(),
                }
                for lay in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantizedModel":
        layers = []
        for ld in d["layers"]:
            fmts = LayerFormats(FxFormat.from_dict(ld["weight_format"]), FxFormat.from_dict(ld["activation_format"]))
            layers.append(QuantizedLayer(_codes_array(ld["weight_codes"], fmts.weight),
                                         _codes_array(ld["bias_codes"], fmts.weight),
                                         fmts, ld["activation"]))
        return cls(tuple(layers), FxFormat.from_dict(d["input_format"]), float(d["alpha_scale"]),
                   float(d.get("beta_scale", np.pi)))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "QuantizedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _codes_array(values, fmt: FxFormat):
    dtype = np.int64 if fmt.width <= 62 else object
    return np.array(values, dtype=dtype)


def _check_betas(betas):
    if not np.all(np.isfinite(betas)) or np.any(np.abs(betas) > np.pi + 1e-12):
        raise ValueError("beta must lie in [-pi, pi]")


def _round_shift(acc, shift: int):
    """``round_half_even(acc / 2**shift)`` on integers; left shift when ``shift < 0``."""
    if shift <= 0:
        return acc * (1 << -shift)
    q = acc >> shift  # floor division
    r = acc - (q << shift)
    half = 1 << (shift - 1)
    up = (r > half) | ((r == half) & ((q & 1) == 1))
    return q + up


def _layer_codes(h, h_fmt: FxFormat, layer: QuantizedLayer):
    wf = layer.formats.weight
    af = layer.formats.activation
    acc_frac = wf.frac_bits + h_fmt.frac_bits
    wide = wf.width + h_fmt.width + int(np.ceil(np.log2(layer.fan_in + 1))) + 2 > 62
    if wide or h.dtype == object or layer.weight_codes.dtype == object:
        h = h.astype(object)
        w = layer.weight_codes.astype(object)
        b = layer.bias_codes.astype(object)
    else:
        w = layer.weight_codes
        b = layer.bias_codes
    acc = h @ w + b * (1 << h_fmt.frac_bits)
    if layer.activation == "relu":
        acc = np.where(acc > 0, acc, 0 * acc)
    out = _round_shift(acc, acc_frac - af.frac_bits)
    out = np.minimum(np.maximum(out, af.code_min), af.code_max)
    return out if out.dtype == object else out.astype(np.int64)


def _round_shift_int(acc: int, shift: int) -> int:
    if shift <= 0:
        return acc << -shift
    q, r = divmod(acc, 1 << shift)
    twice = 2 * r
    if twice > (1 << shift) or (twice == (1 << shift) and q % 2 == 1):
        q += 1
    return q


def reference_infer_codes(qm: QuantizedModel, beta: float) -> list:
    """Scalar, pure-Python-integer re-implementation of :meth:`QuantizedModel.infer_codes`.

    Shares no arithmetic with the vectorized path; used to cross-check it.
    """
    beta = float(beta)
    _check_betas(np.array([beta]))
    fmt = qm.input_format
    scaled = np.rint(np.ldexp(beta / qm.beta_scale, fmt.frac_bits))
    h = [max(fmt.code_min, min(fmt.code_max, int(scaled)))]
    for layer in qm.layers:
        wf, af = layer.formats.weight, layer.formats.activation
        w = [[int(c) for c in row] for row in np.asarray(layer.weight_codes).tolist()]
        out = []
        for j in range(layer.fan_out):
            acc = sum(h[i] * w[i][j] for i in range(layer.fan_in))
            acc += int(layer.bias_codes[j]) << fmt.frac_bits
            if layer.activation == "relu" and acc < 0:
                acc = 0
            c = _round_shift_int(acc, wf.frac_bits + fmt.frac_bits - af.frac_bits)
            out.append(max(af.code_min, min(af.code_max, c)))
        h, fmt = out, af
    return h


def quantize_model(model, preset=None, input_format: FxFormat | None = None) -> QuantizedModel:
    """Convert a trained float or QAT model to integer codes.

    Args:
        model: an :class:`~pulsenet.mlp.MlpModel`.
        preset: a preset name, an explicit list of :class:`LayerFormats`
            (one per dense layer), or ``None`` to use the formats the model
            was trained with.
        input_format: overrides the preset's input format.

    Raises:
        ValueError: unknown preset or layer-count mismatch.
    """
    n_layers = len(model.weights)
    if preset is None:
        if model.spec.formats is None:
            raise ValueError("model has no quantization formats; pass a preset")
        in_fmt, layers = model.spec.input_format, list(model.spec.formats)
    elif isinstance(preset, str):
        in_fmt, layers = preset_formats(preset, n_layers)
    else:
        layers = list(preset)
        in_fmt = layers[0].activation
    if len(layers) != n_layers:
        raise ValueError(f"preset has {len(layers)} layer formats, model has {n_layers} layers")
    if input_format is not None:
        in_fmt = input_format
    if in_fmt is None:
        in_fmt = layers[0].activation

    qlayers = []
    for w, b, fmts, act in zip(model.weights, model.biases, layers, model.spec.activations):
        qlayers.append(QuantizedLayer(quantize_real(w, fmts.weight), quantize_real(b, fmts.weight), fmts, act))
    return QuantizedModel(tuple(qlayers), in_fmt, float(model.alpha_scale), float(model.spec.beta_scale))


# --------------------------------------------------------------------------
# Resource estimate
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ResourceReport:
    layers: tuple  # per-layer dicts
    dsp_multipliers: int
    lut_multipliers: int
    total_parameters: int
    reuse_factor: int = 1

    @property
    def total_multipliers(self) -> int:
        return self.dsp_multipliers + self.lut_multipliers

    def to_dict(self) -> dict:
        return {
            "layers": list(self.layers),
            "dsp_multipliers": self.dsp_multipliers,
            "lut_multipliers": self.lut_multipliers,
            "total_multipliers": self.total_multipliers,
            "total_parameters": self.total_parameters,
            "reuse_factor": self.reuse_factor,
        }

    def table(self) -> str:
        lines = [f"{'layer':>5} {'fan_in':>6} {'fan_out':>7} {'W_w':>4} {'W_a':>4} {'mults':>6} {'maps':>4}"]
        for i, row in enumerate(self.layers):
            lines.append(f"{i:>5} {row['fan_in']:>6} {row['fan_out']:>7} {row['weight_width']:>4} "
                         f"{row['activation_width']:>4} {row['multipliers']:>6} {row['mapped_to']:>4}")
        lines.append(f"total multipliers {self.total_multipliers}: DSP {self.dsp_multipliers}, "
                     f"LUT {self.lut_multipliers}; parameters {self.total_parameters}; RF {self.reuse_factor}")
        return "\n".join(lines)


def resource_report(qm: QuantizedModel) -> ResourceReport:
    """Count fully parallel (reuse factor 1) multipliers and where they map.

    A layer's ``fan_in * fan_out`` multipliers go to LUTs when both its weight
    and activation words are at most 12 bits wide, otherwise to DSP blocks.
    """
    rows = []
    dsp = lut = params = 0
    for layer in qm.layers:
        ww, aw = layer.formats.weight.width, layer.formats.activation.width
        mults = layer.fan_in * layer.fan_out
        on_lut = max(ww, aw) <= LUT_MULTIPLIER_MAX_BITS
        if on_lut:
            lut += mults
        else:
            dsp += mults
        params += mults + layer.fan_out
        rows.append({"fan_in": layer.fan_in, "fan_out": layer.fan_out, "weight_width": ww,
                     "activation_width": aw, "multipliers": mults, "mapped_to": "LUT" if on_lut else "DSP"})
    return ResourceReport(tuple(rows), dsp, lut, params)
