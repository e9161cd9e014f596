"""Small fully connected regressor mapping rotation angle to pulse coefficients.

Everything is plain numpy: parameters live in one flat vector so Adam updates
are a handful of array operations, and backpropagation is written out by
hand. Quantization-aware training reuses the same code path with fake
quantization of weights and layer outputs and a straight-through gradient.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .fixed_point import FxFormat, LayerFormats, fake_quantize, in_range, preset_formats

log = logging.getLogger(__name__)

N_OUTPUTS = 20


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    """Architecture and (optional) per-layer fixed-point formats.

    ``formats`` holds one :class:`LayerFormats` per dense layer, output layer
    included; when present, training runs quantization-aware.
    """

    hidden: tuple = (11,) * 7
    n_outputs: int = N_OUTPUTS
    hidden_activation: str = "relu"
    formats: tuple | None = None
    input_format: FxFormat | None = None
    beta_scale: float = float(np.pi)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden) or self.n_outputs < 1:
            raise ValueError("all layer widths must be >= 1")
        if self.hidden_activation not in ("relu", "linear"):
            raise ValueError(f"unsupported activation {self.hidden_activation!r}")
        if self.formats is not None:
            object.__setattr__(self, "formats", tuple(self.formats))
            if len(self.formats) != len(self.hidden) + 1:
                raise ValueError(f"need {len(self.hidden) + 1} layer formats, got {len(self.formats)}")
            if self.input_format is None:
                object.__setattr__(self, "input_format", self.formats[0].activation)

    @property
    def widths(self) -> list:
        return [1, *self.hidden, self.n_outputs]

    @property
    def activations(self) -> list:
        return [self.hidden_activation] * len(self.hidden) + ["linear"]

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))

    @property
    def quantized(self) -> bool:
        return self.formats is not None

    def with_preset(self, preset: str) -> "MlpSpec":
        in_fmt, layers = preset_formats(preset, len(self.hidden) + 1)
        return replace(self, formats=tuple(layers), input_format=in_fmt, name=f"{self.name}+{preset}")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "widths": self.widths,
            "activations": self.activations,
            "beta_scale": self.beta_scale,
        }
        if self.formats is not None:
            d["input_format"] = self.input_format.to_dict()
            d["formats"] = [{"weight": f.weight.to_dict(), "activation": f.activation.to_dict()}
                            for f in self.formats]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        widths = d["widths"]
        formats = input_format = None
        if "formats" in d:
            formats = tuple(LayerFormats(FxFormat.from_dict(f["weight"]), FxFormat.from_dict(f["activation"]))
                            for f in d["formats"])
            input_format = FxFormat.from_dict(d["input_format"])
        return cls(tuple(widths[1:-1]), widths[-1], d["activations"][0] if len(widths) > 2 else "relu",
                   formats, input_format, float(d.get("beta_scale", np.pi)), d.get("name", "custom"))


#: Named architectures. ``large`` is the ~1,040-parameter seven-hidden-layer
#: network, ``small`` the ~783-parameter six-hidden-layer one, ``xlarge``
#: roughly 15x ``large``.
SPECS = {
    "large": MlpSpec((11,) * 7, name="large"),
    "small": MlpSpec((10,) * 6, name="small"),
    "xlarge": MlpSpec((48,) * 7, name="xlarge"),
}


def get_spec(name_or_spec) -> MlpSpec:
    if isinstance(name_or_spec, MlpSpec):
        return name_or_spec
    try:
        return SPECS[name_or_spec]
    except KeyError:
        raise ValueError(f"unknown spec {name_or_spec!r}; choose from {sorted(SPECS)}") from None


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 5000
    patience: int = 250
    learning_rate: float = 3e-3
    batch_size: int | None = None  # None = full batch
    seed: int = 0

    def __post_init__(self):
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size is not None:
            raise ValueError("only full-batch training is supported")


# --------------------------------------------------------------------------
# Parameter layout and the forward/backward passes
# --------------------------------------------------------------------------


def _slices(spec: MlpSpec):
    out, pos = [], 0
    w = spec.widths
    for a, b in zip(w[:-1], w[1:]):
        out.append((slice(pos, pos + a * b), (a, b), slice(pos + a * b, pos + a * b + b)))
        pos += a * b + b
    return out


def unpack(theta: np.ndarray, spec: MlpSpec):
    """Views ``(weights, biases)`` into the flat parameter vector."""
    ws, bs = [], []
    for ws_sl, shape, b_sl in _slices(spec):
        ws.append(theta[ws_sl].reshape(shape))
        bs.append(theta[b_sl])
    return ws, bs


def pack(weights, biases) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in zip(weights, biases)])


def init_params(spec: MlpSpec, seed: int) -> np.ndarray:
    """Uniform ``+-1/sqrt(fan_in)`` init for weights and biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for _, (a, b), _ in _slices(spec):
        bound = 1 / np.sqrt(a)
        parts.append(rng.uniform(-bound, bound, a * b))
        parts.append(rng.uniform(-bound, bound, b))
    return np.concatenate(parts)


def normalize_input(betas, spec: MlpSpec) -> np.ndarray:
    x = np.asarray(betas, dtype=float).reshape(-1, 1) / spec.beta_scale
    if spec.quantized:
        x = fake_quantize(x, spec.input_format)
    return x


def forward(theta, x, spec: MlpSpec, cache: bool = False):
    """Network output on normalized inputs ``x`` of shape ``(n, 1)``.

    When ``spec.formats`` is set, weights, biases and every layer output are
    fake-quantized, which reproduces the integer inference exactly as long
    as the products fit in a double's mantissa.
    """
    ws, bs = unpack(theta, spec)
    h = x
    saved = []
    for i, (w, b, act) in enumerate(zip(ws, bs, spec.activations)):
        fmts = spec.formats[i] if spec.quantized else None
        if fmts is not None:
            w = fake_quantize(w, fmts.weight)
            b = fake_quantize(b, fmts.weight)
        z = h @ w + b
        a = np.maximum(z, 0.0) if act == "relu" else z
        if fmts is not None:
            out = fake_quantize(a, fmts.activation)
            mask = in_range(a, fmts.activation)
        else:
            out, mask = a, None
        if cache:
            saved.append((h, w, z, mask))
        h = out
    return (h, saved) if cache else h


def loss_and_grad(theta, x, y, spec: MlpSpec):
    """Mean squared error over rows and outputs, and its gradient in ``theta``.

    Quantizers pass gradients straight through inside their range and block
    them where the value saturated.
    """
    out, saved = forward(theta, x, spec, cache=True)
    diff = out - y
    loss = float(np.mean(diff ** 2))
    grad = np.empty_like(theta)
    gws, gbs = unpack(grad, spec)
    ws, bs = unpack(theta, spec)
    d = 2.0 * diff / diff.size
    for i in range(len(ws) - 1, -1, -1):
        h, w_used, z, mask = saved[i]
        if mask is not None:
            d = d * mask
        if spec.activations[i] == "relu":
            d = d * (z > 0)
        gw = h.T @ d
        gb = d.sum(axis=0)
        if spec.quantized:
            wf = spec.formats[i].weight
            gw = gw * in_range(ws[i], wf)
            gb = gb * in_range(bs[i], wf)
        gws[i][...] = gw
        gbs[i][...] = gb
        d = d @ w_used.T
    return loss, grad


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


@dataclass
class MlpModel:
    spec: MlpSpec
    theta: np.ndarray
    alpha_scale: float
    report: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict, repr=False)

    @property
    def weights(self):
        return unpack(self.theta, self.spec)[0]

    @property
    def biases(self):
        return unpack(self.theta, self.spec)[1]

    @property
    def n_params(self) -> int:
        return self.theta.size

    def predict_normalized(self, betas) -> np.ndarray:
        return forward(self.theta, normalize_input(betas, self.spec), self.spec)

    def predict(self, betas) -> np.ndarray:
        """Pulse coefficients (rad/ns) for an array of angles, shape ``(n, 20)``."""
        betas = np.atleast_1d(np.asarray(betas, dtype=float))
        if not np.all(np.isfinite(betas)) or np.any(np.abs(betas) > np.pi + 1e-12):
            raise ValueError("beta must lie in [-pi, pi]")
        return self.predict_normalized(betas) * self.alpha_scale

    def __call__(self, beta):
        return self.predict([beta])[0]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "alpha_scale": self.alpha_scale,
            "n_params": self.n_params,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "report": self.report,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        spec = MlpSpec.from_dict(d["spec"])
        theta = pack([np.array(w, dtype=float) for w in d["weights"]], [np.array(b, dtype=float) for b in d["biases"]])
        if theta.size != spec.n_params:
            raise ValueError("weight arrays do not match the declared widths")
        return cls(spec, theta, float(d["alpha_scale"]), d.get("report", {}))

    def save(self, path):
        # repr() of a float round-trips, so the JSON text is exact
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def mlp_forward(model: MlpModel, beta: float) -> np.ndarray:
    """Pulse coefficients predicted for a single angle."""
    return model(beta)


def mse(model, ds, split: str = "test", normalized: bool = True) -> float:
    """Mean over rows and outputs of the squared prediction error.

    Works for any model exposing ``predict`` and ``alpha_scale`` (float or
    quantized). Normalized errors are in units of ``alpha_scale``.
    """
    betas, alphas = ds.subset(split)
    if len(betas) == 0:
        raise ValueError(f"split {split!r} is empty")
    err = model.predict(betas) - alphas
    if normalized:
        err = err / model.alpha_scale
    return float(np.mean(err ** 2))


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def _adam_fit(spec: MlpSpec, x_tr, y_tr, x_val, y_val, cfg: TrainConfig, theta0=None):
    theta = init_params(spec, cfg.seed) if theta0 is None else theta0.copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_val = np.inf
    best_theta = theta.copy()
    best_epoch = 0
    train_hist, val_hist = [], []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        # overflow is caught by the finiteness check below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = loss_and_grad(theta, x_tr, y_tr, spec)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch} (learning rate {cfg.learning_rate} too high?)")
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        theta = theta - cfg.learning_rate * (m / (1 - b1 ** epoch)) / (np.sqrt(v / (1 - b2 ** epoch)) + eps)
        with np.errstate(over="ignore", invalid="ignore"):
            val = float(np.mean((forward(theta, x_val, spec) - y_val) ** 2))
        train_hist.append(loss)
        val_hist.append(val)
        if val < best_val:
            best_val, best_theta, best_epoch = val, theta.copy(), epoch
        elif epoch - best_epoch >= cfg.patience:
            break
    return best_theta, {"epochs": epoch, "best_epoch": best_epoch, "best_val_mse": best_val,
                        "train_history": train_hist, "val_history": val_hist}


def train(spec, ds, cfg: TrainConfig = TrainConfig(), init: MlpModel | None = None) -> MlpModel:
    """Full-batch Adam on MSE with early stopping on validation MSE.

    Targets are ``alpha / alpha_scale`` with ``alpha_scale = max |alpha|`` over
    the training rows. The returned weights are those of the best validation
    epoch. Runs quantization-aware when ``spec.formats`` is set.

    ``init`` starts from another model's weights (same widths) instead of a
    random draw; ``alpha_scale`` is still recomputed from ``ds``.

    Raises:
        ValueError: empty train or validation split.
        TrainingDivergedError: the loss became NaN/inf.
    """
    spec = get_spec(spec)
    b_tr, a_tr = ds.subset("train")
    b_val, a_val = ds.subset("val")
    if len(b_tr) == 0 or len(b_val) == 0:
        raise ValueError("dataset needs non-empty train and val splits")
    scale = float(np.max(np.abs(a_tr)))
    if scale == 0:
        scale = 1.0
    x_tr, x_val = normalize_input(b_tr, spec), normalize_input(b_val, spec)
    theta0 = None
    if init is not None:
        if init.spec.widths != spec.widths:
            raise ValueError(f"init model widths {init.spec.widths} do not match {spec.widths}")
        theta0 = init.theta
    theta, info = _adam_fit(spec, x_tr, a_tr / scale, x_val, a_val / scale, cfg, theta0)
    model = MlpModel(spec, theta, scale, history={"train": info["train_history"], "val": info["val_history"]})

    report = {"epochs": info["epochs"], "best_epoch": info["best_epoch"], "seed": cfg.seed,
              "learning_rate": cfg.learning_rate, "patience": cfg.patience, "max_epochs": cfg.max_epochs,
              "quantization_aware": spec.quantized}
    for split in ("train", "val", "test"):
        if ds.mask(split).any():
            report[f"{split}_mse"] = mse(model, ds, split)
            report[f"{split}_mse_unnormalized"] = mse(model, ds, split, normalized=False)
    model.report = report
    log.info("%s: %d params, %d epochs (best %d), test mse %s", spec.name, model.n_params,
             info["epochs"], info["best_epoch"], report.get("test_mse"))
    return model


def train_qat(spec, ds, cfg: TrainConfig = TrainConfig(), preset: str | None = None,
              init: MlpModel | None = None) -> MlpModel:
    """Quantization-aware training; ``preset`` fills in formats for a bare spec.

    Passing the trained float model as ``init`` fine-tunes it under
    quantization, which usually lands closer to the float accuracy than
    training from scratch.
    """
    spec = get_spec(spec)
    if preset is not None:
        spec = spec.with_preset(preset)
    if not spec.quantized:
        raise ValueError("quantization-aware training needs per-layer formats (spec.formats or preset)")
    return train(spec, ds, cfg, init=init)
