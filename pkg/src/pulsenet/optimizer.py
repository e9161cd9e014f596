"""Gradient-ascent pulse optimization and training-set generation.

The optimizer maximizes ``gate_fidelity(Rx(beta), propagate(alpha))`` with
Adam and stops as soon as the target fidelity is reached. Sweeping it over a
uniform grid of rotation angles yields the (beta, alpha) table the surrogate
network is trained on.
"""

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .pulse import DEFAULT_CONFIG, PulseConfig, check_params, fidelity_and_gradient
from .quantum import rx_gate

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class ConvergenceError(RuntimeError):
    """Raised when one or more rotation angles miss the target fidelity."""

    def __init__(self, betas):
        self.betas = [float(b) for b in betas]
        listed = ", ".join(f"{b:.6f}" for b in self.betas)
        super().__init__(f"optimizer did not reach target fidelity for beta = [{listed}]")


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam settings for pulse optimization.

    ``adam_eps`` is deliberately large. Far from the optimum the gradient
    dominates it and the update is ordinary Adam; close to the optimum the
    update becomes momentum gradient ascent, which keeps warm-started
    solutions on a smooth branch instead of jittering in directions that do
    not change the gate.
    """

    max_iterations: int = 5000
    target_fidelity: float = 0.999
    learning_rate: float = 1e-3
    init_scale: float = 0.05
    seed: int = 1234
    warm_start: bool = True
    adam_eps: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if not 0 < self.target_fidelity < 1:
            raise ValueError("target_fidelity must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.init_scale < 0:
            raise ValueError("init_scale must be non-negative")


@dataclass
class OptimizeResult:
    alpha: np.ndarray
    fidelity: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def random_init(seed: int, index: int, cfg: OptimizerConfig, pcfg: PulseConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Uniform random pulse in ``[-init_scale, init_scale]``, keyed on (seed, grid index)."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])
    return rng.uniform(-cfg.init_scale, cfg.init_scale, pcfg.n_params)


def optimize_pulse(beta: float, init, cfg: OptimizerConfig = OptimizerConfig(),
                   pcfg: PulseConfig = DEFAULT_CONFIG) -> OptimizeResult:
    """Adam ascent on the gate fidelity of ``Rx(beta)``.

    Stops at the first iterate with ``F >= target_fidelity`` or after
    ``max_iterations`` updates. The best iterate seen is always returned; an
    unconverged run is reported through ``converged=False`` rather than an
    exception so callers keep the best pulse.
    """
    beta = float(beta)
    if not (np.isfinite(beta) and -np.pi - 1e-12 <= beta <= np.pi + 1e-12):
        raise ValueError(f"beta must lie in [-pi, pi], got {beta}")
    alpha = check_params(init, pcfg).copy()
    target = rx_gate(beta)

    m = np.zeros_like(alpha)
    v = np.zeros_like(alpha)
    best_alpha, best_f = alpha.copy(), -np.inf
    history = []
    it = 0
    while True:
        f, grad = fidelity_and_gradient(alpha, target, pcfg)
        if f > best_f:
            best_alpha, best_f = alpha.copy(), f
        history.append(best_f)
        if best_f >= cfg.target_fidelity or it >= cfg.max_iterations:
            break
        it += 1
        m = cfg.beta1 * m + (1 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
        m_hat = m / (1 - cfg.beta1 ** it)
        v_hat = v / (1 - cfg.beta2 ** it)
        alpha = alpha + cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)

    return OptimizeResult(best_alpha, float(best_f), it, bool(best_f >= cfg.target_fidelity), history)


# --------------------------------------------------------------------------
# Dataset
# --------------------------------------------------------------------------


@dataclass
class Dataset:
    """Rows of (beta, alpha, achieved fidelity) with optional split tags."""

    betas: np.ndarray
    alphas: np.ndarray
    fidelities: np.ndarray
    splits: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.fidelities = np.asarray(self.fidelities, dtype=float)
        if self.alphas.ndim != 2 or len(self.alphas) != len(self.betas) or len(self.fidelities) != len(self.betas):
            raise ValueError("betas, alphas and fidelities must have matching row counts")
        if len(self.betas) > 1 and np.any(np.diff(self.betas) <= 0):
            raise ValueError("betas must be strictly increasing")
        if self.splits is not None:
            self.splits = np.asarray(self.splits, dtype=object)
            if len(self.splits) != len(self.betas):
                raise ValueError("splits must have one entry per row")
            bad = set(self.splits) - set(SPLITS)
            if bad:
                raise ValueError(f"unknown split tags {sorted(bad)}")

    def __len__(self):
        return len(self.betas)

    def mask(self, split: str | None) -> np.ndarray:
        if split is None or split == "all":
            return np.ones(len(self), dtype=bool)
        if self.splits is None:
            raise ValueError("dataset has no split tags")
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return self.splits == split

    def subset(self, split: str | None):
        """``(betas, alphas)`` restricted to one split."""
        m = self.mask(split)
        return self.betas[m], self.alphas[m]

    def alpha_at(self, beta: float, atol: float = 1e-12):
        """Alpha of the row whose beta matches, or ``None``."""
        i = np.searchsorted(self.betas, beta)
        for j in (i - 1, i):
            if 0 <= j < len(self) and abs(self.betas[j] - beta) <= atol:
                return self.alphas[j]
        return None

    def to_csv(self, path):
        """Write ``path`` (CSV) and its metadata sidecar ``path.with_suffix('.json')``."""
        path = Path(path)
        n = self.alphas.shape[1]
        header = ["beta"] + [f"alpha_{i}" for i in range(n)] + ["fidelity", "split"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(len(self)):
                tag = "" if self.splits is None else self.splits[i]
                w.writerow([_fmt(self.betas[i])] + [_fmt(a) for a in self.alphas[i]]
                           + [_fmt(self.fidelities[i]), tag])
        with open(metadata_path(path), "w", encoding="utf-8") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        n_alpha = sum(1 for h in header if h.startswith("alpha_"))
        if header[0] != "beta" or header[-2:] != ["fidelity", "split"] or len(header) != n_alpha + 3:
            raise ValueError(f"{path}: unexpected header {header[:3]}...")
        betas = np.array([float(r[0]) for r in body])
        alphas = np.array([[float(x) for x in r[1:1 + n_alpha]] for r in body]).reshape(len(body), n_alpha)
        fids = np.array([float(r[1 + n_alpha]) for r in body])
        tags = [r[2 + n_alpha] for r in body]
        splits = None if all(t == "" for t in tags) else np.array(tags, dtype=object)
        meta_file = metadata_path(path)
        metadata = json.loads(meta_file.read_text(encoding="utf-8")) if meta_file.exists() else {}
        return cls(betas, alphas, fids, splits, metadata)


def metadata_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _optimize_row(args):
    beta, init, cfg, pcfg = args
    return optimize_pulse(beta, init, cfg, pcfg)


def generate_dataset(grid_size: int = 101, cfg: OptimizerConfig = OptimizerConfig(),
                     pcfg: PulseConfig = DEFAULT_CONFIG, jobs: int = 1) -> Dataset:
    """Optimize pulses on a uniform grid over [-pi, pi] and drop the ``-pi`` row.

    ``Rx(-pi)`` and ``Rx(pi)`` differ only by a global phase, so the two
    endpoint rows describe the same gate with opposite angle labels; keeping
    both would hand the network contradictory targets.

    With ``warm_start`` each optimization starts from the previous angle's
    solution (the first one from a seeded random pulse). Without it every
    angle gets its own seeded random start and may run in a worker pool.

    Raises:
        ConvergenceError: if any angle, including the dropped one, fails to
            reach ``target_fidelity``. No partial dataset is returned.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    betas = np.linspace(-np.pi, np.pi, grid_size)
    results = []
    if cfg.warm_start:
        prev = random_init(cfg.seed, 0, cfg, pcfg)
        for beta in betas:
            res = optimize_pulse(beta, prev, cfg, pcfg)
            results.append(res)
            prev = res.alpha
    else:
        tasks = [(b, random_init(cfg.seed, i, cfg, pcfg), cfg, pcfg) for i, b in enumerate(betas)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_optimize_row, tasks))
        else:
            results = [_optimize_row(t) for t in tasks]
    for b, r in zip(betas, results):
        log.debug("beta=%+.5f F=%.6f iters=%d", b, r.fidelity, r.iterations)

    failed = [b for b, r in zip(betas, results) if not r.converged]
    if failed:
        raise ConvergenceError(failed)

    keep = slice(1, None)
    alphas = np.array([r.alpha for r in results])[keep]
    metadata = {
        "grid_size": grid_size,
        "seed": cfg.seed,
        "pulse_config": pcfg.to_dict(),
        "optimizer_config": asdict(cfg),
        "alpha_scale": float(np.max(np.abs(alphas))),
        "iterations": [r.iterations for r in results][keep],
        "tool_version": __version__,
    }
    return Dataset(betas[keep], alphas, np.array([r.fidelity for r in results])[keep], None, metadata)


def split_dataset(ds: Dataset, fractions=(0.6, 0.2, 0.2), seed: int = 0) -> Dataset:
    """Tag rows train/val/test after a seeded shuffle.

    Validation and test get ``floor(n * f)`` rows each and train takes the
    remainder. Returns a new dataset; ``metadata['alpha_scale']`` is updated
    to ``max |alpha|`` over the training rows.
    """
    n = len(ds)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    n_val = int(np.floor(n * fractions[1] + 1e-9))
    n_test = int(np.floor(n * fractions[2] + 1e-9))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype=object)
    tags[order[:n_train]] = "train"
    tags[order[n_train:n_train + n_val]] = "val"
    tags[order[n_train + n_val:]] = "test"

    meta = dict(ds.metadata)
    meta["split_seed"] = seed
    meta["split_fractions"] = list(fractions)
    train = tags == "train"
    if train.any():
        meta["alpha_scale"] = float(np.max(np.abs(ds.alphas[train])))
    return replace(ds, splits=tags, metadata=meta)
