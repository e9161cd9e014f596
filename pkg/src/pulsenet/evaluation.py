"""Fidelity curves, lookup-table baselines, Bloch trajectories and report files.

Three gates are compared at every angle: the golden ``Rx(beta)``, the gate
realized by the optimizer's pulse (when the angle is a dataset row) and the
gate realized by the predicted pulse.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pulse import DEFAULT_CONFIG, PulseConfig, propagate, propagate_trajectory
from .quantum import bloch_coords_many, gate_fidelity, rx_gate

FIELDS = ("f_predicted_golden", "f_predicted_optimized", "f_optimized_golden")


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else format(x, ".17g")


def _parse(s: str) -> float:
    return float("nan") if s == "" else float(s)


def _json_float(x):
    x = float(x)
    return None if math.isnan(x) else x


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _batch_predict(predict, betas):
    """Call ``predict`` on every angle, using its vectorized form when it has one."""
    if hasattr(predict, "predict"):
        return np.asarray(predict.predict(betas), dtype=float)
    return np.array([predict(b) for b in betas], dtype=float)


# --------------------------------------------------------------------------
# Fidelity curves
# --------------------------------------------------------------------------


@dataclass
class FidelityReport:
    """Per-angle pairwise fidelities; NaN marks comparisons without a dataset pulse."""

    betas: np.ndarray
    f_predicted_golden: np.ndarray
    f_predicted_optimized: np.ndarray
    f_optimized_golden: np.ndarray
    name: str = "fidelity"
    provenance: dict = field(default_factory=dict)
    kind = "fidelity"

    def summary(self) -> dict:
        out = {}
        for key in FIELDS:
            vals = getattr(self, key)
            vals = vals[~np.isnan(vals)]
            out[key] = ({"min": float(vals.min()), "mean": float(vals.mean()), "count": int(vals.size)}
                        if vals.size else {"min": None, "mean": None, "count": 0})
        return out

    def without_smallest(self, k: int = 3) -> "FidelityReport":
        """Same report minus the ``k`` smallest angles (a presentation filter)."""
        keep = slice(k, None)
        return FidelityReport(self.betas[keep], self.f_predicted_golden[keep], self.f_predicted_optimized[keep],
                              self.f_optimized_golden[keep], f"{self.name}-drop{k}",
                              {**self.provenance, "dropped_smallest": k})

    def min_predicted_golden(self) -> float:
        return float(np.min(self.f_predicted_golden))

    def csv_rows(self):
        yield ["beta", *FIELDS]
        for i in range(len(self.betas)):
            yield [_fmt(self.betas[i])] + [_fmt(getattr(self, k)[i]) for k in FIELDS]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.csv_rows())

    @classmethod
    def from_csv(cls, path, name: str = "fidelity") -> "FidelityReport":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["beta", *FIELDS]:
            raise ValueError(f"{path}: unexpected header {rows[0]}")
        cols = np.array([[_parse(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 4)
        return cls(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], name)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "summary": self.summary(),
            "provenance": self.provenance,
            "rows": [{"beta": float(self.betas[i]), **{k: _json_float(getattr(self, k)[i]) for k in FIELDS}}
                     for i in range(len(self.betas))],
        }

    def svg(self) -> str:
        series = [(k.replace("f_", "").replace("_", "-"), self.betas, getattr(self, k)) for k in FIELDS]
        return svg_line_chart(series, title=self.name, xlabel="beta (rad)", ylabel="gate fidelity")


def fidelity_curve(predict, ds=None, grid=None, pcfg: PulseConfig = DEFAULT_CONFIG,
                   name: str = "fidelity", provenance: dict | None = None) -> FidelityReport:
    """Pairwise gate fidelities of predicted, optimized and golden gates.

    Args:
        predict: ``beta -> alpha`` callable, or an object with a vectorized
            ``predict(betas)`` method (float or quantized model).
        ds: dataset supplying optimized pulses; angles that are not dataset
            rows get NaN for the two comparisons involving the optimizer.
        grid: angles to evaluate; defaults to all dataset angles.
    """
    if grid is None:
        if ds is None:
            raise ValueError("need a grid or a dataset")
        grid = ds.betas
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid is empty")
    if np.any(~np.isfinite(grid)) or np.any(np.abs(grid) > np.pi + 1e-12):
        raise ValueError("grid angles must lie in [-pi, pi]")

    alphas = _batch_predict(predict, grid)
    n = grid.size
    f_pg = np.empty(n)
    f_po = np.full(n, np.nan)
    f_og = np.full(n, np.nan)
    for i, beta in enumerate(grid):
        golden = rx_gate(beta)
        predicted = propagate(alphas[i], pcfg)
        f_pg[i] = gate_fidelity(predicted, golden)
        a_opt = ds.alpha_at(beta) if ds is not None else None
        if a_opt is not None:
            optimized = propagate(a_opt, pcfg)
            f_po[i] = gate_fidelity(predicted, optimized)
            f_og[i] = gate_fidelity(optimized, golden)
    return FidelityReport(grid, f_pg, f_po, f_og, name, dict(provenance or {}))


# --------------------------------------------------------------------------
# Lookup-table baselines
# --------------------------------------------------------------------------


@dataclass
class LutBaseline:
    """Table of optimized pulses indexed by angle.

    ``nearest`` returns the entry closest to the requested angle (ties go to
    the smaller angle); ``linear`` interpolates componentwise between the
    bracketing entries and clamps outside the table.
    """

    betas: np.ndarray
    alphas: np.ndarray
    mode: str = "nearest"

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float).ravel()
        if self.betas.size == 0:
            raise ValueError("lookup table is empty")
        self.alphas = np.asarray(self.alphas, dtype=float).reshape(len(self.betas), -1)
        if np.any(np.diff(self.betas) <= 0):
            raise ValueError("table angles must be strictly increasing")
        if self.mode not in ("nearest", "linear"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_dataset(cls, ds, n_entries: int, mode: str = "nearest") -> "LutBaseline":
        """Evenly spaced rows of ``ds`` (by index) as table entries."""
        if not 1 <= n_entries <= len(ds):
            raise ValueError(f"n_entries must lie in [1, {len(ds)}]")
        idx = np.unique(np.round(np.linspace(0, len(ds) - 1, n_entries)).astype(int))
        return cls(ds.betas[idx], ds.alphas[idx], mode)

    def with_mode(self, mode: str) -> "LutBaseline":
        return LutBaseline(self.betas, self.alphas, mode)

    def __call__(self, beta):
        return lut_predict(self, beta)


def lut_predict(lb: LutBaseline, beta: float) -> np.ndarray:
    beta = float(beta)
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    b = lb.betas
    if lb.mode == "nearest":
        j = int(np.searchsorted(b, beta))  # b[j-1] < beta <= b[j]
        if j == 0:
            return lb.alphas[0].copy()
        if j == len(b):
            return lb.alphas[-1].copy()
        lower = beta - b[j - 1]
        upper = b[j] - beta
        return lb.alphas[j - 1 if lower <= upper else j].copy()
    if beta <= b[0]:
        return lb.alphas[0].copy()
    if beta >= b[-1]:
        return lb.alphas[-1].copy()
    j = int(np.searchsorted(b, beta, side="right"))
    if b[j - 1] == beta:
        return lb.alphas[j - 1].copy()
    w = (beta - b[j - 1]) / (b[j] - b[j - 1])
    return (1 - w) * lb.alphas[j - 1] + w * lb.alphas[j]


METHODS = ("nn", "lut_nearest", "lut_linear")


@dataclass
class ComparisonReport:
    """Predicted-golden fidelity per angle for the network and both table modes."""

    betas: np.ndarray
    fidelities: dict  # method -> array
    name: str = "compare-lut"
    provenance: dict = field(default_factory=dict)
    kind = "comparison"

    def summary(self) -> dict:
        return {m: {"min": float(np.min(f)), "mean": float(np.mean(f))} for m, f in self.fidelities.items()}

    def csv_rows(self):
        yield ["beta", *(f"f_{m}" for m in METHODS)]
        for i in range(len(self.betas)):
            yield [_fmt(self.betas[i])] + [_fmt(self.fidelities[m][i]) for m in METHODS]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.csv_rows())

    @classmethod
    def from_csv(cls, path, name: str = "compare-lut") -> "ComparisonReport":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        cols = np.array([[_parse(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 1 + len(METHODS))
        return cls(cols[:, 0], {m: cols[:, 1 + i] for i, m in enumerate(METHODS)}, name)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "name": self.name,
            "summary": self.summary(),
            "provenance": self.provenance,
            "rows": [{"beta": float(self.betas[i]), **{m: float(self.fidelities[m][i]) for m in METHODS}}
                     for i in range(len(self.betas))],
        }

    def svg(self) -> str:
        series = [(m, self.betas, self.fidelities[m]) for m in METHODS]
        return svg_line_chart(series, title=self.name, xlabel="beta (rad)", ylabel="predicted-golden fidelity")


def compare_nn_vs_lut(model, table: LutBaseline, grid, pcfg: PulseConfig = DEFAULT_CONFIG,
                      provenance: dict | None = None) -> ComparisonReport:
    """Score the network against nearest and linear lookup tables on ``grid``."""
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid is empty")
    predictors = {"nn": model, "lut_nearest": table.with_mode("nearest"), "lut_linear": table.with_mode("linear")}
    fids = {}
    for method, pred in predictors.items():
        alphas = _batch_predict(pred, grid)
        fids[method] = np.array([gate_fidelity(propagate(a, pcfg), rx_gate(b)) for a, b in zip(alphas, grid)])
    prov = {"table_size": int(len(table.betas)), "grid_size": int(grid.size), **(provenance or {})}
    return ComparisonReport(grid, fids, provenance=prov)


# --------------------------------------------------------------------------
# Bloch trajectories
# --------------------------------------------------------------------------


@dataclass
class BlochTrajectory:
    """Bloch vectors of the pulse-driven state and of the ideal ``Rx(beta t / T)`` path, from ``|0>``."""

    times: np.ndarray
    pulse_xyz: np.ndarray
    golden_xyz: np.ndarray
    final_overlap: float
    name: str = "bloch"
    provenance: dict = field(default_factory=dict)
    kind = "bloch"

    def csv_rows(self):
        yield ["t", "x", "y", "z", "golden_x", "golden_y", "golden_z"]
        for t, p, g in zip(self.times, self.pulse_xyz, self.golden_xyz):
            yield [_fmt(t), *map(_fmt, p), *map(_fmt, g)]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.csv_rows())

    @classmethod
    def from_csv(cls, path) -> "BlochTrajectory":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        cols = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, 7)
        return cls(cols[:, 0], cols[:, 1:4], cols[:, 4:7], float("nan"))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "name": self.name, "final_overlap": self.final_overlap,
                "provenance": self.provenance, "samples": int(len(self.times))}

    def svg(self) -> str:
        series = [(f"pulse {c}", self.times, self.pulse_xyz[:, i]) for i, c in enumerate("xyz")]
        series += [(f"golden {c}", self.times, self.golden_xyz[:, i]) for i, c in enumerate("xyz")]
        return svg_line_chart(series, title=self.name, xlabel="t (ns)", ylabel="Bloch component", ylim=(-1, 1))


def bloch_export(alpha, beta: float, pcfg: PulseConfig = DEFAULT_CONFIG, samples: int = 101,
                 path=None) -> BlochTrajectory:
    """Trajectory of ``|0>`` under pulse ``alpha`` next to the ideal rotation path.

    ``final_overlap`` is ``|<psi_target|psi(T)>|^2`` with
    ``psi_target = Rx(beta)|0>``. Writes CSV to ``path`` when given.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    beta = float(beta)
    if not math.isfinite(beta):
        raise ValueError("beta must be finite")
    s0 = np.array([1, 0], dtype=complex)
    times, states = propagate_trajectory(alpha, pcfg, s0, samples)
    ideal = np.array([rx_gate(beta * t / pcfg.duration) @ s0 for t in times])
    overlap = float(abs(np.vdot(ideal[-1], states[-1])) ** 2)
    traj = BlochTrajectory(times, bloch_coords_many(states), bloch_coords_many(ideal), overlap)
    if path is not None:
        traj.to_csv(path)
    return traj


# --------------------------------------------------------------------------
# SVG and report emission
# --------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_chart(series, title="", xlabel="", ylabel="", ylim=None, width=640, height=400) -> str:
    """Minimal standalone SVG line chart; NaN points split a line."""
    pad_l, pad_r, pad_t, pad_b = 70, 150, 30, 45
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b
    xs = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(s[2], float) for s in series]) if series else np.array([0.0, 1.0])
    ys = ys[np.isfinite(ys)]
    x0, x1 = (float(np.min(xs)), float(np.max(xs))) if xs.size else (0.0, 1.0)
    if ylim is None:
        y0, y1 = (float(np.min(ys)), float(np.max(ys))) if ys.size else (0.0, 1.0)
        margin = 0.05 * (y1 - y0) if y1 > y0 else 1e-3
        y0, y1 = y0 - margin, y1 + margin
    else:
        y0, y1 = ylim
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5

    def sx(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return pad_t + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
           f'<text x="{pad_l + pw / 2}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<text x="{pad_l + pw / 2}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>',
           f'<text x="14" y="{pad_t + ph / 2}" text-anchor="middle" '
           f'transform="rotate(-90 14 {pad_t + ph / 2})">{_esc(ylabel)}</text>']
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4
        yv = y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{pad_t + ph + 15}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{pad_l - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.5g}</text>')
        out.append(f'<line x1="{pad_l}" x2="{pad_l + pw}" y1="{sy(yv):.1f}" y2="{sy(yv):.1f}" stroke="#ddd"/>')
    for n, (label, x, y) in enumerate(series):
        color = _PALETTE[n % len(_PALETTE)]
        segs, cur = [], []
        for xi, yi in zip(np.asarray(x, float), np.asarray(y, float)):
            if np.isfinite(yi):
                cur.append(f"{sx(xi):.2f},{sy(yi):.2f}")
            elif cur:
                segs.append(cur)
                cur = []
        if cur:
            segs.append(cur)
        for seg in segs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
        ly = pad_t + 15 + 16 * n
        out.append(f'<line x1="{pad_l + pw + 10}" x2="{pad_l + pw + 30}" y1="{ly}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + pw + 35}" y="{ly + 4}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


@dataclass
class EmitResult:
    files: list
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 2


def check_thresholds(report, thresholds: dict | None) -> list:
    """Threshold violations for one report.

    Recognized keys: ``min_predicted_golden`` (fidelity reports),
    ``min_optimized_golden`` (fidelity reports) and ``min_nn`` (comparisons).
    """
    if not thresholds:
        return []
    found = []
    checks = {
        "min_predicted_golden": ("fidelity", lambda r: r.f_predicted_golden),
        "min_optimized_golden": ("fidelity", lambda r: r.f_optimized_golden),
        "min_nn": ("comparison", lambda r: r.fidelities["nn"]),
    }
    for key, limit in thresholds.items():
        if key not in checks:
            raise ValueError(f"unknown threshold {key!r}")
        kind, get = checks[key]
        if report.kind != kind:
            continue
        vals = np.asarray(get(report), dtype=float)
        bad = np.isfinite(vals) & (vals < limit)
        if bad.any():
            found.append({"report": report.name, "threshold": key, "limit": float(limit),
                          "observed_min": float(np.nanmin(vals)),
                          "betas": [float(b) for b in np.asarray(report.betas)[bad]]})
    return found


def emit_report(reports, out_dir, run_id: str = "run", thresholds: dict | None = None) -> EmitResult:
    """Write ``<run_id>-<name>.{csv,json,svg}`` for each report.

    Threshold violations are listed in each offending report's JSON under
    ``violations`` and make ``EmitResult.exit_code`` nonzero.

    Raises:
        OSError: with the offending path when a file cannot be written.
    """
    reports = list(reports)
    files, violations = [], []
    if not reports:
        return EmitResult(files, violations)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    for rep in reports:
        stem = f"{run_id}-{rep.name}"
        found = check_thresholds(rep, thresholds)
        violations.extend(found)
        payload = rep.to_dict()
        payload["run_id"] = run_id
        payload["thresholds"] = thresholds or {}
        payload["violations"] = found
        targets = [(out_dir / f"{stem}.csv", rep.to_csv),
                   (out_dir / f"{stem}.json", lambda p: p.write_text(json.dumps(payload, indent=1) + "\n",
                                                                    encoding="utf-8")),
                   (out_dir / f"{stem}.svg", lambda p: p.write_text(rep.svg(), encoding="utf-8"))]
        for path, writer in targets:
            try:
                writer(path)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc}") from exc
            files.append(path)
    return EmitResult(files, violations)
