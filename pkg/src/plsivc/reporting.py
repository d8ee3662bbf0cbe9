"""Machine-readable outputs: manifests, delimited tables, figures.

Every run writes a manifest.json carrying the resolved configuration,
seed and input digest, which is sufficient to reproduce every file in
the output directory.  CSV payloads are written with 17 significant
digits so round trips are value-exact; JSON uses the shortest
round-trip float representation.  Figures are rendered to PNG next to
the delimited output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402
from .estimator import FitResult  # noqa: E402
from .simulation import SimSummary  # noqa: E402


def fmt(x) -> str:
    """17 significant digits: enough for exact double round trips."""
    return f"{float(x):.17g}"


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


@dataclass
class RunManifest:
    """Reproducibility record attached to every output directory."""

    command: str
    config: dict
    seed: int | None = None
    input_digest: str | None = None
    version: str = __version__
    outputs: list = field(default_factory=list)

    def write(self, out_dir: str, name: str = "manifest.json") -> str:
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            json.dump(_jsonable(asdict(self)), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def summary_rows(summary: SimSummary):
    """One row per method in the layout of the simulation tables:
    Mean, Bias, SD, C, I for beta, then GMSE, C, I for theta."""
    rows = []
    for method in summary.config.methods:
        ms = summary.methods.get(method)
        if ms is None:
            continue
        rows.append([
            summary.config.n, method, fmt(ms.mean), fmt(ms.bias), fmt(ms.sd),
            fmt(ms.c_beta), fmt(ms.i_beta), fmt(ms.gmse), fmt(ms.c_theta),
            fmt(ms.i_theta), fmt(ms.c_g), fmt(ms.i_g), ms.n_used,
        ])
    return rows


SUMMARY_HEADER = ["n", "method", "mean", "bias", "sd", "c_beta", "i_beta",
                  "gmse", "c_theta", "i_theta", "c_g", "i_g", "reps_used"]


def write_summary(summary: SimSummary, out_dir, fmt_kind="csv"):
    outputs = []
    if fmt_kind == "json":
        path = os.path.join(out_dir, "summary.json")
        payload = {
            "n": summary.config.n,
            "sigma": summary.config.sigma,
            "methods": {m: _jsonable(asdict(ms))
                        for m, ms in summary.methods.items()},
            "failures": summary.failures,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append(path)
    else:
        path = os.path.join(out_dir, "summary.csv")
        write_csv(path, SUMMARY_HEADER, summary_rows(summary))
        outputs.append(path)
    return outputs


def write_rase_samples(summary: SimSummary, out_dir):
    path = os.path.join(out_dir, "rase_samples.csv")
    rows = []
    for rec in summary.records:
        for method, r in sorted(rec["methods"].items()):
            rows.append([rec["rep"], method, fmt(r["rase1"]), fmt(r["rase2"]),
                         fmt(r["rase"])])
    write_csv(path, ["rep", "method", "rase1", "rase2", "rase"], rows)
    return [path]


def write_curves(summary: SimSummary, out_dir):
    """Per-method curve tables (u, g1_true, g1_hat_mean, g2_true,
    g2_hat_mean) on the reporting grid."""
    outputs = []
    for method, g_hat in sorted(summary.g_hat_mean.items()):
        path = os.path.join(out_dir, f"curves_{method}.csv")
        rows = [
            [fmt(u), fmt(g1t), fmt(g1h), fmt(g2t), fmt(g2h)]
            for u, g1t, g1h, g2t, g2h in zip(
                summary.grid, summary.g_true[:, 0], g_hat[:, 0],
                summary.g_true[:, 1], g_hat[:, 1])
        ]
        write_csv(path, ["u", "g1_true", "g1_hat_mean", "g2_true", "g2_hat_mean"], rows)
        outputs.append(path)
    return outputs


def boxplot_stats(values: np.ndarray) -> dict:
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr]
    hi = v[v <= q3 + 1.5 * iqr]
    return {
        "min": v[0], "whisker_lo": lo[0] if lo.size else v[0], "q1": q1,
        "median": med, "q3": q3,
        "whisker_hi": hi[-1] if hi.size else v[-1], "max": v[-1],
    }


def write_boxplot_stats(rase_rows, out_dir):
    """Summarize per-replication RASE samples (rows of
    (rep, method, rase1, rase2, rase)) into whisker statistics."""
    path = os.path.join(out_dir, "rase_boxplot_stats.csv")
    by_method: dict[str, dict[str, list]] = {}
    for rep, method, r1, r2, r in rase_rows:
        d = by_method.setdefault(method, {"rase1": [], "rase2": [], "rase": []})
        d["rase1"].append(float(r1))
        d["rase2"].append(float(r2))
        d["rase"].append(float(r))
    rows = []
    for method in sorted(by_method):
        for metric in ("rase1", "rase2", "rase"):
            st = boxplot_stats(np.array(by_method[method][metric]))
            rows.append([method, metric] + [fmt(st[k]) for k in
                        ("min", "whisker_lo", "q1", "median", "q3",
                         "whisker_hi", "max")])
    write_csv(path, ["method", "metric", "min", "whisker_lo", "q1", "median",
                     "q3", "whisker_hi", "max"], rows)
    return [path], by_method


def render_curve_figure(grid, g_true, g_hat_by_method, path):
    """True and mean estimated coefficient-function curves."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    styles = {"scad": "--", "lasso": "-.", "oracle": ":"}
    for k, ax in enumerate(axes):
        ax.plot(grid, g_true[:, k], "k-", lw=1.6, label="true")
        for method, g_hat in sorted(g_hat_by_method.items()):
            ax.plot(grid, g_hat[:, k], styles.get(method, "--"), lw=1.2,
                    label=method)
        ax.set_xlabel("u")
        ax.set_ylabel(f"g{k + 1}(u)")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_rase_boxplot(by_method, path):
    methods = sorted(by_method)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    data1 = []
    labels1 = []
    for m in methods:
        data1 += [by_method[m]["rase1"], by_method[m]["rase2"]]
        labels1 += [f"{m}\nRASE1", f"{m}\nRASE2"]
    axes[0].boxplot(data1, tick_labels=labels1)
    axes[0].set_ylabel("RASE")
    axes[1].boxplot([by_method[m]["rase"] for m in methods],
                    tick_labels=methods)
    axes[1].set_ylabel("RASE1 + RASE2")
    for ax in axes:
        ax.tick_params(axis="x", labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_bodyfat_curves(report, path):
    """Fitted intercept and height coefficient functions over the index."""
    fit: FitResult = report["fit"]
    grid = fit.grid
    gamma = report.get("gamma_raw_basis", fit.gamma)
    from .splines import basis_matrix
    g = basis_matrix(fit.knots, grid) @ np.asarray(gamma).T
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for k, (ax, name) in enumerate(zip(axes, ("intercept", "height"))):
        ax.plot(grid, g[:, k], "b-", lw=1.4)
        ax.set_xlabel("index u")
        ax.set_ylabel(f"g_{name}(u)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def fit_result_payload(fit: FitResult) -> dict:
    """JSON payload with the documented keys."""
    return {
        "beta": fit.beta.tolist(),
        "theta": fit.theta.tolist(),
        "gamma": fit.gamma.tolist(),
        "selected": {
            "beta": fit.beta_support.tolist(),
            "theta": fit.theta_support.tolist(),
            "g": fit.g_support.tolist(),
        },
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "rss": float(fit.rss),
        "objective": float(fit.objective),
        "n_clamped": int(fit.n_clamped),
        "knots": {
            "degree": int(fit.knots.degree),
            "boundary": [float(fit.knots.a), float(fit.knots.b)],
            "interior": fit.knots.interior.tolist(),
        },
    }


def write_fit_json(fit: FitResult, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(fit_result_payload(fit)), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    return path
