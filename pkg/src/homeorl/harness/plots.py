"""SVG figures rendered purely from an experiment's CSV outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from homeorl.drives import CONDITIONS  # noqa: E402
from homeorl.harness.evaluate import read_rows  # noqa: E402
from homeorl.harness.train import mean_ci  # noqa: E402

ORDER = ["none", "cognitive", "affective", "full"]
COLORS = {"none": "#7f7f7f", "cognitive": "#1f77b4", "affective": "#d62728", "full": "#9467bd"}

plt.rcParams["svg.hashsalt"] = "homeorl"


class MetricsError(ValueError):
    pass


def _read_csv(path: Path, required: list[str]) -> list[dict]:
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except (OSError, csv.Error) as exc:
        raise MetricsError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in required if c not in header]
    if missing:
        raise MetricsError(f"{path} is missing columns {missing}")
    if not rows:
        raise MetricsError(f"{path} has no rows")
    return rows


def _float(value: str, path: Path) -> float:
    if value == "":
        return float("nan")
    try:
        return float(value)
    except ValueError:
        raise MetricsError(f"{path}: non-numeric value {value!r}") from None


def find_conditions(input_dir: Path) -> list[str]:
    found = [c for c in CONDITIONS if (input_dir / c / "learning_curve.csv").exists()]
    return sorted(found, key=ORDER.index)


def plot_learning_curves(input_dir: Path, conditions: list[str], out: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for c in conditions:
        path = input_dir / c / "learning_curve.csv"
        rows = _read_csv(path, ["timestep", "mean", "ci_low", "ci_high"])
        ts = np.array([_float(r["timestep"], path) for r in rows])
        m = np.array([_float(r["mean"], path) for r in rows])
        lo = np.array([_float(r["ci_low"], path) for r in rows])
        hi = np.array([_float(r["ci_high"], path) for r in rows])
        ax.plot(ts, m, color=COLORS[c], label=c.capitalize())
        ax.fill_between(ts, lo, hi, color=COLORS[c], alpha=0.2, linewidth=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("episode duration")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def plot_summary(input_dir: Path, conditions: list[str], out: Path) -> Path:
    per_cond = {}
    for c in conditions:
        path = input_dir / c / "summary.csv"
        rows = _read_csv(path, ["seed"])
        keys = [k for k in rows[0] if k != "seed"]
        per_cond[c] = {k: [_float(r[k], path) for r in rows] for k in keys}
    keys = list(next(iter(per_cond.values())))
    fig, axes = plt.subplots(1, len(keys), figsize=(2.6 * len(keys), 3.0), squeeze=False)
    for ax, k in zip(axes[0], keys):
        for j, c in enumerate(conditions):
            m, lo, hi = mean_ci(per_cond[c][k])
            err = None if np.isnan(lo) else [[m - lo], [hi - m]]
            ax.bar(j, m, color=COLORS[c], yerr=err, capsize=3)
        ax.set_xticks(range(len(conditions)), [c.capitalize() for c in conditions], rotation=45)
        ax.set_title(k.replace("_", " "), fontsize=9)
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def plot_intake_histograms(input_dir: Path, conditions: list[str], out: Path, bins: int = 20) -> Path | None:
    data = {}
    for c in conditions:
        values = []
        for path in sorted((input_dir / c).glob("seed*/histogram_run.csv")):
            values += [float(r["partner_energy_at_intake"]) for r in read_rows(path)
                       if r["partner_energy_at_intake"] != ""]
        if values:
            data[c] = values
    if not data:
        return None
    fig, axes = plt.subplots(1, len(data), figsize=(3.0 * len(data), 2.8), squeeze=False, sharey=True)
    for ax, (c, values) in zip(axes[0], data.items()):
        ax.hist(values, bins=bins, range=(-1, 1), color=COLORS[c])
        ax.set_title(c.capitalize())
        ax.set_xlabel("partner energy at ingestion")
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def emit_plots(input_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    input_dir = Path(input_dir)
    out_dir = input_dir / "figures" if out_dir is None else Path(out_dir)
    conditions = find_conditions(input_dir)
    if not conditions:
        raise MetricsError(f"no learning_curve.csv found under {input_dir}/<condition>/")
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [
        plot_learning_curves(input_dir, conditions, out_dir / "learning_curves.svg"),
        plot_summary(input_dir, conditions, out_dir / "summary.svg"),
    ]
    hist = plot_intake_histograms(input_dir, conditions, out_dir / "intake_histograms.svg")
    if hist is not None:
        outputs.append(hist)
    return outputs
