"""Report emission: delimited files, their JSON mirrors, and rendered figures.

Float formatting goes through repr() everywhere, which is the shortest
round-trip representation; together with the counter-based sampling streams
this is what makes report files byte-identical across reruns and worker
counts.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .certify import ABSTAIN, Certificate
from .errors import ConfigError

CERT_COLUMNS = [
    "index", "x", "y_ref", "eps_y", "mode", "sigma", "n", "alpha", "target_p",
    "tau", "beta", "bounds_lower", "bounds_upper", "pa_lower", "phat",
    "lower_bound_prob", "per_output_radii", "radius", "abstain",
    "accept_counts", "certified_l_b", "certified_u_b", "run_seed",
    "point_seed", "empirical_freq", "passed",
]

VALIDATION_COLUMNS = [
    "index", "x", "mode", "cert_radius", "probe_radius", "directions",
    "trials", "min_frequency", "threshold", "passed", "seed",
]

CURVE_COLUMNS = ["radius", "median_error", "mean_error", "per_point_errors"]

SWEEP_COLUMNS = ["parameter", "value", "radius_min", "bound_min",
                 "per_point_radii", "abstain_count"]


def fmt_float(v) -> str:
    return repr(float(v))


def fmt_vector(vec) -> str:
    return ";".join(fmt_float(v) for v in np.atleast_1d(vec))


def parse_vector(text: str) -> list[float]:
    return [float(tok) for tok in text.split(";")] if text else []


def certificate_row(index: int, x, y_ref, eps_y, cert: Certificate, *,
                    tau: float, beta: float, bounds_lower, bounds_upper,
                    run_seed: int) -> dict:
    return {
        "index": index,
        "x": list(map(float, np.atleast_1d(x))),
        "y_ref": list(map(float, np.atleast_1d(y_ref))),
        "eps_y": list(map(float, np.atleast_1d(eps_y))),
        "mode": cert.mode,
        "sigma": cert.sigma,
        "n": cert.n,
        "alpha": cert.alpha,
        "target_p": cert.target_p,
        "tau": tau,
        "beta": beta,
        "bounds_lower": list(map(float, np.atleast_1d(bounds_lower))),
        "bounds_upper": list(map(float, np.atleast_1d(bounds_upper))),
        "pa_lower": list(map(float, cert.pa_lower)),
        "phat": list(map(float, cert.phat)) if cert.phat is not None else None,
        "lower_bound_prob": cert.lower_bound_prob,
        "per_output_radii": list(map(float, cert.per_output_radii)),
        "radius": ABSTAIN if cert.abstain else float(cert.radius),
        "abstain": cert.abstain,
        "accept_counts": ([int(c) for c in cert.accept_counts]
                          if cert.accept_counts is not None else None),
        "certified_l_b": (list(map(float, cert.certified_l_b))
                          if cert.certified_l_b is not None else None),
        "certified_u_b": (list(map(float, cert.certified_u_b))
                          if cert.certified_u_b is not None else None),
        "run_seed": run_seed,
        "point_seed": cert.seed,
        "empirical_freq": None,
        "passed": None,
    }


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return fmt_float(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(_cell(v) for v in value)
    return str(value)


def write_csv(path: str, columns: list[str], rows: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in columns])


def write_json(path: str, rows: list[dict]):
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_certificates(path: str) -> list[dict]:
    """Load certificate rows from either the CSV or the JSON mirror."""
    if not os.path.exists(path):
        raise ConfigError(f"certificate file not found: {path}")
    if path.endswith(".json"):
        with open(path) as fh:
            rows = json.load(fh)
        if not isinstance(rows, list) or not rows:
            raise ConfigError(f"certificate file {path} holds no rows")
        return rows
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        raw_rows = list(reader)
    if not raw_rows:
        raise ConfigError(f"certificate file {path} holds no rows")
    rows = []
    for raw in raw_rows:
        rows.append({
            "index": int(raw["index"]),
            "x": parse_vector(raw["x"]),
            "y_ref": parse_vector(raw["y_ref"]),
            "eps_y": parse_vector(raw["eps_y"]),
            "mode": raw["mode"],
            "sigma": float(raw["sigma"]),
            "n": int(raw["n"]),
            "alpha": float(raw["alpha"]),
            "target_p": float(raw["target_p"]),
            "tau": float(raw["tau"]),
            "beta": float(raw["beta"]),
            "bounds_lower": parse_vector(raw["bounds_lower"]),
            "bounds_upper": parse_vector(raw["bounds_upper"]),
            "pa_lower": parse_vector(raw["pa_lower"]),
            "phat": parse_vector(raw["phat"]) or None,
            "lower_bound_prob": float(raw["lower_bound_prob"]) if raw["lower_bound_prob"] else None,
            "per_output_radii": parse_vector(raw["per_output_radii"]),
            "radius": ABSTAIN if raw["radius"] == ABSTAIN else float(raw["radius"]),
            "abstain": raw["abstain"] == "1",
            "accept_counts": [int(float(v)) for v in parse_vector(raw["accept_counts"])],
            "certified_l_b": parse_vector(raw["certified_l_b"]),
            "certified_u_b": parse_vector(raw["certified_u_b"]),
            "run_seed": int(raw["run_seed"]),
            "point_seed": int(raw["point_seed"]),
        })
    return rows


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def render_certificates_figure(rows: list[dict], path: str):
    """Radius map: a 2-D scatter when inputs are planar, bars otherwise."""
    xs = np.array([row["x"] for row in rows], dtype=float)
    radii = np.array([0.0 if row["abstain"] else row["radius"] for row in rows])
    abstained = np.array([row["abstain"] for row in rows], dtype=bool)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    if xs.shape[1] == 2:
        ok = ~abstained
        if np.any(ok):
            sc = ax.scatter(xs[ok, 0], xs[ok, 1], c=radii[ok], s=220,
                            cmap="viridis", edgecolors="k", linewidths=0.5)
            fig.colorbar(sc, ax=ax, label="certified radius")
        if np.any(abstained):
            ax.scatter(xs[abstained, 0], xs[abstained, 1], marker="x", s=120,
                       c="red", label="ABSTAIN")
            ax.legend(loc="upper right")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    else:
        idx = np.arange(len(rows))
        colors = np.where(abstained, "red", "tab:blue")
        ax.bar(idx, radii, color=colors)
        ax.set_xlabel("point index")
        ax.set_ylabel("certified radius")
    ax.set_title(f"certified radii ({rows[0]['mode']})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_validation_figure(rows: list[dict], target_p: float, path: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    idx = np.arange(len(rows))
    freqs = np.array([row["min_frequency"] for row in rows])
    thresholds = np.array([row["threshold"] for row in rows])
    colors = ["tab:green" if row["passed"] else "tab:red" for row in rows]
    ax.bar(idx, freqs, color=colors)
    if len(rows):
        ax.axhline(thresholds[0], color="k", linestyle="--",
                   label="pass threshold (3-sigma slack)")
    ax.axhline(target_p, color="tab:orange", linestyle=":", label="target P")
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("point index")
    ax.set_ylabel("worst empirical acceptance frequency")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_error_curves_figure(radii, median, mean, path: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(radii, median, marker="o", label="certified median error")
    ax.plot(radii, mean, marker="s", label="certified mean error")
    ax.set_xlabel("probe radius r")
    ax.set_ylabel("penalized error e_K")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figure(rows: list[dict], parameter: str, path: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    values = [row["value"] for row in rows]
    radii = [row["radius_min"] if row["radius_min"] is not None else np.nan
             for row in rows]
    ax.plot(values, radii, marker="o", label="min certified radius")
    ax.set_xlabel(parameter)
    ax.set_ylabel("min certified radius")
    bounds = [row["bound_min"] for row in rows]
    if any(b is not None for b in bounds):
        ax2 = ax.twinx()
        ax2.plot(values, [b if b is not None else np.nan for b in bounds],
                 marker="s", color="tab:red", label="acceptance lower bound")
        ax2.set_ylabel("acceptance lower bound")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
