"""Batch command line: certify, validate, sweep, prob, cp-bound.

Every run is reproducible from (config, seed): reports carry full provenance
per row, and reruns with any worker count emit byte-identical delimited
files.  Figures are rendered next to the data files unless --no-figures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from types import SimpleNamespace

import numpy as np

from . import report
from .certify import (MODE_BASE, MODE_SMOOTHED_DISCOUNTED, CertRequest,
                      bounded_bin_params, certify_point, discounted_bin_params)
from .config import RunConfig, load_config
from .errors import ConfigError, RegcertError
from .estimation import BinomialObservation, ConfidenceSpec, clopper_pearson_lower
from .models import OutputBounds, batch_evaluate, open_model
from .region import AcceptRegion
from .sampling import NoiseConfig, derive_seed
from .specfun import GaussianRect, gaussian_rect_prob, reg_inc_beta
from .validate import certified_error_curve, validate_point

SWEEP_PARAMETERS = ("P", "beta", "sigma", "n")


def _references(cfg: RunConfig) -> np.ndarray:
    if cfg.reference is not None:
        return cfg.reference
    with open_model(cfg.model, timeout=cfg.timeout) as handle:
        return np.asarray(batch_evaluate(handle, cfg.points))


def _request(cfg: RunConfig, index: int, y_ref: np.ndarray) -> CertRequest:
    region = AcceptRegion(y=y_ref, eps_y=cfg.eps_y, diss=cfg.diss, groups=cfg.groups)
    noise = NoiseConfig(cfg.sigma, cfg.n, derive_seed(cfg.seed, "point", index))
    return CertRequest(
        x=cfg.points[index], region=region, noise=noise, target_p=cfg.target_p,
        conf=ConfidenceSpec(cfg.alpha), bounds=cfg.bounds, tau=cfg.tau,
        beta=cfg.beta, mode=cfg.mode)


def run_certify(cfg: RunConfig, workers: int = 1):
    """Certify every configured point; returns (report rows, certificates)."""
    refs = _references(cfg)
    m = cfg.points.shape[0]

    def one(i: int):
        return certify_point(cfg.model, _request(cfg, i, refs[i]))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            certs = list(pool.map(one, range(m)))
    else:
        # Reuse a single model handle (one child process) for the whole run.
        with open_model(cfg.model, timeout=cfg.timeout) as handle:
            certs = [certify_point(handle, _request(cfg, i, refs[i])) for i in range(m)]

    rows = [
        report.certificate_row(
            i, cfg.points[i], refs[i], cfg.eps_y, certs[i],
            tau=cfg.tau, beta=cfg.beta,
            bounds_lower=cfg.bounds.lower, bounds_upper=cfg.bounds.upper,
            run_seed=cfg.seed)
        for i in range(m)
    ]
    return rows, certs


def _outdir(args, cfg: RunConfig) -> str:
    out = args.out or cfg.out_dir or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.override(seed=args.seed)
    if getattr(args, "mode", None) is not None:
        cfg = cfg.override(mode=args.mode)
    return cfg


def cmd_certify(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args, cfg)
    rows, _ = run_certify(cfg, workers=args.workers)
    report.write_csv(os.path.join(out, "certificates.csv"), report.CERT_COLUMNS, rows)
    report.write_json(os.path.join(out, "certificates.json"), rows)
    if not args.no_figures:
        report.render_certificates_figure(rows, os.path.join(out, "certificates_radius.png"))
    certified = sum(1 for r in rows if not r["abstain"])
    print(f"certified {certified}/{len(rows)} points -> {out}/certificates.csv")
    return 0


def _check_compat(cfg: RunConfig, rows: list[dict]):
    for row in rows:
        if abs(row["sigma"] - cfg.sigma) > 1e-12:
            raise ConfigError(
                f"certificate row {row['index']} was computed with sigma={row['sigma']}, "
                f"config says {cfg.sigma}")
        eps = np.asarray(row["eps_y"], dtype=float)
        if eps.shape != cfg.eps_y.shape or np.any(np.abs(eps - cfg.eps_y) > 1e-12):
            raise ConfigError(
                f"certificate row {row['index']} used eps_y={row['eps_y']}, "
                f"config says {cfg.eps_y.tolist()}")
        if row["n"] != cfg.n:
            raise ConfigError(
                f"certificate row {row['index']} used n={row['n']}, config says {cfg.n}")


def cmd_validate(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args, cfg)
    try:
        rows = report.read_certificates(args.certificates)
        _check_compat(cfg, rows)
    except ConfigError as exc:
        print(f"refusing to run: {exc}", file=sys.stderr)
        return 2

    vspec = cfg.validation
    val_rows = []
    skipped = 0
    for row in rows:
        if row["abstain"]:
            skipped += 1
            continue
        if row["mode"] == MODE_BASE or not row["certified_l_b"]:
            region = AcceptRegion(y=np.asarray(row["y_ref"]), eps_y=np.asarray(row["eps_y"]),
                                  diss=cfg.diss, groups=cfg.groups)
        else:
            # Smoothed certificates are checked against the region they
            # actually certify (the discounted region in discounted mode).
            region = AcceptRegion.from_bounds(row["certified_l_b"],
                                              row["certified_u_b"])
        noise = NoiseConfig(row["sigma"], row["n"], row["point_seed"])
        pv = validate_point(
            cfg.model, np.asarray(row["x"]), region, noise,
            cert_radius=row["radius"], target_p=row["target_p"], vspec=vspec,
            mode="base" if row["mode"] == MODE_BASE else "smoothed",
            seed=derive_seed(cfg.seed, "validate", row["index"]),
            index=row["index"])
        val_rows.append({
            "index": pv.index, "x": list(map(float, pv.x)), "mode": row["mode"],
            "cert_radius": pv.cert_radius, "probe_radius": pv.probe_radius,
            "directions": pv.directions, "trials": pv.trials,
            "min_frequency": pv.min_frequency, "threshold": pv.threshold,
            "passed": pv.passed, "seed": pv.seed,
        })
    if not val_rows:
        print("refusing to run: no non-abstained certificates to validate", file=sys.stderr)
        return 2

    report.write_csv(os.path.join(out, "validation.csv"), report.VALIDATION_COLUMNS, val_rows)
    report.write_json(os.path.join(out, "validation.json"), val_rows)
    if not args.no_figures:
        report.render_validation_figure(
            val_rows, rows[0]["target_p"], os.path.join(out, "validation_frequencies.png"))

    if vspec.radius_grid:
        points = [(np.asarray(r["x"]), np.asarray(r["y_ref"])) for r in rows]
        pseudo = [SimpleNamespace(radius=(0.0 if r["abstain"] else r["radius"]),
                                  abstain=r["abstain"], sigma=r["sigma"],
                                  n=r["n"], seed=r["point_seed"]) for r in rows]
        rep = certified_error_curve(cfg.model, points, pseudo, vspec,
                                    seed=derive_seed(cfg.seed, "curves"))
        curve_rows = [{
            "radius": float(r), "median_error": float(med), "mean_error": float(mean),
            "per_point_errors": [float(v) for v in rep.curves.per_point[:, k]],
        } for k, (r, med, mean) in enumerate(
            zip(rep.curves.radii, rep.curves.median, rep.curves.mean))]
        report.write_csv(os.path.join(out, "error_curves.csv"), report.CURVE_COLUMNS, curve_rows)
        if not args.no_figures:
            report.render_error_curves_figure(
                rep.curves.radii, rep.curves.median, rep.curves.mean,
                os.path.join(out, "validation_error_curves.png"))

    failed = [r["index"] for r in val_rows if not r["passed"]]
    status = "all passed" if not failed else f"FAILED at points {failed}"
    print(f"validated {len(val_rows)} points ({skipped} abstained skipped): {status}")
    return 0 if not failed else 1


def _sweep_override(cfg: RunConfig, parameter: str, value: float) -> RunConfig:
    if parameter == "P":
        return cfg.override(target_p=float(value))
    if parameter == "beta":
        mode = cfg.mode if cfg.mode == MODE_SMOOTHED_DISCOUNTED else MODE_SMOOTHED_DISCOUNTED
        return cfg.override(beta=float(value), mode=mode)
    if parameter == "sigma":
        return cfg.override(sigma=float(value))
    if parameter == "n":
        return cfg.override(n=int(value))
    raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(args, cfg)
    if args.parameter not in SWEEP_PARAMETERS:
        print(f"error: unknown sweep parameter {args.parameter!r}; "
              f"choose from {', '.join(SWEEP_PARAMETERS)}", file=sys.stderr)
        return 1
    try:
        values = [float(tok) for tok in args.values.split(",") if tok.strip()]
    except ValueError as exc:
        print(f"error: bad --values: {exc}", file=sys.stderr)
        return 1
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return 1

    sweep_rows = []
    for value in values:
        sub = _sweep_override(cfg, args.parameter, value)
        rows, certs = run_certify(sub, workers=args.workers)
        live = [c.radius for c in certs if not c.abstain]
        bounds = [c.lower_bound_prob for c in certs if c.lower_bound_prob is not None]
        sweep_rows.append({
            "parameter": args.parameter,
            "value": value,
            "radius_min": min(live) if live else None,
            "bound_min": min(bounds) if bounds else None,
            "per_point_radii": [float(c.radius) for c in certs],
            "abstain_count": sum(1 for c in certs if c.abstain),
        })
    report.write_csv(os.path.join(out, "sweep.csv"), report.SWEEP_COLUMNS, sweep_rows)
    if not args.no_figures:
        report.render_sweep_figure(sweep_rows, args.parameter,
                                   os.path.join(out, "sweep_radius.png"))
    print(f"swept {args.parameter} over {len(values)} values -> {out}/sweep.csv")
    return 0


def _parse_list(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.split(",") if tok.strip()])


def cmd_prob(args) -> int:
    if args.kind == "asymptotic":
        mean = _parse_list(args.mean)
        cov_flat = _parse_list(args.cov)
        t = mean.shape[0]
        if cov_flat.size == t:
            cov = np.diag(cov_flat)
        elif cov_flat.size == t * t:
            cov = cov_flat.reshape(t, t)
        else:
            raise ConfigError(f"--cov needs {t} (diagonal) or {t * t} (full) entries")
        rect = GaussianRect(lower=_parse_list(args.lb), upper=_parse_list(args.ub),
                            mean=mean, covariance=cov)
        res = gaussian_rect_prob(rect, scale=args.n)
        print(json.dumps({"value": res.value, "error": res.error,
                          "regularized": res.regularized,
                          "degenerate": res.degenerate}, sort_keys=True))
        return 0

    fx = _parse_list(args.fx)
    lb, ub = _parse_list(args.lb), _parse_list(args.ub)
    region = AcceptRegion(y=(lb + ub) / 2.0, eps_y=(ub - lb) / 2.0)
    bounds = OutputBounds(_parse_list(args.lower), _parse_list(args.upper))
    if args.kind == "bounded":
        a, b = bounded_bin_params(fx, region, bounds, args.n, args.tau)
    else:
        a, b = discounted_bin_params(fx, region, bounds, args.n, args.beta)
    per_output = [reg_inc_beta(args.p, int(ai), int(bi)) for ai, bi in zip(a, b)]
    print(json.dumps({"bound": min(per_output), "per_output": per_output,
                      "a": [int(v) for v in a], "b": [int(v) for v in b]},
                     sort_keys=True))
    return 0


def cmd_cp_bound(args) -> int:
    bound = clopper_pearson_lower(BinomialObservation(args.successes, args.trials),
                                  ConfidenceSpec(args.alpha))
    print(json.dumps({"lower_bound": bound, "successes": args.successes,
                      "trials": args.trials, "alpha": args.alpha}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regcert",
        description="Certified robustness radii for black-box regression models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel per-point certification")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")

    p = sub.add_parser("certify", help="certify every configured point")
    common(p)
    p.add_argument("--mode", default=None,
                   choices=["base", "smoothed-asymptotic", "smoothed-discounted"])
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("validate", help="empirically check emitted certificates")
    common(p)
    p.add_argument("--certificates", required=True,
                   help="certificates.csv or certificates.json from a certify run")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="re-certify while sweeping one parameter")
    common(p)
    p.add_argument("--mode", default=None,
                   choices=["base", "smoothed-asymptotic", "smoothed-discounted"])
    p.add_argument("--parameter", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("prob", help="one-shot probability evaluation from explicit numbers")
    p.add_argument("--kind", required=True, choices=["asymptotic", "bounded", "discounted"])
    p.add_argument("--mean", help="asymptotic: mean vector, comma-separated")
    p.add_argument("--cov", help="asymptotic: covariance, diagonal or row-major")
    p.add_argument("--fx", help="bounded/discounted: clean prediction vector")
    p.add_argument("--lb", required=True, help="accepted-region lower bounds")
    p.add_argument("--ub", required=True, help="accepted-region upper bounds")
    p.add_argument("--lower", help="hard output lower bounds")
    p.add_argument("--upper", help="hard output upper bounds")
    p.add_argument("--n", type=int, required=True, help="sample budget")
    p.add_argument("--p", type=float, help="base acceptance probability")
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("cp-bound", help="one-shot Clopper-Pearson lower bound")
    p.add_argument("--successes", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.set_defaults(func=cmd_cp_bound)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RegcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
