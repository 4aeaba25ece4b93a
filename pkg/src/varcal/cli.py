"""Command-line front end: ingest -> forecast -> calibrate -> evaluate
-> report.

A run is described by a flat manifest: built-in defaults, optionally
overlaid by --config (flat JSON object), overlaid by explicit flags.
Outputs land in one directory per experiment; rerunning with the same
manifest and seed reproduces every byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, backend, calibrators, evaluation, synth
from .data import RunConfig, SplitConfig, load_returns_csv, split, to_losses
from .errors import ConfigError, DataError, VarcalError
from .forecasters import GbdtParams, gbdt_quantile_forecast, hs_forecast, load_external_forecasts
from .regime import VALID_FROM, compute_embedding, compute_raw_features, assign_vol_quintiles
from .tuning import GridSpec, grid_search

MANIFEST_DEFAULTS: dict = {
    "data": None,
    "date_col": "date",
    "return_col": "ret",
    "train_end": None,
    "val_end": None,
    "alpha": 0.01,
    "methods": "swc,twc,rwc,aci",
    "base": "hs",
    "hs_window": 252,
    "gbdt_rounds": 200,
    "gbdt_depth": 3,
    "gbdt_lr": 0.05,
    "gbdt_window": 1008,
    "gbdt_refit_every": 21,
    "forecasts_file": None,
    "standardize_on": "pretest",
    "m": 252,
    "lam": 0.005,
    "h": 1.0,
    "n_min": 0,
    "correction": False,
    "aci_gamma": 0.005,
    "aci_m": 252,
    "aci_alpha_min": 1e-4,
    "aci_alpha_max": 0.2,
    "seed": 0,
    "out": "out",
}

_METHOD_KEYS = ("swc", "twc", "rwc", "aci")


def _parse_float(s: str) -> float:
    v = float(s)
    return v


def _parse_h(s: str) -> float:
    if s.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(s)


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(_parse_h(tok) for tok in s.split(",") if tok.strip())


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in s.split(",") if tok.strip())


def resolve_manifest(args: argparse.Namespace) -> dict:
    man = dict(MANIFEST_DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot open config {cfg_path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {cfg_path} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {cfg_path} must hold a flat JSON object")
        unknown = set(loaded) - set(MANIFEST_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        man.update(loaded)
    for key in MANIFEST_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            man[key] = val
    return man


def _methods_of(man: dict) -> list[str]:
    methods = [tok.strip().lower() for tok in str(man["methods"]).split(",") if tok.strip()]
    if not methods:
        raise ConfigError("methods list is empty")
    for mname in methods:
        if mname not in _METHOD_KEYS:
            raise ConfigError(f"unknown method {mname!r}; choose from {_METHOD_KEYS}")
    if len(set(methods)) != len(methods):
        raise ConfigError("duplicate method in list")
    return methods


def _base_config(man: dict, method: str) -> RunConfig:
    m = int(man["aci_m"]) if method == "aci" else int(man["m"])
    return RunConfig(
        alpha=float(man["alpha"]),
        m=m,
        lam=float(man["lam"]),
        h=_parse_h(str(man["h"])),
        n_min=int(man["n_min"]),
        finite_sample_correction=bool(man["correction"]),
        aci_gamma=float(man["aci_gamma"]),
        aci_alpha_min=float(man["aci_alpha_min"]),
        aci_alpha_max=float(man["aci_alpha_max"]),
        base=str(man["base"]),
        calibrator=method,
        rng_seed=int(man["seed"]),
    )


def _load_series(man: dict):
    if not man["data"]:
        raise ConfigError("--data is required")
    if not man["train_end"] or not man["val_end"]:
        raise ConfigError("--train-end and --val-end are required")
    rs = load_returns_csv(str(man["data"]), str(man["date_col"]), str(man["return_col"]))
    ls = to_losses(rs)
    ranges = split(rs.dates, SplitConfig(str(man["train_end"]), str(man["val_end"])))
    return rs, ls, ranges


def _build_forecasts(man: dict, rs, ls, eval_range):
    base = str(man["base"]).lower()
    alpha = float(man["alpha"])
    if base == "hs":
        return hs_forecast(ls, alpha, int(man["hs_window"]))
    if base == "gbdt":
        params = GbdtParams(
            rounds=int(man["gbdt_rounds"]),
            depth=int(man["gbdt_depth"]),
            learning_rate=float(man["gbdt_lr"]),
            window=int(man["gbdt_window"]),
            refit_every=int(man["gbdt_refit_every"]),
        )
        return gbdt_quantile_forecast(ls, rs.returns, alpha, params)
    if base == "external":
        if not man["forecasts_file"]:
            raise ConfigError("--forecasts-file is required for base=external")
        return load_external_forecasts(str(man["forecasts_file"]), rs.dates, eval_range)
    raise ConfigError(f"unknown base forecaster {base!r}")


def _embedding_fit_range(man: dict, ranges) -> tuple[int, int]:
    mode = str(man["standardize_on"]).lower()
    if mode == "pretest":
        boundary = ranges.test[0]
    elif mode == "train":
        boundary = ranges.train[1]
    else:
        raise ConfigError("--standardize-on must be 'train' or 'pretest'")
    if boundary - VALID_FROM < 2:
        raise DataError("not enough pre-test history to standardize the regime features")
    return (VALID_FROM, boundary)


def _quintile_labels(raw_features: np.ndarray, positions: np.ndarray) -> np.ndarray:
    rv = raw_features[positions, 0]
    if np.any(np.isnan(rv)):
        raise DataError("volatility feature undefined on some evaluated dates")
    return assign_vol_quintiles(rv)


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_sanitize(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x: float, places: int = 4) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{x:.{places}f}"


def _write_tables(outdir: str, reports: list) -> None:
    import csv

    with open(os.path.join(outdir, "table1.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["base", "method", "n", "exceed_count", "exceedance_pct", "avg_var_bps"])
        for r in reports:
            w.writerow([r.base, r.method, r.n, r.exceed_count, _fmt(r.exceedance_pct, 2), _fmt(r.avg_var_bps, 1)])

    with open(os.path.join(outdir, "table2.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["base", "method"] + [f"q{i}_pct" for i in range(1, 6)] + [f"n{i}" for i in range(1, 6)])
        for r in reports:
            w.writerow(
                [r.base, r.method]
                + [_fmt(v, 2) for v in r.per_quintile_pct]
                + [int(s) for s in r.quintile_sizes]
            )

    with open(os.path.join(outdir, "table3.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["base", "method", "reg_mae_pp", "reg_maxdev_pp", "reg_std_pp", "median_n_eff", "p10_n_eff", "median_tau", "p90_tau"]
        )
        for r in reports:
            d = r.weight_diag
            w.writerow(
                [
                    r.base,
                    r.method,
                    _fmt(r.reg_mae_pp, 2),
                    _fmt(r.reg_maxdev_pp, 2),
                    _fmt(r.reg_std_pp, 2),
                    _fmt(d["median_n_eff"], 1) if d["median_n_eff"] is not None else "",
                    _fmt(d["p10_n_eff"], 1) if d["p10_n_eff"] is not None else "",
                    _fmt(d["median_tau"], 1) if d["median_tau"] is not None else "",
                    _fmt(d["p90_tau"], 1) if d["p90_tau"] is not None else "",
                ]
            )

    with open(os.path.join(outdir, "table5.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["base", "method", "exceed_count", "exceedance_pct", "lr_uc", "p_uc", "lr_ind", "p_ind", "lr_cc", "p_cc"]
        )
        for r in reports:
            w.writerow(
                [
                    r.base,
                    r.method,
                    r.exceed_count,
                    _fmt(r.exceedance_pct, 2),
                    _fmt(r.lr_uc, 2),
                    evaluation.format_pvalue(r.p_uc),
                    _fmt(r.lr_ind, 2),
                    evaluation.format_pvalue(r.p_ind),
                    _fmt(r.lr_cc, 2),
                    evaluation.format_pvalue(r.p_cc),
                ]
            )


def _write_rolling(outdir: str, base: str, reports: list) -> None:
    import csv

    dates = sorted({d for r in reports for d in r.rolling_dates})
    per_method = {r.method: dict(zip(r.rolling_dates, r.rolling_rates)) for r in reports}
    with open(os.path.join(outdir, f"rolling_{base}.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date"] + [r.method for r in reports])
        for d in dates:
            row = [d]
            for r in reports:
                v = per_method[r.method].get(d)
                row.append(repr(float(v)) if v is not None else "")
            w.writerow(row)


def _load_tuned(outdir: str | None, method: str) -> dict:
    if not outdir:
        return {}
    path = os.path.join(outdir, f"selected_{method}.json")
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        payload = json.load(fh)
    params = payload.get("params", {})
    allowed = {"m", "lam", "h", "aci_gamma", "n_min"}
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"{path}: unexpected tuned keys {sorted(unknown)}")
    return params


def cmd_run(args: argparse.Namespace) -> int:
    man = resolve_manifest(args)
    methods = _methods_of(man)
    rs, ls, ranges = _load_series(man)
    test_range = ranges.test
    forecasts = _build_forecasts(man, rs, ls, test_range)
    raw_features = compute_raw_features(rs.returns)
    embedding = None
    if "rwc" in methods:
        embedding = compute_embedding(rs.returns, _embedding_fit_range(man, ranges))

    outdir = str(man["out"])
    os.makedirs(outdir, exist_ok=True)

    reports = []
    used_params: dict[str, dict] = {}
    for method in ["base"] + methods:
        cfg = _base_config(man, method)
        if method != "base":
            tuned = _load_tuned(getattr(args, "tuned_dir", None), method)
            if tuned:
                cfg = cfg.with_updates(**tuned)
                used_params[method] = tuned
        bs = calibrators.run_calibrator(method, ls, forecasts, cfg, test_range, embedding)
        calibrators.write_bounds_csv(bs, os.path.join(outdir, f"bounds_{method}.csv"))
        positions = np.arange(test_range[1] - len(bs), test_range[1])
        labels = _quintile_labels(raw_features, positions)
        rep = evaluation.build_report(bs, cfg.alpha, labels, method=method, base=str(man["base"]))
        _write_json(os.path.join(outdir, f"report_{method}.json"), rep.to_dict())
        reports.append(rep)

    _write_tables(outdir, reports)
    _write_rolling(outdir, str(man["base"]), reports)

    lock = dict(man)
    lock["resolved_methods"] = methods
    lock["tuned_params"] = used_params
    lock["backend"] = backend.BACKEND_NAME
    lock["version"] = __version__
    lock["n_test"] = test_range[1] - test_range[0]
    _write_json(os.path.join(outdir, "manifest.lock.json"), lock)
    print(f"wrote {os.path.normpath(outdir)}/ ({len(reports)} reports, backend={backend.BACKEND_NAME})")
    return 0


def cmd_tune(args: argparse.Namespace) -> int:
    man = resolve_manifest(args)
    methods = _methods_of(man)
    rs, ls, ranges = _load_series(man)
    val_range = ranges.val
    forecasts = _build_forecasts(man, rs, ls, val_range)
    embedding = None
    if "rwc" in methods:
        # during tuning the validation period plays the role of the test
        # period, so standardization may only see training rows
        boundary = ranges.train[1]
        if boundary - VALID_FROM < 2:
            raise DataError("training segment too short to standardize regime features")
        embedding = compute_embedding(rs.returns, (VALID_FROM, boundary))

    grid = GridSpec(
        m_grid=args.m_grid or (252, 504, 756),
        lambda_grid=args.lambda_grid or (0.002, 0.005, 0.01),
        h_grid=args.h_grid or (0.5, 1.0, 2.0),
        gamma_grid=args.gamma_grid or (0.002, 0.005, 0.01, 0.02),
    )

    outdir = str(man["out"])
    os.makedirs(outdir, exist_ok=True)
    import csv

    for method in methods:
        cfg = _base_config(man, method)
        result = grid_search(method, grid, ls, forecasts, cfg, val_range, embedding)
        with open(os.path.join(outdir, f"candidates_{method}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "lam", "h", "aci_gamma", "val_exceedance", "val_rollmax", "objective"])
            for row in result.rows:
                p = row.params
                w.writerow(
                    [
                        p.get("m", ""),
                        p.get("lam", ""),
                        p.get("h", ""),
                        p.get("aci_gamma", ""),
                        repr(row.val_exceedance),
                        repr(row.val_rollmax),
                        repr(row.objective),
                    ]
                )
        _write_json(
            os.path.join(outdir, f"selected_{method}.json"),
            {"method": method, "params": result.selected},
        )
        print(f"{method}: selected {result.selected} from {len(result.rows)} candidates")
    return 0


def cmd_sweep_bandwidth(args: argparse.Namespace) -> int:
    man = resolve_manifest(args)
    rs, ls, ranges = _load_series(man)
    test_range = ranges.test
    forecasts = _build_forecasts(man, rs, ls, test_range)
    embedding = compute_embedding(rs.returns, _embedding_fit_range(man, ranges))
    raw_features = compute_raw_features(rs.returns)
    h_list = args.h_list or (0.5, 1.0, 2.0, math.inf)

    outdir = str(man["out"])
    os.makedirs(outdir, exist_ok=True)
    import csv

    with open(os.path.join(outdir, "table4.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["h", "exceedance_pct", "avg_var_bps", "top_quintile_pct", "median_n_eff", "p10_n_eff", "fallback_steps"]
        )
        for h in h_list:
            cfg = _base_config(man, "rwc").with_updates(h=h)
            bs = calibrators.run_rwc(ls, forecasts, cfg, test_range, embedding)
            positions = np.arange(test_range[1] - len(bs), test_range[1])
            labels = _quintile_labels(raw_features, positions)
            rep = evaluation.build_report(bs, cfg.alpha, labels, method="rwc", base=str(man["base"]))
            d = rep.weight_diag
            w.writerow(
                [
                    "inf" if math.isinf(h) else repr(float(h)),
                    _fmt(rep.exceedance_pct, 2),
                    _fmt(rep.avg_var_bps, 1),
                    _fmt(rep.per_quintile_pct[-1], 2),
                    _fmt(d["median_n_eff"], 1),
                    _fmt(d["p10_n_eff"], 1),
                    rep.fallback_steps,
                ]
            )
    print(f"wrote {os.path.join(os.path.normpath(outdir), 'table4.csv')} ({len(h_list)} bandwidths)")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    sigma = args.sigma or (0.008, 0.025)
    mu = args.mu or tuple(0.0 for _ in sigma)
    if len(mu) != len(sigma):
        raise ConfigError("--mu and --sigma must have the same length")
    k = len(sigma)
    if k == 1:
        transition = ((1.0,),)
    elif k == 2:
        p0, p1 = args.persist or (0.98, 0.95)
        transition = ((p0, 1.0 - p0), (1.0 - p1, p1))
    else:
        raise ConfigError("the CLI builds 1- or 2-state models; use the library API for more states")
    model = synth.RegimeModel(sigma=tuple(sigma), mu=tuple(mu), transition=transition, n=args.n, seed=args.seed)
    sim = synth.simulate(model)
    dates = synth.business_dates(args.n, args.start_date)

    import csv

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "ret"])
        for d, r in zip(dates, sim.returns):
            w.writerow([d, repr(float(r))])
    print(f"wrote {args.out} ({args.n} rows, seed={args.seed})")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    bs = calibrators.read_bounds_csv(args.bounds)
    rs = load_returns_csv(args.data, args.date_col or "date", args.return_col or "ret")
    raw_features = compute_raw_features(rs.returns)
    index_of = {d: i for i, d in enumerate(rs.dates)}
    try:
        positions = np.array([index_of[d] for d in bs.dates], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"bounds date {exc.args[0]} not present in the return series") from None
    labels = _quintile_labels(raw_features, positions)
    rep = evaluation.build_report(bs, args.alpha, labels, method=args.method, base=args.base)
    payload = rep.to_dict()
    if args.out:
        _write_json(args.out, payload)
        print(f"wrote {args.out}")
    else:
        json.dump(_sanitize(payload), sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _add_manifest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON manifest; flags override its keys")
    p.add_argument("--data", help="returns CSV path")
    p.add_argument("--date-col", dest="date_col")
    p.add_argument("--return-col", dest="return_col")
    p.add_argument("--train-end", dest="train_end", help="inclusive last training date (ISO)")
    p.add_argument("--val-end", dest="val_end", help="inclusive last validation date (ISO)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--methods", help="comma list from swc,twc,rwc,aci")
    p.add_argument("--base", choices=["hs", "gbdt", "external"])
    p.add_argument("--hs-window", dest="hs_window", type=int)
    p.add_argument("--gbdt-rounds", dest="gbdt_rounds", type=int)
    p.add_argument("--gbdt-depth", dest="gbdt_depth", type=int)
    p.add_argument("--gbdt-lr", dest="gbdt_lr", type=float)
    p.add_argument("--gbdt-window", dest="gbdt_window", type=int)
    p.add_argument("--gbdt-refit-every", dest="gbdt_refit_every", type=int)
    p.add_argument("--forecasts-file", dest="forecasts_file")
    p.add_argument("--standardize-on", dest="standardize_on", choices=["train", "pretest"])
    p.add_argument("--m", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--h", type=_parse_h)
    p.add_argument("--n-min", dest="n_min", type=int)
    p.add_argument("--finite-sample-correction", dest="correction", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--aci-gamma", dest="aci_gamma", type=float)
    p.add_argument("--aci-m", dest="aci_m", type=int)
    p.add_argument("--aci-alpha-min", dest="aci_alpha_min", type=float)
    p.add_argument("--aci-alpha-max", dest="aci_alpha_max", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varcal",
        description="Conformal calibration of one-step VaR forecasts with regime weighting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="calibrate on the test period and write reports")
    _add_manifest_flags(p_run)
    p_run.add_argument("--tuned-dir", dest="tuned_dir", help="directory holding selected_<method>.json files")
    p_run.set_defaults(func=cmd_run)

    p_tune = sub.add_parser("tune", help="grid search on the validation period")
    _add_manifest_flags(p_tune)
    p_tune.add_argument("--m-grid", dest="m_grid", type=_int_list)
    p_tune.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list)
    p_tune.add_argument("--h-grid", dest="h_grid", type=_float_list)
    p_tune.add_argument("--gamma-grid", dest="gamma_grid", type=_float_list)
    p_tune.set_defaults(func=cmd_tune)

    p_sweep = sub.add_parser("sweep-bandwidth", help="rwc bandwidth ablation at fixed (m, lambda)")
    _add_manifest_flags(p_sweep)
    p_sweep.add_argument("--h-list", dest="h_list", type=_float_list, help="comma list, 'inf' allowed")
    p_sweep.set_defaults(func=cmd_sweep_bandwidth)

    p_sim = sub.add_parser("simulate", help="write a synthetic regime-switching returns CSV")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--sigma", type=_float_list, help="per-state daily vols, e.g. 0.008,0.025")
    p_sim.add_argument("--mu", type=_float_list, help="per-state daily means")
    p_sim.add_argument("--persist", type=_float_list, help="stay probabilities for 2-state models")
    p_sim.add_argument("--start-date", dest="start_date", default="1990-01-02")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="rebuild a report from an existing bounds CSV")
    p_rep.add_argument("--bounds", required=True)
    p_rep.add_argument("--data", required=True)
    p_rep.add_argument("--date-col", dest="date_col")
    p_rep.add_argument("--return-col", dest="return_col")
    p_rep.add_argument("--alpha", type=float, default=0.01)
    p_rep.add_argument("--method", default="unknown")
    p_rep.add_argument("--base", default="unknown")
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VarcalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        # downstream reader (head, less) closed stdout; not our error
        try:
            sys.stdout.close()
        except OSError:
            pass
        return 0


if __name__ == "__main__":
    sys.exit(main())
