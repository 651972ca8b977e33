"""Command-line entry point: fit, predict, baseline, score, simulate, report.

Exit codes: 0 success, 2 input error (missing/invalid data files, cell-set
mismatches), 3 numeric abort inside the sampler, 4 configuration error (bad
flags, invalid model code or chain schedule). Identical inputs and seed give
byte-identical outputs. The environment variable SKEWRESERVE_OUTDIR, when
set, overrides the output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .evaluate import chain_diagnostics, score_report
from .mcmc import ChainConfig, ChainOutput, DEFAULT_CHAIN_CONFIG, FitData, NumericalAbortError, run_chain
from .model import ModelSpec, Priors, prior_scenario, spec_from_code
from .reserving import chain_ladder, predictive_draws, reserve_quantiles
from .simulate import SEC31_PRESET, TruthConfig, simulate_triangle, truth_to_json
from .triangle import (
    FUTURE,
    Triangle,
    TriangleError,
    holdout_split,
    load_chan2008,
    log_transform,
    parse_triangle,
    serialize_triangle,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

MODEL_CHOICES = ("n", "st", "s", "vg", "sn", "sst", "ss", "svg")
TARGET_CHOICES = ("holdout", "lower_triangle", "both")


class ConfigError(ValueError):
    """Bad flags or an invalid run configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).resolve().parent,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except Exception:
        pass
    return __version__


def _read_config_file(path: str) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line without '=': {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _resolve(args, name, cfg, default, cast):
    """Flag > config file > default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    if name in cfg:
        try:
            return cast(cfg[name])
        except ValueError as exc:
            raise ConfigError(f"config key {name}: {exc}") from None
    return default


def _outdir(args) -> Path:
    out = os.environ.get("SKEWRESERVE_OUTDIR") or getattr(args, "out", None)
    if not out:
        raise ConfigError("an output directory is required (--out or SKEWRESERVE_OUTDIR)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _zero_policy(text: str):
    if text == "drop":
        return "drop"
    if text.startswith("offset:"):
        try:
            return ("offset", float(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad zero policy {text!r}") from None
    raise ConfigError(f"zero policy must be 'drop' or 'offset:<c>', got {text!r}")


def _load_triangle(args) -> Triangle:
    if args.data == "chan2008":
        return load_chan2008()
    path = Path(args.data)
    if not path.exists():
        raise TriangleError(f"data file not found: {path}")
    return parse_triangle(path.read_text(), format=args.format)


def _priors_from(args, cfg) -> Priors:
    scenario = _resolve(args, "prior_scenario", cfg, None, int)
    if scenario is None:
        return Priors()
    try:
        return prior_scenario(int(scenario))
    except NotImplementedError as exc:
        raise ConfigError(str(exc)) from None


def _provenance(model: str, seed, zero_policy_record) -> dict:
    return {
        "model": model,
        "seed": seed,
        "version": _version_string(),
        "zero_policy": zero_policy_record,
    }


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _fit_one(payload):
    spec, data, config, seed_seq = payload
    rng = np.random.default_rng(seed_seq)
    return run_chain(spec, data, config, rng=rng)


def cmd_fit(args) -> int:
    cfg = _read_config_file(args.config) if args.config else {}
    model = _resolve(args, "model", cfg, None, str)
    if model is None or model not in MODEL_CHOICES:
        raise ConfigError(f"--model must be one of {MODEL_CHOICES}, got {model!r}")
    holdout_k = _resolve(args, "holdout", cfg, 0, int)
    zero_policy = _zero_policy(_resolve(args, "zero_policy", cfg, "drop", str))
    chain_cfg = ChainConfig(
        n_iter=_resolve(args, "iters", cfg, DEFAULT_CHAIN_CONFIG.n_iter, int),
        burn_in=_resolve(args, "burnin", cfg, DEFAULT_CHAIN_CONFIG.burn_in, int),
        thin=_resolve(args, "thin", cfg, DEFAULT_CHAIN_CONFIG.thin, int),
        seed=_resolve(args, "seed", cfg, DEFAULT_CHAIN_CONFIG.seed, int),
        store_latents=bool(args.store_latents),
    )
    n_chains = _resolve(args, "chains", cfg, 1, int)
    if n_chains < 1:
        raise ConfigError("--chains must be >= 1")
    priors = _priors_from(args, cfg)
    spec = spec_from_code(model, priors)

    tri = _load_triangle(args)
    logtri = log_transform(holdout_split(tri, holdout_k), zero_policy)
    data = FitData.from_logtriangle(logtri)

    seed_seqs = np.random.SeedSequence(chain_cfg.seed).spawn(n_chains)
    payloads = [(spec, data, chain_cfg, s) for s in seed_seqs]
    if n_chains == 1:
        chains = [_fit_one(payloads[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(n_chains, os.cpu_count() or 1)) as pool:
            chains = list(pool.map(_fit_one, payloads))

    out = _outdir(args)
    _write(out / "triangle.csv", serialize_triangle(tri))
    diagnostics = {}
    for c, chain in enumerate(chains):
        name = "draws.csv" if n_chains == 1 else f"draws_chain{c}.csv"
        _write(out / name, chain.to_csv())
        diagnostics[f"chain{c}"] = {
            "params": chain_diagnostics(chain),
            "acceptance": chain.acceptance,
        }
        if chain_cfg.store_latents:
            lname = "latents.csv" if n_chains == 1 else f"latents_chain{c}.csv"
            _write(out / lname, _latents_csv(chain))
    if n_chains > 1:
        merged = {}
        for p in diagnostics["chain0"]["params"]:
            ess_sum = sum(
                d["params"][p]["ess"]
                for d in diagnostics.values()
                if not math.isnan(d["params"][p]["ess"])
            )
            merged[p] = {"total_ess": ess_sum}
        diagnostics["merged"] = merged
    meta = {
        "command": "fit",
        "provenance": _provenance(model, chain_cfg.seed, logtri.zero_policy),
        "n": tri.n,
        "origin_year": tri.origin_year,
        "holdout_k": holdout_k,
        "chains": n_chains,
        "chain_config": {
            "n_iter": chain_cfg.n_iter,
            "burn_in": chain_cfg.burn_in,
            "thin": chain_cfg.thin,
            "seed": chain_cfg.seed,
            "store_latents": chain_cfg.store_latents,
        },
        "prior_scenario": _resolve(args, "prior_scenario", cfg, None, int),
    }
    _write(out / "fit.json", _json_dumps(meta))
    _write(out / "diagnostics.json", _json_dumps(diagnostics))
    print(f"fit: {model} on {args.data} -> {out}")
    return EXIT_OK


def _latents_csv(chain: ChainOutput) -> str:
    data = chain.data
    names = [f"T[{i},{j}]" for i, j in zip(data.i_idx, data.j_idx)] + [
        f"lambda[{i},{j}]" for i, j in zip(data.i_idx, data.j_idx)
    ]
    lines = [",".join(names)]
    for k in range(chain.n_draws):
        row = np.concatenate([chain.T[k], chain.lam[k]])
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def load_fit(fit_dir) -> tuple[ChainOutput, Triangle, dict]:
    """Rebuild the ChainOutput (all chains merged) from a fit directory."""
    fit_dir = Path(fit_dir)
    meta_path = fit_dir / "fit.json"
    if not meta_path.exists():
        raise TriangleError(f"not a fit directory (no fit.json): {fit_dir}")
    meta = json.loads(meta_path.read_text())
    tri = parse_triangle((fit_dir / "triangle.csv").read_text())
    zp = meta["provenance"]["zero_policy"]
    policy = zp["policy"] if zp["policy"] == "drop" else ("offset", zp["offset"])
    logtri = log_transform(holdout_split(tri, meta["holdout_k"]), policy)
    data = FitData.from_logtriangle(logtri)
    scenario = meta.get("prior_scenario")
    priors = prior_scenario(scenario) if scenario else Priors()
    spec = spec_from_code(meta["provenance"]["model"], priors)
    cc = meta["chain_config"]
    config = ChainConfig(
        n_iter=cc["n_iter"],
        burn_in=cc["burn_in"],
        thin=cc["thin"],
        seed=cc["seed"],
        store_latents=cc.get("store_latents", False),
    )

    draw_files = sorted(fit_dir.glob("draws_chain*.csv")) or [fit_dir / "draws.csv"]
    stat_names = None
    statics, alphas, betas, gammas = None, [], [], []
    for f in draw_files:
        if not f.exists():
            raise TriangleError(f"missing draws file {f}")
        rows = f.read_text().splitlines()
        header = rows[0].split(",")
        expected = _expected_names(spec, data)
        if header != expected:
            raise TriangleError(
                f"chain/model mismatch: {f.name} columns do not match model "
                f"{meta['provenance']['model']} on this triangle"
            )
        mat = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        n_stat = len(header) - (data.i_max - 1) - data.n_beta - (data.t_max - 1)
        if statics is None:
            stat_names = header[:n_stat]
            statics = {k: [] for k in stat_names}
        pos = 0
        for k in stat_names:
            statics[k].append(mat[:, pos])
            pos += 1
        a = np.zeros((mat.shape[0], data.i_max + 1))
        a[:, 2 : data.i_max + 1] = mat[:, pos : pos + data.i_max - 1]
        pos += data.i_max - 1
        b = mat[:, pos : pos + data.n_beta]
        pos += data.n_beta
        g = np.zeros((mat.shape[0], data.t_max + 1))
        g[:, 2 : data.t_max + 1] = mat[:, pos:]
        alphas.append(a)
        betas.append(b)
        gammas.append(g)
    chain = ChainOutput(
        spec=spec,
        config=config,
        data=data,
        statics={k: np.concatenate(v) for k, v in statics.items()},
        alpha=np.vstack(alphas),
        beta=np.vstack(betas),
        gamma=np.vstack(gammas),
        T=None,
        lam=None,
        acceptance={},
    )
    return chain, tri, meta


def _expected_names(spec: ModelSpec, data: FitData) -> list:
    names = ["mu", "sigma2", "sigma2_alpha", "sigma2_beta", "sigma2_gamma"]
    if spec.skew:
        names.append("rho")
    if spec.has_nu:
        names.append("nu")
    names += [f"alpha[{i}]" for i in range(2, data.i_max + 1)]
    names += data.beta_names()
    names += [f"gamma[{t}]" for t in range(2, data.t_max + 1)]
    return names


# ---------------------------------------------------------------------------
# predict / baseline / score / simulate / report
# ---------------------------------------------------------------------------


def cmd_predict(args) -> int:
    chain, tri, meta = load_fit(args.fit)
    seed = args.seed if args.seed is not None else meta["chain_config"]["seed"] + 1
    rng = np.random.default_rng(seed)
    pred = predictive_draws(chain, tri, args.target, rng=rng)
    out = _outdir(args)
    _write(out / "predictive.csv", pred.to_csv())
    totals = pred.reserve_totals
    summary = {
        "command": "predict",
        "provenance": {**meta["provenance"], "predict_seed": seed},
        "target": args.target,
        "n_draws": int(pred.n_draws),
        "n_cells": len(pred.cells),
        "quantiles": reserve_quantiles(pred),
        "mean": float(totals.mean()),
        "median": float(np.median(totals)),
        "interval95": [float(np.quantile(totals, 0.025)), float(np.quantile(totals, 0.975))],
    }
    _write(out / "reserve.json", _json_dumps(summary))
    print(f"predict: {len(pred.cells)} cells x {pred.n_draws} draws -> {out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _read_config_file(args.config) if args.config else {}
    holdout_k = _resolve(args, "holdout", cfg, 0, int)
    tri = holdout_split(_load_triangle(args), holdout_k)
    result = chain_ladder(tri, args.target)
    out = _outdir(args)
    lines = ["j,factor"] + [f"{j + 1},{repr(float(f))}" for j, f in enumerate(result.factors)]
    _write(out / "factors.csv", "\n".join(lines) + "\n")
    _write(out / "projections.csv", result.projection_csv())
    _write(
        out / "baseline.json",
        _json_dumps(
            {
                "command": "baseline",
                "provenance": _provenance("chain_ladder", None, {"policy": "none"}),
                "target": args.target,
                "holdout_k": holdout_k,
                "total": result.total,
                "reserve_by_row": {str(i): v for i, v in result.reserve_by_row.items()},
            }
        ),
    )
    print(f"baseline: chain ladder total {result.total:.2f} -> {out}")
    return EXIT_OK


def _actuals_for(args, cells) -> dict:
    if args.truth:
        truth = json.loads(Path(args.truth).read_text())
        grid = truth["amounts"]
        return {(i, j): float(grid[i - 1][j - 1]) for i, j in cells}
    if not args.data:
        raise ConfigError("score needs --data or --truth for the actual amounts")
    tri = _load_triangle(args)
    actual = {}
    missing = []
    for i, j in cells:
        tag = tri.mask[i - 1, j - 1]
        if tag == FUTURE or not np.isfinite(tri.amounts[i - 1, j - 1]):
            missing.append((i, j))
        else:
            actual[(i, j)] = float(tri.amounts[i - 1, j - 1])
    if missing:
        raise TriangleError(f"no actual amounts for cells {missing[:8]}")
    return actual


def _read_predictive(run_dir: Path):
    from .reserving import PredictiveDraws

    path = run_dir / "predictive.csv"
    if not path.exists():
        raise TriangleError(f"no predictive.csv in {run_dir}")
    rows = path.read_text().splitlines()[1:]
    by_cell = {}
    for r in rows:
        i, j, k, amount = r.split(",")
        by_cell.setdefault((int(i), int(j)), []).append(float(amount))
    cells = sorted(by_cell)
    amounts = np.column_stack([np.array(by_cell[c]) for c in cells])
    meta = json.loads((run_dir / "reserve.json").read_text())
    return (
        PredictiveDraws(
            cells=cells,
            amounts=amounts,
            z=np.log(amounts),
            reserve_totals=amounts.sum(axis=1),
            target=meta["target"],
        ),
        meta,
    )


def cmd_score(args) -> int:
    out = _outdir(args)
    rankings = []
    for run in args.runs:
        pred, meta = _read_predictive(Path(run))
        actual = _actuals_for(args, pred.cells)
        report = score_report(pred, actual, psi=args.psi, scale=args.scale)
        model = meta["provenance"]["model"]
        _write(out / f"score_{model}.json", report.to_json() + "\n")
        _write(out / f"percell_{model}.csv", report.to_csv())
        rankings.append((model, report.aggregates))
    if len(rankings) > 1:
        rankings.sort(key=lambda r: r[1]["average_crps"])
        lines = ["rank,model,average_is,average_wci,rmspe,average_crps"]
        for rank, (model, agg) in enumerate(rankings, start=1):
            lines.append(
                f"{rank},{model},{agg['average_is']!r},{agg['average_wci']!r},"
                f"{agg['rmspe']!r},{agg['average_crps']!r}"
            )
        _write(out / "ranking.csv", "\n".join(lines) + "\n")
    for model, agg in rankings:
        print(
            f"score {model}: IS={agg['average_is']:.4f} WCI={agg['average_wci']:.4f} "
            f"RMSPE={agg['rmspe']:.4f} CRPS={agg['average_crps']:.4f}"
        )
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _read_config_file(args.config) if args.config else {}
    model = _resolve(args, "model", cfg, "sst", str)
    spec = spec_from_code(model)
    if args.preset:
        if args.preset != "sec31":
            raise ConfigError(f"unknown preset {args.preset!r}")
        tc = SEC31_PRESET
    else:
        required = ("n", "mu", "rho", "sigma2", "sigma2_alpha", "sigma2_beta", "sigma2_gamma")
        values = {k: _resolve(args, k, cfg, None, float) for k in required}
        missing = [k for k, v in values.items() if v is None]
        if missing:
            raise ConfigError(f"simulate needs --preset or explicit {missing}")
        tc = TruthConfig(
            n=int(values["n"]),
            mu=values["mu"],
            rho=values["rho"],
            sigma2=values["sigma2"],
            nu=_resolve(args, "nu", cfg, None, float),
            sigma2_alpha=values["sigma2_alpha"],
            sigma2_beta=values["sigma2_beta"],
            sigma2_gamma=values["sigma2_gamma"],
        )
    seed = _resolve(args, "seed", cfg, 1, int)
    tri, truth = simulate_triangle(tc, spec, seed)
    truth["provenance"] = _provenance(model, seed, {"policy": "none"})
    out = _outdir(args)
    _write(out / "triangle.csv", serialize_triangle(tri))
    _write(out / "truth.json", truth_to_json(truth) + "\n")
    print(f"simulate: {tc.n}x{tc.n} {model} triangle -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    run = Path(args.run)
    if not run.exists():
        raise TriangleError(f"run directory not found: {run}")
    merged = {"command": "report", "run": str(run), "version": _version_string()}
    for name in ("fit.json", "diagnostics.json", "reserve.json", "baseline.json"):
        path = run / name
        if path.exists():
            merged[name.removesuffix(".json")] = json.loads(path.read_text())
    scores = {}
    for path in sorted(run.glob("score_*.json")):
        scores[path.stem.removeprefix("score_")] = json.loads(path.read_text())["aggregates"]
    if scores:
        merged["scores"] = scores
    out = _outdir(args)
    _write(out / "report.json", _json_dumps(merged))
    print(f"report -> {out / 'report.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="skewreserve", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file; flags take precedence")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("fit", help="fit a model by MCMC")
    p.add_argument("--model", choices=MODEL_CHOICES)
    p.add_argument("--data", required=True, help="triangle CSV path or 'chan2008'")
    p.add_argument("--format", default="long-csv", choices=("long-csv", "wide-csv"))
    p.add_argument("--holdout", type=int)
    p.add_argument("--zero-policy", dest="zero_policy")
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--store-latents", action="store_true")
    p.add_argument("--prior-scenario", dest="prior_scenario", type=int)
    add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior-predictive reserves from a fit")
    p.add_argument("--fit", required=True, help="fit output directory")
    p.add_argument("--target", default="lower_triangle", choices=TARGET_CHOICES)
    p.add_argument("--seed", type=int)
    add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("baseline", help="deterministic chain-ladder projection")
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="long-csv", choices=("long-csv", "wide-csv"))
    p.add_argument("--holdout", type=int)
    p.add_argument("--target", default="lower_triangle", choices=TARGET_CHOICES)
    add_common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("score", help="score predictive runs against actuals")
    p.add_argument("runs", nargs="+", help="predict output directories")
    p.add_argument("--data", help="triangle with the actual amounts")
    p.add_argument("--format", default="long-csv", choices=("long-csv", "wide-csv"))
    p.add_argument("--truth", help="truth JSON from simulate (scores future cells)")
    p.add_argument("--psi", type=float, default=0.05)
    p.add_argument("--scale", default="log", choices=("log", "currency"))
    add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("simulate", help="generate a synthetic triangle with truth record")
    p.add_argument("--preset", help="named truth preset (sec31)")
    p.add_argument("--model", choices=MODEL_CHOICES)
    p.add_argument("--seed", type=int)
    for name in ("n", "mu", "rho", "sigma2", "nu", "sigma2-alpha", "sigma2-beta", "sigma2-gamma"):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float)
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="consolidate run artifacts into one JSON")
    p.add_argument("--run", required=True)
    add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbortError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TriangleError, FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
