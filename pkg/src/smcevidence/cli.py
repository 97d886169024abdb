"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 runtime degeneracy (degenerate
weights or too many forced micro-steps).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import clt, config, datasets, output
from .config import ConfigError
from .estimators import NEWTON_COTES, QuadratureRule
from .particles import DegenerateWeightsError, TransformDomainError, make_rng
from .samplers import (MicroStepCapError, path_label, run_algorithm, run_replicates,
                       summarize_replicates)

RUNTIME_ERRORS = (DegenerateWeightsError, MicroStepCapError, TransformDomainError)


def _out_dir(args, cfg) -> Path:
    out = args.out or os.environ.get("SMCEVIDENCE_OUT") or cfg.get("out") or "results"
    return Path(out)


def _algorithm_kwargs(cfg):
    s = cfg.get("sampler", {})
    if s.get("algorithm") == "smc3":
        return {"pair": tuple(s["pair"]), "start": None, "fresh": s.get("fresh", True)}
    return {}


def _model_for(cfg, run):
    model = config.build_model(cfg)
    if run.algorithm in ("smc2", "ais") and len(model.model_ids) != 1:
        raise ConfigError("'model.r' must name a single model for smc2/ais")
    return model


def cmd_run(args, cfg):
    run = config.build_run_config(cfg, args.seed)
    model = _model_for(cfg, run)
    out = _out_dir(args, cfg)
    result = run_algorithm(model, run, 0, **_algorithm_kwargs(cfg))
    output.write_run(out, result)
    output.write_json(out / "config.resolved.json", config.resolved(cfg, run, run.seed))
    for e in result.estimates:
        print(f"{e.estimator}\t{e.log_evidence:.6f}\tT={e.realized_T}")
    return 0


def _replicates(model, run, R, threads, cfg):
    kw = _algorithm_kwargs(cfg)
    if cfg.get("identical_replicates", False):
        # every replicate reuses stream 0: a determinism check
        results = [run_algorithm(model, run, 0, **kw) for _ in range(R)]
        return results, summarize_replicates(results)
    return run_replicates(model, run, R, threads=threads, **kw)


def cmd_replicate(args, cfg):
    run = config.build_run_config(cfg, args.seed)
    model = _model_for(cfg, run)
    R = args.replicates or cfg.get("replicates", 20)
    if R < 2:
        raise ConfigError("'replicates' must be at least 2")
    out = _out_dir(args, cfg)
    results, summary = _replicates(model, run, R, args.threads, cfg)
    output.write_rows(out / "summary.csv", output.SUMMARY_HEADER,
                      [[k, m, s, n] for k, (m, s, n) in summary.items()])
    rows = [[i] + output.estimate_row(e) for i, r in enumerate(results) for e in r.estimates]
    output.write_rows(out / "replicates.csv", ["replicate"] + output.ESTIMATES_HEADER, rows)
    snap = config.resolved(cfg, run, run.seed)
    snap["replicates"] = R
    output.write_json(out / "config.resolved.json", snap)
    for k, (m, s, n) in summary.items():
        print(f"{k}\t{m:.6f} +- {s:.6f}\tR={n}")
    return 0


def cmd_bias_table(args, cfg):
    bt = cfg.get("bias_table", {})
    kinds = bt.get("rules", list(NEWTON_COTES))
    refs = bt.get("refinements", [1, 2, 4, 8])
    for k in kinds:
        if k not in NEWTON_COTES:
            raise ConfigError(f"'bias_table.rules' entry {k!r} is not a known rule")
    rules = tuple(QuadratureRule(k, int(r)) for k in kinds for r in refs)
    run = replace(config.build_run_config(cfg, args.seed), algorithm="smc2", path_rules=rules)
    model = _model_for(cfg, run)
    reference = bt.get("reference", "analytic")
    if reference == "analytic":
        reference = model.log_evidence(model.model_ids[0])
        if reference is None:
            raise ConfigError("'bias_table.reference' is analytic but the model has no "
                              "closed-form evidence")
    elif isinstance(reference, str):
        raise ConfigError("'bias_table.reference' must be 'analytic' or a number")
    R = args.replicates or bt.get("replicates", cfg.get("replicates", 20))
    results, _ = run_replicates(model, run, R, threads=args.threads)
    rows = []
    for rule in rules:
        b = np.array([r.estimate(path_label(rule)) for r in results]) - reference
        rows.append([rule.kind, rule.refinement, float(b.mean()), float(b.std(ddof=1)), R,
                     float(reference)])
    out = _out_dir(args, cfg)
    output.write_rows(out / "bias_table.csv", output.BIAS_HEADER, rows)
    snap = config.resolved(cfg, run, run.seed)
    snap["bias_table"] = {"rules": kinds, "refinements": refs, "reference": reference,
                          "replicates": R}
    output.write_json(out / "config.resolved.json", snap)
    print("rule\t" + "\t".join(f"x{r}" for r in refs))
    for i, k in enumerate(kinds):
        cells = rows[i * len(refs):(i + 1) * len(refs)]
        print(k + "\t" + "\t".join(f"{c[2]:.4f}+-{c[3]:.4f}" for c in cells))
    return 0


def flow_from_config(cfg) -> clt.FiniteStateFlow:
    m = cfg["model"]
    if m.get("kind") != "finite_flow":
        raise ConfigError("'model.kind' must be finite_flow for clt-check")
    for key in ("prior", "likelihood", "alphas"):
        if key not in m:
            raise ConfigError(f"missing required key 'model.{key}'")
    try:
        return clt.tempering_flow(m["prior"], m["likelihood"], m["alphas"])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def cmd_clt_check(args, cfg):
    flow = flow_from_config(cfg)
    c = cfg.get("clt", {})
    Ns = c.get("N", [128, 256, 512])
    R = args.replicates or c.get("R", 2000)
    seed = cfg.get("seed", 0) if args.seed is None else args.seed
    rows = []
    for N in Ns:
        res = clt.empirical_clt_check(flow, int(N), R, make_rng(seed, int(N)))
        rows.append([int(N), res.empirical, res.predicted, res.ratio])
        print(f"N={N}\tempirical={res.empirical:.6f}\tpredicted={res.predicted:.6f}\t"
              f"ratio={res.ratio:.4f}")
    out = _out_dir(args, cfg)
    output.write_rows(out / "clt.csv", output.CLT_HEADER, rows)
    snap = config.resolved(cfg, seed=seed)
    snap["clt"] = {"N": list(Ns), "R": R}
    output.write_json(out / "config.resolved.json", snap)
    return 0


def cmd_gen_data(args):
    out = Path(args.out or "data")
    meta = datasets.write_all(out)
    for name, m in meta.items():
        print(f"{name}\t{out / m['file']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smcevidence",
                                description="SMC samplers for Bayesian evidence estimation")
    sub = p.add_subparsers(dest="command", required=True)
    for name, needs_config in (("run", True), ("replicate", True), ("bias-table", True),
                               ("clt-check", True), ("gen-data", False)):
        s = sub.add_parser(name)
        if needs_config:
            s.add_argument("--config", required=True, help="TOML experiment file")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker processes for replicates")
        s.add_argument("--replicates", type=int, help="override the replicate count")
    return p


COMMANDS = {"run": cmd_run, "replicate": cmd_replicate, "bias-table": cmd_bias_table,
            "clt-check": cmd_clt_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gen-data":
        return cmd_gen_data(args)
    try:
        cfg = config.load(args.config)
        if args.threads < 1:
            raise ConfigError("'--threads' must be at least 1")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
