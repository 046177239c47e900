"""Command-line entry point: ``pathmsmc <subcommand> ...``."""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import rng as rngs
from .harness import (ALGORITHMS, SMC_ALGORITHMS, ExperimentConfig, generate_data, ground_truth,
                      load_or_generate_data, prior_grid, run_algorithm, run_comparison, tuned_proposal_sd,
                      write_comparison, write_smc_diagnostics)
from .model import (IsingSpec, brute_force_log_evidence, brute_force_log_z, load_lattice, save_lattice,
                    suff_stats)
from .priors import PriorSpec


def _load_config(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for key in ("seed", "replicates", "workers", "data_file"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if overrides:
        d = cfg.to_dict()
        d.update(overrides)
        cfg = ExperimentConfig.from_dict(d)
    return cfg


def _out_dir(cfg, args):
    out = cfg.resolved_output_dir(getattr(args, "out_dir", None))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _y_stats(cfg):
    return [float(v) for v in suff_stats(cfg.spec, load_or_generate_data(cfg))]


def cmd_generate_data(args):
    cfg = _load_config(args)
    theta = cfg.theta_true if args.theta is None else tuple(args.theta)
    seed = cfg.seed if args.seed is None else args.seed
    state = generate_data(cfg.spec, theta, cfg.data_sweeps, rngs.stream(seed, rngs.DATA))
    out = Path(args.output) if args.output else _out_dir(cfg, args) / "data.json"
    extra = {"theta_true": list(theta), "seed": seed, "sweeps": cfg.data_sweeps,
             "stats": [float(v) for v in suff_stats(cfg.spec, state)]}
    save_lattice(out, state, extra if out.suffix.lower() == ".json" else None)
    print(json.dumps({"path": str(out), **extra}))
    return 0


def cmd_ground_truth(args):
    cfg = _load_config(args)
    y = _y_stats(cfg)
    gt = ground_truth(cfg.spec, cfg.prior_spec, y, method=args.method or cfg.truth_method, seed=cfg.seed,
                      n_iters=cfg.truth_iters, burn_in=cfg.truth_burn_in, sweeps=cfg.sweeps,
                      grid_size=cfg.grid_size)
    payload = {"y_stats": y, **gt.to_dict()}
    path = _out_dir(cfg, args) / "ground_truth.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_run(args):
    cfg = _load_config(args)
    y = _y_stats(cfg)
    seed = cfg.seed
    sd = None if args.algorithm in SMC_ALGORITHMS else tuned_proposal_sd(cfg, y)
    res, used = run_algorithm(cfg, args.algorithm, y, seed, sd)
    out = _out_dir(cfg, args)
    summary = {"algorithm": args.algorithm, "seed": seed, "y_stats": y, "n_simulations": used}
    if args.algorithm in SMC_ALGORITHMS:
        summary["posterior_mean"] = [float(v) for v in res.posterior_mean]
        summary["final_ess"] = float(res.ess_trace[-1])
        write_smc_diagnostics(res, out / f"{args.algorithm}_diagnostics.csv", cfg)
    else:
        summary["posterior_mean"] = [float(v) for v in res.mean]
        summary["acceptance_rate"] = res.acceptance_rate
        summary["proposal_sd"] = sd
        res.to_csv(out / f"{args.algorithm}_trace.csv")
    (out / f"{args.algorithm}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_compare(args):
    cfg = _load_config(args)
    comp = run_comparison(cfg)
    paths = write_comparison(comp, _out_dir(cfg, args))
    w = max(len(a) for a in cfg.algorithms)
    print(f"{'algorithm':<{w}}  k  {'bias':>11} {'sd':>11} {'rmse':>11} {'ESS':>8}")
    for r in comp.rows:
        print(f"{r.algorithm:<{w}}  {r.component}  {r.bias:11.3e} {r.sd:11.3e} {r.rmse:11.3e} "
              f"{r.mean_final_ess:8.1f}{'  FLAGGED' if r.flagged else ''}")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 1 if comp.n_flagged else 0


def cmd_oracle(args):
    spec = IsingSpec(args.width, args.height, args.order)
    if args.what == "log-z":
        for th in args.theta:
            theta = np.full(spec.dim, th) if spec.dim == 1 else np.asarray(args.theta, dtype=float)
            print(json.dumps({"theta": theta.tolist(), "log_z": brute_force_log_z(spec, theta)}))
            if spec.dim > 1:
                break
        return 0
    if args.data:
        y = suff_stats(spec, load_lattice(args.data))
    elif args.stats:
        y = np.asarray(args.stats, dtype=float)
    else:
        raise SystemExit("oracle posterior/evidence needs --data or --stats")
    prior = PriorSpec.from_dict(json.loads(args.prior)) if args.prior else \
        PriorSpec.uniform([0.0] * spec.dim, [1.0] * spec.dim)
    gt = ground_truth(spec, prior, y, method="enumeration", grid_size=args.grid)
    payload = {"y_stats": [float(v) for v in y], **gt.to_dict()}
    if args.what == "evidence":
        grid, vol = prior_grid(prior, args.grid if spec.dim == 1 else min(args.grid, 100))
        payload["log_evidence"] = brute_force_log_evidence(spec, prior, y, grid, vol)
    print(json.dumps(payload, sort_keys=True))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pathmsmc", description="Marginal SMC for Ising models with intractable Z.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML or JSON experiment config")
        sp.add_argument("--out-dir", help="output directory (overrides $PATHMSMC_OUTPUT_DIR and the config)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--data-file", help="observed lattice (JSON or text grid)")

    sp = sub.add_parser("generate-data", help="simulate an observed lattice by a long Gibbs run")
    common(sp)
    sp.add_argument("--theta", type=float, nargs="+")
    sp.add_argument("--output", help="file to write (.json or text grid)")
    sp.set_defaults(func=cmd_generate_data)

    sp = sub.add_parser("ground-truth", help="reference posterior mean for the data")
    common(sp)
    sp.add_argument("--method", choices=["auto", "enumeration", "exchange"])
    sp.set_defaults(func=cmd_ground_truth)

    sp = sub.add_parser("run", help="one run of a single algorithm")
    common(sp)
    sp.add_argument("--algorithm", choices=ALGORITHMS, required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="replicated comparison table at equal budget")
    common(sp)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--workers", type=int, help="worker processes, 0 = one per CPU")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("oracle", help="exact enumeration utilities for small lattices")
    sp.add_argument("what", choices=["log-z", "posterior", "evidence"])
    sp.add_argument("--width", type=int, default=4)
    sp.add_argument("--height", type=int, default=4)
    sp.add_argument("--order", choices=["first", "second"], default="first")
    sp.add_argument("--theta", type=float, nargs="+", default=[0.0])
    sp.add_argument("--data", help="lattice file for posterior/evidence")
    sp.add_argument("--stats", type=float, nargs="+", help="sufficient statistics instead of --data")
    sp.add_argument("--prior", help='prior as JSON, e.g. \'{"kind": "uniform", "low": [0], "high": [1]}\'')
    sp.add_argument("--grid", type=int, default=200)
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
