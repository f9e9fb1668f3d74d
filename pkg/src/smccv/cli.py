"""Batch front door: run experiments, generate synthetic data, self-check.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .baseline import run_mcmc
from .config import ConfigError, RunConfig, parse_config
from .core import ALL_GROUPS, EstimandSpec, build_group_kfold_scheme, build_leo_schedule, build_lgo_scheme, build_loo_scheme
from .dataio import DataError, build_dataset, build_model, shape_from_options, write_csv
from .engine import derive_rng, psis_cv, refit_cv, run_cv
from .models import generate_synthetic
from .report import ReportBundle, assemble_report, emit_report
from .transforms import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def build_scheme(cfg: RunConfig, model, rng: np.random.Generator):
    sizes = model.group_sizes
    if cfg.scheme_kind == "loo":
        return build_loo_scheme(sizes)
    if cfg.scheme_kind == "lgo":
        return build_lgo_scheme(sizes)
    if cfg.scheme_kind == "group-kfold":
        return build_group_kfold_scheme(sizes, cfg.scheme_k, rng)
    group = ALL_GROUPS if cfg.scheme_group == "all" else int(cfg.scheme_group)
    return build_leo_schedule(sizes, group=group, t_min=cfg.scheme_t_min)


def build_estimand(cfg: RunConfig) -> EstimandSpec:
    if cfg.scheme_kind == "leo":
        return EstimandSpec(kind="multistep", horizon=cfg.horizon)
    return EstimandSpec(kind=cfg.estimand if cfg.estimand != "multistep" else "joint")


def execute_run(cfg: RunConfig) -> ReportBundle:
    """Run the configured experiment and assemble its report bundle."""
    threads = cfg.effective_threads()
    data, _truth = build_dataset(cfg, derive_rng(cfg.seed, 4))
    model = build_model(cfg, data)
    scheme = build_scheme(cfg, model, derive_rng(cfg.seed, 1))
    estimand = build_estimand(cfg)
    baseline_cfg = cfg.baseline

    base_draws, stats = run_mcmc(
        model, baseline_cfg, cfg.kernel(), derive_rng(cfg.seed, 0)
    )
    kernel = cfg.kernel(stats.suggested_iterations)

    asmc = psis = refit = None
    if cfg.estimator in ("asmc", "all"):
        asmc = run_cv(
            model,
            scheme,
            estimand,
            cfg.engine,
            kernel,
            baseline_cfg,
            cfg.seed,
            threads=threads,
            base_draws=base_draws,
            baseline_stats=stats,
        )
    if cfg.estimator in ("psis", "all"):
        psis = psis_cv(base_draws, model, scheme, estimand)
    if cfg.estimator in ("mcmc-refit", "all"):
        refit = refit_cv(model, scheme, estimand, baseline_cfg, kernel, cfg.seed, threads)
    return assemble_report(cfg, asmc=asmc, psis=psis, refit=refit)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.estimator is not None:
        overrides["estimator"] = args.estimator
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    bundle = execute_run(cfg)
    paths = emit_report(bundle, cfg.out_dir)
    estimates = bundle.report.get("estimates", {})
    for name, block in estimates.items():
        print(f"{name}: aggregate log predictive = {block['aggregate']:.6f}")
    print(f"report written to {paths['report']}")
    failures = bundle.report.get("failures", [])
    if failures and not estimates.get("asmc", {}).get("folds"):
        return EXIT_NUMERICAL
    return EXIT_OK


def _parse_shape(spec: str | None) -> dict:
    out: dict = {}
    if not spec:
        return out
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"--shape: expected key=value, got {part!r}")
        key, _, raw = part.partition("=")
        raw = raw.strip()
        try:
            value: object = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                value = raw
        out[key.strip()] = value
    return out


def _cmd_synth(args: argparse.Namespace) -> int:
    shape = shape_from_options(args.model, _parse_shape(args.shape))
    data, _ = generate_synthetic(args.model, shape, derive_rng(args.seed, 4))
    write_csv(args.model, data, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_selftest(_: argparse.Namespace) -> int:
    """Quick invariant checks, printed one per line."""
    from . import selfcheck

    results = selfcheck.run_all()
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        failed += 0 if ok else 1
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="smccv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--estimator", choices=["asmc", "psis", "mcmc-refit", "all"])
    p_run.add_argument("--out")
    p_run.set_defaults(func=_cmd_run)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p_synth.add_argument("--model", required=True, choices=["radon", "dns", "m5", "conjugate"])
    p_synth.add_argument("--shape", help="comma-separated key=value overrides")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    p_self = sub.add_parser("selftest", help="run the built-in invariant suite")
    p_self.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
