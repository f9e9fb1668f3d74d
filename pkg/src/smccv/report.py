"""Report assembly and emission.

``report.json`` is fully deterministic for a given (config, seed): floats
are rendered with 17 significant digits, keys keep a fixed order, and
wall-clock measurements go to a ``timings.json`` sidecar instead (they can
never be byte-stable). ``traces.csv`` carries one row per accepted path
step per fold and is the contract for external plotting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .config import RunConfig, config_to_toml, parse_config_text
from .core import DeletionScheme
from .engine import CvRun, PsisFold, RefitFold

__all__ = ["ReportBundle", "assemble_report", "emit_report", "render_json"]


def _json_scalar(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return '"nan"'
        if math.isinf(value):
            return '"inf"' if value > 0 else '"-inf"'
        return format(value, ".17g")
    if isinstance(value, str):
        out = value.replace("\\", "\\\\").replace('"', '\\"')
        out = out.replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t")
        return f'"{out}"'
    raise TypeError(f"cannot serialize {type(value).__name__}")


def render_json(obj: Any, indent: int = 0) -> str:
    """Deterministic JSON: insertion-ordered keys, 17-digit floats."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [f"{inner}{_json_scalar(str(k))}: {render_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [f"{inner}{render_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    return _json_scalar(obj)


def _config_echo(cfg: RunConfig) -> dict:
    return {
        "toml": config_to_toml(cfg),
    }


def _scheme_block(scheme: DeletionScheme) -> dict:
    return {
        "kind": scheme.kind,
        "n_folds": scheme.n_folds,
        "fold_sizes": list(scheme.fold_sizes),
        "balanced": scheme.balanced,
        "checkpoints": list(scheme.checkpoints),
    }


@dataclass
class ReportBundle:
    """Everything :func:`emit_report` writes."""

    report: dict
    timings: dict
    trace_rows: list[dict] = field(default_factory=list)


def _asmc_block(run: CvRun) -> dict:
    folds = []
    for f in run.folds:
        folds.append(
            {
                "fold": f.fold,
                "estimate": f.estimate,
                "final_action": f.final_action,
                "k_hat": f.k_hat,
                "kernel_invocations": f.kernel_invocations,
                "n_steps": len(f.steps) - 1,
                "checkpoints": [[c, e] for c, e in f.checkpoint_estimates],
            }
        )
    return {"aggregate": run.aggregate, "folds": folds}


def _psis_block(folds: list[PsisFold]) -> dict:
    return {
        "aggregate": float(sum(f.estimate for f in folds)),
        "folds": [
            {
                "fold": f.fold,
                "estimate": f.estimate,
                "k_hat": f.k_hat,
                "checkpoints": [[c, e] for c, e in f.checkpoint_estimates],
            }
            for f in folds
        ],
    }


def _refit_block(folds: list[RefitFold]) -> dict:
    return {
        "aggregate": float(sum(f.estimate for f in folds)),
        "folds": [
            {
                "fold": f.fold,
                "estimate": f.estimate,
                "se": f.se,
                "checkpoints": [[c, e] for c, e in f.checkpoint_estimates],
                "checkpoint_ses": [[c, s] for c, s in f.checkpoint_ses],
            }
            for f in folds
        ],
    }


def _comparison_block(
    asmc: CvRun, psis: list[PsisFold], refit: list[RefitFold]
) -> dict:
    by_fold_asmc = {f.fold: f.estimate for f in asmc.folds}
    rows = []
    for ref in refit:
        if ref.fold not in by_fold_asmc:
            continue
        a = by_fold_asmc[ref.fold]
        p = psis[ref.fold].estimate
        denom = abs(ref.estimate) if ref.estimate != 0 else float("nan")
        rows.append(
            {
                "fold": ref.fold,
                "abs_error_asmc": abs(a - ref.estimate),
                "abs_error_psis": abs(p - ref.estimate),
                "rel_error_asmc": abs(a - ref.estimate) / denom,
                "rel_error_psis": abs(p - ref.estimate) / denom,
                "refit_se": ref.se,
            }
        )
    return {"reference": "mcmc-refit", "folds": rows}


def assemble_report(
    cfg: RunConfig,
    asmc: CvRun | None = None,
    psis: list[PsisFold] | None = None,
    refit: list[RefitFold] | None = None,
) -> ReportBundle:
    runs = [r for r in (asmc,) if r is not None]
    scheme = asmc.scheme if asmc is not None else None
    report: dict = {"version": __version__, "config": _config_echo(cfg)}
    timings: dict = {}
    trace_rows: list[dict] = []

    if scheme is not None:
        report["scheme"] = _scheme_block(scheme)
    estimates: dict = {}
    if asmc is not None:
        estimates["asmc"] = _asmc_block(asmc)
        report["baseline"] = {
            "acceptance_rate": asmc.baseline_stats.acceptance_rate,
            "step_size": asmc.baseline_stats.step_size,
            "suggested_iterations": asmc.baseline_stats.suggested_iterations,
            "max_lag1_autocorr": float(max(asmc.baseline_stats.lag1_autocorr, default=0.0))
            if asmc.baseline_stats.lag1_autocorr.size
            else 0.0,
        }
        timings["baseline_seconds"] = asmc.baseline_wall_time
        timings["total_seconds"] = asmc.wall_time
        timings["fold_seconds"] = [[f.fold, f.wall_time] for f in asmc.folds]
        for f in asmc.folds:
            for s in f.steps:
                trace_rows.append(
                    {
                        "fold": f.fold,
                        "step": s.step,
                        "n": s.n,
                        "exponent": s.boundary_exponent,
                        "ess": s.ess,
                        "action": s.action,
                        "estimate": s.estimate,
                        "k_hat": s.k_hat if s.k_hat is not None else "",
                        "checkpoint": int(s.is_checkpoint),
                    }
                )
        if asmc.failures:
            report["failures"] = [{"fold": f.fold, "error": f.error} for f in asmc.failures]
    if psis is not None:
        estimates["psis"] = _psis_block(psis)
    if refit is not None:
        estimates["mcmc_refit"] = _refit_block(refit)
    report["estimates"] = estimates
    if asmc is not None and psis is not None and refit is not None:
        report["comparison"] = _comparison_block(asmc, psis, refit)
    return ReportBundle(report=report, timings=timings, trace_rows=trace_rows)


def emit_report(bundle: ReportBundle, out_dir: str | Path) -> dict[str, Path]:
    """Write report.json, timings.json and traces.csv under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "timings": out / "timings.json",
        "traces": out / "traces.csv",
    }
    paths["report"].write_text(render_json(bundle.report) + "\n")
    paths["timings"].write_text(render_json(bundle.timings) + "\n")
    with open(paths["traces"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["fold", "step", "n", "exponent", "ess", "action", "estimate", "k_hat", "checkpoint"]
        )
        for row in bundle.trace_rows:
            writer.writerow(
                [
                    row["fold"],
                    row["step"],
                    repr(float(row["n"])),
                    repr(float(row["exponent"])),
                    repr(float(row["ess"])),
                    row["action"],
                    repr(float(row["estimate"])),
                    "" if row["k_hat"] == "" else repr(float(row["k_hat"])),
                    row["checkpoint"],
                ]
            )
    return paths


def echo_round_trips(cfg: RunConfig) -> bool:
    """True iff the embedded config echo parses back to an equal config."""
    return parse_config_text(config_to_toml(cfg)) == cfg
