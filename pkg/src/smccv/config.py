"""Run configuration: TOML parsing, validation, defaults, round-tripping.

A run file has sections [run], [model], [data], [scheme], [kernel],
[baseline]. Unknown keys anywhere are rejected with their full path; all
defaults are applied at parse time so the echoed configuration is
complete and round-trips to an equal object.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .baseline import BaselineConfig
from .engine import EngineConfig
from .kernels import KernelConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "config_to_toml"]

THREADS_ENV_VAR = "SMCCV_THREADS"

MODEL_KINDS = ("conjugate", "radon", "dns", "m5")
SCHEME_KINDS = ("loo", "lgo", "leo", "group-kfold")
ESTIMATORS = ("asmc", "psis", "mcmc-refit", "all")
DEFAULT_KERNELS = {"conjugate": "hmc", "radon": "hmc", "m5": "hmc", "dns": "gibbs"}


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending key path."""


@dataclass(frozen=True)
class RunConfig:
    model_kind: str
    scheme_kind: str
    seed: int
    particles: int = 1000
    ess_ratio: float = 0.5
    khat_threshold: float = 0.7
    estimator: str = "asmc"
    threads: int = 1
    out_dir: str = "results"
    data_path: str | None = None
    synthetic: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)
    scheme_k: int = 10
    scheme_group: int | str = "all"
    scheme_t_min: int = 0
    horizon: int = 1
    estimand: str = "joint"
    kernel_kind: str | None = None  # None resolves to the model default
    kernel_iterations: int | None = None  # None resolves from baseline autocorrelation
    step_size: float | None = None
    leapfrog_steps: int = 10
    proposal_scale: float = 0.5
    baseline_iterations: int | None = None  # None derives burn_in + thin * particles
    baseline_burn_in: int = 1000
    baseline_thin: int = 3

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"[model].kind: unknown model {self.model_kind!r}")
        if self.scheme_kind not in SCHEME_KINDS:
            raise ConfigError(f"[scheme].kind: unknown scheme {self.scheme_kind!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"[run].estimator: unknown estimator {self.estimator!r}")
        if self.particles < 25:
            raise ConfigError("[run].particles: need at least 25 (tail diagnostics)")
        if not 0.0 < self.ess_ratio < 1.0:
            raise ConfigError("[run].ess_ratio: must lie strictly between 0 and 1")
        if self.threads < 1:
            raise ConfigError("[run].threads: must be >= 1")
        if self.horizon < 1:
            raise ConfigError("[scheme].horizon: must be >= 1")
        if self.estimand not in ("joint", "pointwise", "multistep"):
            raise ConfigError(f"[scheme].estimand: unknown estimand {self.estimand!r}")
        if self.horizon > 1 and self.scheme_kind != "leo":
            raise ConfigError("[scheme].horizon: horizons beyond one step require scheme leo")
        if self.kernel_iterations is not None and self.kernel_iterations < 1:
            raise ConfigError("[kernel].iterations: must be >= 1")
        if self.data_path is not None and self.synthetic:
            raise ConfigError("[data]: give either path or a synthetic table, not both")
        kind = self.resolved_kernel_kind
        if kind == "gibbs" and self.model_kind != "dns":
            raise ConfigError("[kernel].kind: gibbs is only available for the dns model")
        if kind == "gibbs" and self.scheme_kind not in ("leo",):
            raise ConfigError(
                "[kernel].kind: the conjugate gibbs kernel requires an ordered deletion "
                "path (scheme leo); use rwm for tempered dns folds"
            )

    @property
    def resolved_kernel_kind(self) -> str:
        return self.kernel_kind or DEFAULT_KERNELS[self.model_kind]

    @property
    def baseline(self) -> BaselineConfig:
        iters = self.baseline_iterations
        if iters is None:
            iters = self.baseline_burn_in + self.baseline_thin * self.particles
        cfg = BaselineConfig(
            iterations=iters, burn_in=self.baseline_burn_in, thin=self.baseline_thin
        )
        if cfg.retained < self.particles:
            raise ConfigError(
                f"[baseline]: ({iters} - {cfg.burn_in}) // {cfg.thin} = {cfg.retained} "
                f"retained draws < {self.particles} particles"
            )
        return cfg

    def kernel(self, suggested_iterations: int | None = None) -> KernelConfig:
        iters = self.kernel_iterations
        if iters is None:
            iters = suggested_iterations if suggested_iterations is not None else 1
        return KernelConfig(
            kind=self.resolved_kernel_kind,
            iterations=iters,
            step_size=self.step_size,
            leapfrog_steps=self.leapfrog_steps,
            proposal_scale=self.proposal_scale,
        )

    @property
    def engine(self) -> EngineConfig:
        return EngineConfig(ess_ratio=self.ess_ratio, khat_threshold=self.khat_threshold)

    def effective_threads(self) -> int:
        env = os.environ.get(THREADS_ENV_VAR)
        if env:
            try:
                n = int(env)
            except ValueError as exc:
                raise ConfigError(f"env {THREADS_ENV_VAR}: not an integer") from exc
            if n < 1:
                raise ConfigError(f"env {THREADS_ENV_VAR}: must be >= 1")
            return n
        return self.threads


def _take(table: dict, section: str, key: str, expect, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"[{section}].{key}: missing required key")
        return default
    value = table.pop(key)
    if expect is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if expect is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"[{section}].{key}: expected an integer")
    if not isinstance(value, expect):
        raise ConfigError(f"[{section}].{key}: expected {expect.__name__}")
    return value


def _reject_unknown(table: dict, section: str) -> None:
    if table:
        key = sorted(table)[0]
        raise ConfigError(f"[{section}].{key}: unknown key")


def _parse_khat(value) -> float:
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("inf", "+inf", "infinity"):
            return math.inf
        if low in ("-inf", "-infinity"):
            return -math.inf
        raise ConfigError("[run].khat_threshold: expected a number or 'inf'/'-inf'")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError("[run].khat_threshold: expected a number or 'inf'/'-inf'")


def parse_config_text(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc

    run = raw.pop("run", {})
    model = raw.pop("model", {})
    data = raw.pop("data", {})
    scheme = raw.pop("scheme", {})
    kernel = raw.pop("kernel", {})
    baseline = raw.pop("baseline", {})
    if raw:
        raise ConfigError(f"[{sorted(raw)[0]}]: unknown section")
    for section in (run, model, data, scheme, kernel, baseline):
        if not isinstance(section, dict):
            raise ConfigError("top-level entries must be tables")

    khat = run.pop("khat_threshold", 0.7)
    cfg = dict(
        seed=_take(run, "run", "seed", int, required=True),
        particles=_take(run, "run", "particles", int, 1000),
        ess_ratio=_take(run, "run", "ess_ratio", float, 0.5),
        khat_threshold=_parse_khat(khat),
        estimator=_take(run, "run", "estimator", str, "asmc"),
        threads=_take(run, "run", "threads", int, 1),
        out_dir=_take(run, "run", "out", str, "results"),
    )
    _reject_unknown(run, "run")

    cfg["model_kind"] = _take(model, "model", "kind", str, required=True)
    cfg["model_options"] = dict(model)
    model.clear()

    cfg["data_path"] = _take(data, "data", "path", str)
    synthetic = data.pop("synthetic", {})
    if not isinstance(synthetic, dict):
        raise ConfigError("[data].synthetic: expected a table")
    cfg["synthetic"] = dict(synthetic)
    _reject_unknown(data, "data")

    cfg["scheme_kind"] = _take(scheme, "scheme", "kind", str, required=True)
    cfg["scheme_k"] = _take(scheme, "scheme", "k", int, 10)
    group = scheme.pop("group", "all")
    if not (group == "all" or (isinstance(group, int) and not isinstance(group, bool))):
        raise ConfigError("[scheme].group: expected an integer or 'all'")
    cfg["scheme_group"] = group
    cfg["scheme_t_min"] = _take(scheme, "scheme", "t_min", int, 0)
    cfg["horizon"] = _take(scheme, "scheme", "horizon", int, 1)
    cfg["estimand"] = _take(scheme, "scheme", "estimand", str, "joint")
    _reject_unknown(scheme, "scheme")

    cfg["kernel_kind"] = _take(kernel, "kernel", "kind", str)
    cfg["kernel_iterations"] = _take(kernel, "kernel", "iterations", int)
    cfg["step_size"] = _take(kernel, "kernel", "step_size", float)
    cfg["leapfrog_steps"] = _take(kernel, "kernel", "leapfrog_steps", int, 10)
    cfg["proposal_scale"] = _take(kernel, "kernel", "proposal_scale", float, 0.5)
    _reject_unknown(kernel, "kernel")

    cfg["baseline_iterations"] = _take(baseline, "baseline", "iterations", int)
    cfg["baseline_burn_in"] = _take(baseline, "baseline", "burn_in", int, 1000)
    cfg["baseline_thin"] = _take(baseline, "baseline", "thin", int, 3)
    _reject_unknown(baseline, "baseline")

    out = RunConfig(**cfg)
    out.baseline  # validates the bookkeeping eagerly
    return out


def parse_config(path: str | Path) -> RunConfig:
    """Parse and validate a run file; defaults are applied and echoed."""
    return parse_config_text(Path(path).read_text())


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise TypeError(f"cannot serialize {type(value).__name__} to TOML")


def config_to_toml(cfg: RunConfig) -> str:
    """Serialize a configuration so that parsing it back compares equal."""
    lines: list[str] = ["[run]"]
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"particles = {cfg.particles}")
    lines.append(f"ess_ratio = {_toml_value(cfg.ess_ratio)}")
    lines.append(f"khat_threshold = {_toml_value(float(cfg.khat_threshold))}")
    lines.append(f'estimator = "{cfg.estimator}"')
    lines.append(f"threads = {cfg.threads}")
    lines.append(f'out = "{cfg.out_dir}"')

    lines.append("")
    lines.append("[model]")
    lines.append(f'kind = "{cfg.model_kind}"')
    for key in sorted(cfg.model_options):
        lines.append(f"{key} = {_toml_value(cfg.model_options[key])}")

    lines.append("")
    lines.append("[data]")
    if cfg.data_path is not None:
        lines.append(f'path = "{cfg.data_path}"')
    if cfg.synthetic:
        lines.append("")
        lines.append("[data.synthetic]")
        for key in sorted(cfg.synthetic):
            lines.append(f"{key} = {_toml_value(cfg.synthetic[key])}")

    lines.append("")
    lines.append("[scheme]")
    lines.append(f'kind = "{cfg.scheme_kind}"')
    lines.append(f"k = {cfg.scheme_k}")
    group = cfg.scheme_group
    lines.append(f'group = "{group}"' if isinstance(group, str) else f"group = {group}")
    lines.append(f"t_min = {cfg.scheme_t_min}")
    lines.append(f"horizon = {cfg.horizon}")
    lines.append(f'estimand = "{cfg.estimand}"')

    lines.append("")
    lines.append("[kernel]")
    if cfg.kernel_kind is not None:
        lines.append(f'kind = "{cfg.kernel_kind}"')
    if cfg.kernel_iterations is not None:
        lines.append(f"iterations = {cfg.kernel_iterations}")
    if cfg.step_size is not None:
        lines.append(f"step_size = {_toml_value(cfg.step_size)}")
    lines.append(f"leapfrog_steps = {cfg.leapfrog_steps}")
    lines.append(f"proposal_scale = {_toml_value(cfg.proposal_scale)}")

    lines.append("")
    lines.append("[baseline]")
    if cfg.baseline_iterations is not None:
        lines.append(f"iterations = {cfg.baseline_iterations}")
    lines.append(f"burn_in = {cfg.baseline_burn_in}")
    lines.append(f"thin = {cfg.baseline_thin}")
    return "\n".join(lines) + "\n"
