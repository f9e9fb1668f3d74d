"""Dataset ingestion and generation for the four model kinds.

CSV schemas (header row required):

- conjugate:  y, group
- radon:      y, x, group, u        (u repeats its group's value per row)
- dns:        date, y_tau<m> ...    (one column per maturity, e.g. y_tau2)
- m5:         item, department, y_s1 ... y_sS

Group and department identifiers must be dense 1-based integers. Every
parse error carries the 1-based file line number.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ConfigError, RunConfig
from .models import (
    ConjugateData,
    ConjugateGaussianModel,
    ConjugateShape,
    DnsData,
    DnsModel,
    DnsShape,
    M5Shape,
    MultilevelData,
    MultilevelNormalModel,
    RadonShape,
    SpatialData,
    SpatialMvnModel,
    generate_synthetic,
)
from .models.base import Model

__all__ = ["DataError", "ingest_csv", "write_csv", "build_model", "build_dataset"]


class DataError(ValueError):
    """Malformed dataset; message carries the file line number."""


def _read_rows(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [(line, row) for line, row in enumerate(reader, start=2) if row]
    return [h.strip() for h in header], rows


def _cell(row: list[str], idx: int, name: str, line: int, kind=float):
    raw = row[idx].strip()
    if raw == "":
        raise DataError(f"line {line}: empty field {name}")
    try:
        return kind(raw)
    except ValueError:
        raise DataError(f"line {line}: non-numeric value {raw!r} in field {name}") from None


def _check_width(row: list[str], width: int, line: int) -> None:
    if len(row) != width:
        raise DataError(f"line {line}: expected {width} fields, got {len(row)}")


def _check_header(header: list[str], expected: Sequence[str], path: Path) -> None:
    if header != list(expected):
        raise DataError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")


def _dense_groups(values: list[int], field: str) -> None:
    uniq = sorted(set(values))
    if uniq[0] != 1 or uniq != list(range(1, len(uniq) + 1)):
        raise DataError(f"{field} ids must be dense integers starting at 1")


def _int_cell(row, idx, name, line) -> int:
    value = _cell(row, idx, name, line, kind=float)
    if value != int(value):
        raise DataError(f"line {line}: field {name} must be an integer")
    return int(value)


def ingest_conjugate(path: Path) -> ConjugateData:
    header, rows = _read_rows(path)
    _check_header(header, ["y", "group"], path)
    y, group = [], []
    for line, row in rows:
        _check_width(row, 2, line)
        y.append(_cell(row, 0, "y", line))
        group.append(_int_cell(row, 1, "group", line))
    _dense_groups(group, "group")
    return ConjugateData(y=np.array(y), group=np.array(group))


def ingest_radon(path: Path) -> MultilevelData:
    header, rows = _read_rows(path)
    _check_header(header, ["y", "x", "group", "u"], path)
    y, x, group, u_by_group = [], [], [], {}
    for line, row in rows:
        _check_width(row, 4, line)
        y.append(_cell(row, 0, "y", line))
        x.append(_cell(row, 1, "x", line))
        g = _int_cell(row, 2, "group", line)
        group.append(g)
        u = _cell(row, 3, "u", line)
        if g in u_by_group and u_by_group[g] != u:
            raise DataError(f"line {line}: group {g} has conflicting u values")
        u_by_group[g] = u
    _dense_groups(group, "group")
    u = np.array([u_by_group[g] for g in range(1, max(group) + 1)])
    return MultilevelData(y=np.array(y), x=np.array(x), group=np.array(group), u=u)


def ingest_dns(path: Path) -> DnsData:
    header, rows = _read_rows(path)
    if not header or header[0] != "date":
        raise DataError(f"{path}: first column must be date")
    maturities = []
    for name in header[1:]:
        m = re.fullmatch(r"y_tau(\d+(?:\.\d+)?)", name)
        if not m:
            raise DataError(f"{path}: yield columns must look like y_tau10, got {name!r}")
        maturities.append(float(m.group(1)))
    if not maturities:
        raise DataError(f"{path}: no maturity columns")
    y = []
    for line, row in rows:
        _check_width(row, 1 + len(maturities), line)
        y.append([_cell(row, j + 1, header[j + 1], line) for j in range(len(maturities))])
    if not y:
        raise DataError(f"{path}: no observations")
    return DnsData(y=np.array(y), maturities=tuple(maturities))


def ingest_m5(path: Path) -> SpatialData:
    header, rows = _read_rows(path)
    if len(header) < 3 or header[:2] != ["item", "department"]:
        raise DataError(f"{path}: header must start with item,department")
    for j, name in enumerate(header[2:], start=1):
        if name != f"y_s{j}":
            raise DataError(f"{path}: store columns must be y_s1..y_sS, got {name!r}")
    n_stores = len(header) - 2
    y, dept = [], []
    for line, row in rows:
        _check_width(row, 2 + n_stores, line)
        dept.append(_int_cell(row, 1, "department", line))
        y.append([_cell(row, j + 2, header[j + 2], line) for j in range(n_stores)])
    if not y:
        raise DataError(f"{path}: no observations")
    _dense_groups(dept, "department")
    return SpatialData(y=np.array(y), department=np.array(dept))


_INGESTERS = {
    "conjugate": ingest_conjugate,
    "radon": ingest_radon,
    "dns": ingest_dns,
    "m5": ingest_m5,
}


def ingest_csv(model_kind: str, path: str | Path):
    """Load and validate a dataset for the given model kind."""
    if model_kind not in _INGESTERS:
        raise DataError(f"unknown model kind {model_kind!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    return _INGESTERS[model_kind](path)


def write_csv(model_kind: str, data, path: str | Path) -> None:
    """Write a dataset in the schema :func:`ingest_csv` reads back."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if model_kind == "conjugate":
            w.writerow(["y", "group"])
            for y, g in zip(data.y, data.group):
                w.writerow([repr(float(y)), int(g)])
        elif model_kind == "radon":
            w.writerow(["y", "x", "group", "u"])
            for y, x, g in zip(data.y, data.x, data.group):
                w.writerow([repr(float(y)), repr(float(x)), int(g), repr(float(data.u[g - 1]))])
        elif model_kind == "dns":
            cols = [f"y_tau{m:g}" for m in data.maturities]
            w.writerow(["date"] + cols)
            for t, row in enumerate(data.y, start=1):
                w.writerow([t] + [repr(float(v)) for v in row])
        elif model_kind == "m5":
            s = data.y.shape[1]
            w.writerow(["item", "department"] + [f"y_s{j}" for j in range(1, s + 1)])
            for k, (row, g) in enumerate(zip(data.y, data.department), start=1):
                w.writerow([k, int(g)] + [repr(float(v)) for v in row])
        else:
            raise DataError(f"unknown model kind {model_kind!r}")


_SHAPES = {"conjugate": ConjugateShape, "radon": RadonShape, "dns": DnsShape, "m5": M5Shape}


def shape_from_options(model_kind: str, options: dict):
    cls = _SHAPES[model_kind]
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(options) - fields
    if unknown:
        raise ConfigError(f"[data.synthetic].{sorted(unknown)[0]}: unknown key for {model_kind}")
    opts = dict(options)
    if model_kind == "dns" and "maturities" in opts:
        opts["maturities"] = tuple(float(v) for v in opts["maturities"])
    return cls(**opts)


def build_dataset(cfg: RunConfig, rng: np.random.Generator):
    """Dataset from the configured CSV path or synthetic shape."""
    if cfg.data_path is not None:
        return ingest_csv(cfg.model_kind, cfg.data_path), None
    shape = shape_from_options(cfg.model_kind, cfg.synthetic)
    data, truth = generate_synthetic(cfg.model_kind, shape, rng)
    return data, truth


_MODEL_OPTION_KEYS = {
    "conjugate": {"kappa", "tau", "sigma"},
    "radon": set(),
    "dns": set(),
    "m5": set(),
}


def build_model(cfg: RunConfig, data) -> Model:
    """Instantiate the configured model kind over a dataset."""
    opts = dict(cfg.model_options)
    opts.pop("kind", None)
    unknown = set(opts) - _MODEL_OPTION_KEYS[cfg.model_kind]
    if unknown:
        raise ConfigError(f"[model].{sorted(unknown)[0]}: unknown option for {cfg.model_kind}")
    if cfg.model_kind == "conjugate":
        return ConjugateGaussianModel(data, **opts)
    if cfg.model_kind == "radon":
        return MultilevelNormalModel(data)
    if cfg.model_kind == "dns":
        return DnsModel(data)
    return SpatialMvnModel(data)
