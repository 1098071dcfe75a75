"""File formats: traces, curves, roughness histograms, calibration reports.

All writers go through ``atomic_write_text`` (temporary file in the target
directory, then rename), and format numbers with a fixed repr so that
identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidInputError
from .lifshitz import ForceCurve, RoughnessDistribution
from .pipeline import CalibrationFit, DeflectionTrace

NUM = "{:.10e}"


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _plain(obj):
    """Recursively turn numpy scalars/arrays and tuples into JSON/YAML-safe values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def write_table(path, columns: dict, meta: dict | None = None) -> Path:
    """Whitespace-separated columns with a ``# key: value`` header block."""
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise InvalidInputError("table columns differ in length")
    lines = [f"# {k}: {_plain(v)}" for k, v in sorted((meta or {}).items())]
    lines.append("# " + "  ".join(names))
    for i in range(n):
        lines.append("  ".join(NUM.format(a[i]) for a in arrays))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_table(path) -> tuple[dict, dict]:
    """Inverse of ``write_table``: (columns, meta)."""
    path = Path(path)
    meta, names = {}, None
    rows = []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                meta[k.strip()] = v.strip()
            else:
                names = body.split()
            continue
        if line.strip():
            rows.append([float(x) for x in line.split()])
    if names is None:
        raise InvalidInputError(f"{path}: missing column header")
    data = np.array(rows, dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}, meta


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


def write_trace(path, trace: DeflectionTrace) -> Path:
    """CSV ``d_piezo_nm, V_det_V`` with velocity and sample-rate header lines."""
    lines = [
        f"# velocity_nm_s={trace.velocity!r}",
        f"# sample_rate_hz={trace.sample_rate!r}",
    ]
    if trace.label:
        lines.append(f"# label={trace.label}")
    lines.append("d_piezo_nm,V_det_V")
    lines.extend(f"{NUM.format(p)},{NUM.format(v)}" for p, v in zip(trace.piezo, trace.signal))
    return atomic_write_text(path, "\n".join(lines) + "\n")


_HEADER = re.compile(r"#\s*(\w+)\s*=\s*(.*)")


def read_trace(path) -> DeflectionTrace:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read trace {path}: {exc}") from exc
    head, rows = {}, []
    for line in text.splitlines():
        m = _HEADER.match(line)
        if m:
            head[m.group(1)] = m.group(2).strip()
            continue
        if not line.strip() or line.startswith("#") or line.startswith("d_piezo"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise InvalidInputError(f"{path}: expected two comma-separated columns, got {line!r}")
        rows.append((float(parts[0]), float(parts[1])))
    for key in ("velocity_nm_s", "sample_rate_hz"):
        if key not in head:
            raise InvalidInputError(f"{path}: missing '# {key}=' header")
    data = np.array(rows, dtype=float).reshape(-1, 2)
    return DeflectionTrace(
        piezo=data[:, 0],
        signal=data[:, 1],
        velocity=float(head["velocity_nm_s"]),
        sample_rate=float(head["sample_rate_hz"]),
        label=head.get("label", path.stem),
    )


# ---------------------------------------------------------------------------
# force curves, roughness
# ---------------------------------------------------------------------------


def write_curve(path, curve: ForceCurve, extra_columns: dict | None = None) -> Path:
    """``d_nm F_pN`` (plus any extra force columns, in pN) with metadata header."""
    cols = {"d_nm": curve.distances * 1e9, "F_pN": curve.forces * 1e12}
    for name, values in (extra_columns or {}).items():
        cols[name] = np.asarray(values, dtype=float) * 1e12
    return write_table(path, cols, curve.metadata)


def read_curve(path, column="F_pN") -> ForceCurve:
    cols, meta = read_table(path)
    if "d_nm" not in cols or column not in cols:
        raise InvalidInputError(f"{path}: needs columns d_nm and {column}")
    return ForceCurve(cols["d_nm"] * 1e-9, cols[column] * 1e-12, meta)


def read_roughness(path) -> RoughnessDistribution:
    """Two-column histogram ``displacement_nm count`` (counts or area fractions)."""
    try:
        data = np.loadtxt(Path(path), comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read roughness histogram {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise InvalidInputError(f"{path}: expected two columns displacement_nm count")
    return RoughnessDistribution.from_histogram(data[:, 0] * 1e-9, data[:, 1])


# ---------------------------------------------------------------------------
# calibration reports
# ---------------------------------------------------------------------------


def _fit_block(fit: CalibrationFit) -> dict:
    return {
        "fit_range_nm": list(fit.fit_range),
        "force_constant_nN_per_V": fit.force_constant,
        "force_constant_sigma": fit.uncertainties[0],
        "contact_offset_nm": fit.contact_offset,
        "contact_offset_sigma": fit.uncertainties[1],
        "residual_rms_pN": fit.residual_rms,
        "n_points": fit.n_points,
    }


def write_calibration(path, fit: CalibrationFit, study=(), extra: dict | None = None) -> Path:
    """YAML report: the adopted fit plus the fit-range sensitivity block."""
    doc = {"calibration": _fit_block(fit)}
    rows = []
    for item in study:
        if isinstance(item, CalibrationFit):
            rows.append(_fit_block(item))
        else:
            rows.append({"error": str(item)})
    doc["range_sensitivity"] = rows
    if extra:
        doc["inputs"] = extra
    text = yaml.safe_dump(_plain(doc), sort_keys=True, default_flow_style=None)
    return atomic_write_text(path, text)


def read_calibration(path) -> CalibrationFit:
    try:
        doc = yaml.safe_load(Path(path).read_text())
        c = doc["calibration"]
        return CalibrationFit(
            force_constant=float(c["force_constant_nN_per_V"]),
            contact_offset=float(c["contact_offset_nm"]),
            fit_range=tuple(c["fit_range_nm"]),
            residual_rms=float(c["residual_rms_pN"]),
            uncertainties=(float(c["force_constant_sigma"]), float(c["contact_offset_sigma"])),
            n_points=int(c.get("n_points", 0)),
        )
    except (OSError, KeyError, TypeError, yaml.YAMLError) as exc:
        raise InvalidInputError(f"cannot read calibration report {path}: {exc}") from exc
