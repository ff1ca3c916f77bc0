"""File formats for frames, quadrature data, reconstructions and reports.

Every writer goes through :func:`atomic_write`, so a crashed run never
leaves a half-written file behind.  Floats are written with 17 significant
digits, which round-trips ``float64`` exactly.
"""

import csv
import hashlib
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import DegenerateDataError
from .fitting import FitResult, TimeSeries
from .fock import WignerGrid
from .imaging import ImageFrame, ImagingGeometry
from .mle import MleResult
from .quadrature import QuadratureDataset

__all__ = [
    "DataFileError",
    "atomic_write",
    "file_digest",
    "write_image",
    "read_image",
    "write_quadrature",
    "read_quadrature",
    "read_quadrature_dir",
    "write_mle_result",
    "read_mle_result",
    "write_fit_result",
    "read_fit_result",
    "write_time_series",
    "read_time_series",
    "write_bootstrap_report",
    "write_wigner",
    "read_wigner",
    "write_hinton",
    "write_robustness_map",
    "write_noise_bias_table",
    "write_json",
]

FLOAT_FMT = "%.17g"
QUADRATURE_HEADER = ("theta_rad", "u", "weight")
_META_KEYS = ("magnification", "flight_time_s", "exposure_s", "pixel_pitch_m", "n_averaged")


class DataFileError(DegenerateDataError):
    """An input file is missing, malformed or inconsistent."""


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def file_digest(path):
    """SHA-256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _table_text(header, columns):
    buf = _io.StringIO()
    np.savetxt(buf, np.column_stack(columns), delimiter=",", fmt=FLOAT_FMT,
               header=",".join(header), comments="")
    return buf.getvalue()


def _read_table(path, expected):
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"{path}: no such file")
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise DataFileError(f"{path}: empty file")
    header = [h.strip() for h in header]
    if tuple(header[: len(expected)]) != tuple(expected):
        raise DataFileError(f"{path}: header {header} does not start with {list(expected)}")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from exc
    if data.shape[0] == 0 or data.shape[1] != len(header):
        raise DataFileError(f"{path}: expected {len(header)} columns of data")
    if not np.all(np.isfinite(data)):
        raise DataFileError(f"{path}: non-finite values")
    return header, data


def write_json(path, obj):
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: invalid JSON ({exc})") from exc


# ---------------------------------------------------------------------------
# Image frames


def _meta_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta")


def write_image(path, frame):
    """Write a frame as a CSV grid plus a ``<name>.meta`` key=value sidecar."""
    buf = _io.StringIO()
    np.savetxt(buf, frame.counts, delimiter=",", fmt=FLOAT_FMT)
    g = frame.geometry
    meta = {
        "magnification": g.magnification,
        "flight_time_s": g.flight_time,
        "exposure_s": g.exposure,
        "pixel_pitch_m": g.pixel_pitch,
        "n_averaged": frame.n_averaged,
    }
    atomic_write(_meta_path(path), "".join(f"{k}={v!r}\n" for k, v in meta.items()))
    return atomic_write(path, buf.getvalue())


def read_image(path):
    """Read a frame written by :func:`write_image`."""
    path = Path(path)
    meta_path = _meta_path(path)
    if not path.is_file():
        raise DataFileError(f"{path}: no such file")
    if not meta_path.is_file():
        raise DataFileError(f"{meta_path}: missing metadata sidecar")
    meta = {}
    for line in meta_path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataFileError(f"{meta_path}: malformed line {line!r}")
        meta[key.strip()] = value.strip()
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise DataFileError(f"{meta_path}: missing keys {missing}")
    unknown = sorted(set(meta) - set(_META_KEYS))
    if unknown:
        raise DataFileError(f"{meta_path}: unknown keys {unknown}")
    try:
        counts = np.loadtxt(path, delimiter=",", ndmin=2)
        geometry = ImagingGeometry(
            magnification=float(meta["magnification"]),
            flight_time=float(meta["flight_time_s"]),
            pixel_pitch=float(meta["pixel_pitch_m"]),
            exposure=float(meta["exposure_s"]),
        )
        return ImageFrame(counts, geometry, int(meta["n_averaged"]))
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Quadrature data


def write_quadrature(path, data):
    """CSV with header ``theta_rad,u,weight``."""
    return atomic_write(path, _table_text(QUADRATURE_HEADER, [data.theta, data.u, data.weight]))


def read_quadrature(path):
    _, table = _read_table(path, QUADRATURE_HEADER)
    try:
        return QuadratureDataset(table[:, 0], table[:, 1], table[:, 2])
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from exc


def read_quadrature_dir(path, pattern="quadrature_*.csv"):
    """Concatenate every quadrature CSV in a directory (or read one file)."""
    path = Path(path)
    if path.is_file():
        return read_quadrature(path)
    files = sorted(path.glob(pattern))
    if not files:
        raise DataFileError(f"{path}: no files matching {pattern}")
    return QuadratureDataset.concatenate([read_quadrature(f) for f in files])


# ---------------------------------------------------------------------------
# Reconstructions


def write_mle_result(path, result, extra=None):
    """JSON with ``n_max``, real and imaginary matrices, iterations and convergence."""
    rho = np.asarray(result.rho)
    doc = {
        "n_max": int(rho.shape[0] - 1),
        "real": rho.real.tolist(),
        "imag": rho.imag.tolist(),
        "iterations_used": int(result.iterations_used),
        "converged": bool(result.converged),
        "final_step": float(result.final_step),
        "log_likelihood": [float(v) for v in result.log_likelihood_trace],
        "clamped_input": bool(result.clamped_input),
        "diluted_steps": int(result.diluted_steps),
    }
    if extra:
        doc.update(extra)
    return write_json(path, doc)


def read_mle_result(path):
    doc = _read_json(path)
    try:
        rho = np.asarray(doc["real"], dtype=float) + 1j * np.asarray(doc["imag"], dtype=float)
        if rho.shape != (doc["n_max"] + 1,) * 2:
            raise DataFileError(f"{path}: matrix shape {rho.shape} disagrees with n_max={doc['n_max']}")
        trace = np.asarray(doc.get("log_likelihood", [np.nan]), dtype=float)
        return MleResult(rho, int(doc["iterations_used"]), float(doc.get("final_step", np.nan)), trace,
                         bool(doc["converged"]), bool(doc.get("clamped_input", False)),
                         int(doc.get("diluted_steps", 0)))
    except KeyError as exc:
        raise DataFileError(f"{path}: missing key {exc}") from exc


def write_hinton(path, rho):
    """Long-form ``row,col,magnitude,phase_rad`` table for Hinton diagrams."""
    rho = np.asarray(rho)
    rows, cols = np.indices(rho.shape)
    return atomic_write(path, _table_text(
        ("row", "col", "magnitude", "phase_rad"),
        [rows.ravel(), cols.ravel(), np.abs(rho).ravel(), np.angle(rho).ravel()],
    ))


def write_wigner(path, grid):
    """Long-form ``x,p,w`` table in units of ``x0`` and ``p0``, ``x`` fastest."""
    xx, pp = np.meshgrid(grid.x_axis, grid.p_axis)
    return atomic_write(path, _table_text(("x", "p", "w"), [xx.ravel(), pp.ravel(), grid.values.ravel()]))


def read_wigner(path):
    _, t = _read_table(path, ("x", "p", "w"))
    x_axis = np.unique(t[:, 0])
    p_axis = np.unique(t[:, 1])
    if x_axis.size * p_axis.size != t.shape[0]:
        raise DataFileError(f"{path}: not a rectangular grid")
    order = np.lexsort((t[:, 0], t[:, 1]))
    return WignerGrid(x_axis, p_axis, t[order, 2].reshape(p_axis.size, x_axis.size))


# ---------------------------------------------------------------------------
# Fits and time series


def write_fit_result(path, result, extra=None):
    """JSON with parameter names, values, errors and covariance."""
    doc = {
        "names": list(result.names),
        "values": [float(v) for v in result.values],
        "errors": [float(v) for v in result.standard_errors],
        "covariance": np.asarray(result.covariance, dtype=float).tolist(),
        "residual_norm": float(result.residual_norm),
        "converged": bool(result.converged),
        "message": str(result.message),
        "derived": {k: v for k, v in result.derived.items()},
    }
    if extra:
        doc.update(extra)
    return write_json(path, doc)


def read_fit_result(path):
    doc = _read_json(path)
    try:
        return FitResult(tuple(doc["names"]), np.asarray(doc["values"], dtype=float),
                         np.asarray(doc["errors"], dtype=float), np.asarray(doc["covariance"], dtype=float),
                         float(doc["residual_norm"]), bool(doc["converged"]), doc.get("message", ""),
                         doc.get("derived", {}))
    except KeyError as exc:
        raise DataFileError(f"{path}: missing key {exc}") from exc


def write_time_series(path, series):
    """CSV ``t_s,value[,error]``."""
    if series.y_err is None:
        return atomic_write(path, _table_text(("t_s", "value"), [series.t, series.y]))
    return atomic_write(path, _table_text(("t_s", "value", "error"), [series.t, series.y, series.y_err]))


def read_time_series(path):
    header, t = _read_table(path, ("t_s", "value"))
    if len(header) > 3 or (len(header) == 3 and header[2] != "error"):
        raise DataFileError(f"{path}: expected columns t_s,value[,error], got {header}")
    try:
        return TimeSeries(t[:, 0], t[:, 1], t[:, 2] if len(header) == 3 else None)
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Study reports


def write_bootstrap_report(path, report, archive_dir=None):
    """JSON statistics; per-replica matrices go to ``archive_dir`` when given."""
    doc = {
        "n_successful": report.n_successful,
        "negativities": report.negativities,
        "negativity_mean": report.negativity_mean,
        "negativity_std": report.negativity_std,
        "negativity_band": list(report.negativity_band),
        "element_means_real": report.element_means.real,
        "element_means_imag": report.element_means.imag,
        "element_stds": report.element_stds,
        "population_band": report.population_band,
        "fidelities": report.fidelities,
        "converged": report.converged,
        "failures": [str(f) for f in report.failures],
    }
    if archive_dir is not None:
        archive_dir = Path(archive_dir)
        for k, rho in enumerate(report.replica_rhos):
            write_json(archive_dir / f"replica_{k:04d}.json",
                       {"n_max": rho.shape[0] - 1, "real": rho.real, "imag": rho.imag})
    return write_json(path, doc)


def write_robustness_map(path, rmap):
    header = ("P0", "P1", "P2", "fidelity", "gamma_true", "gamma_mle", "delta_gamma")
    p = rmap.populations
    return atomic_write(path, _table_text(header, [p[:, 0], p[:, 1], p[:, 2], rmap.fidelity, rmap.gamma_true,
                                                   rmap.gamma_mle, rmap.delta_gamma]))


def write_noise_bias_table(path, table):
    """Long form: one row per (noise level, simulation)."""
    levels, sims, n_show = table.populations.shape
    lev = np.repeat(table.noise_levels, sims)
    sim = np.tile(np.arange(sims), levels)
    pops = table.populations.reshape(levels * sims, n_show)
    header = ("noise_rms", "sim", "wigner_at_min", *(f"P{n}" for n in range(n_show)))
    cols = [lev, sim, table.wigner_values.ravel(), *pops.T]
    return atomic_write(path, _table_text(header, cols))

