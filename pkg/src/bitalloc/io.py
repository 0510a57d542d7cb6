"""File formats: surfaces and reports as JSON, samples and plot data as CSV.

Every JSON record carries ``schema_version``; readers accept any ``1.x`` and
reject other majors.  Floats are written with ``repr`` so a value read back
is bit-identical to the one written.

Surface file layout::

    {"schema_version": "1.0", "kind": "surfaces", "n_streams": 2, "n_tasks": 1,
     "tasks": [{"gamma": 1.0, "alphas": [4.0, 2.0], "betas": [0.05, 0.02],
                "r_squared": 0.999, "n_samples_used": 60}]}

``r_squared`` and ``n_samples_used`` are optional.  Sample files are CSV with
a header ``R_1,..,R_N,D_1,..,D_k``.
"""
from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fitting import MeasuredSample
from .model import BitAllocError, DistortionSurface, RateVector

SCHEMA_VERSION = "1.0"
_RATE_COL = re.compile(r"^R_(\d+)$")
_DIST_COL = re.compile(r"^D_(\d+)$")


class FormatError(BitAllocError):
    """A file is malformed or written under an unsupported schema."""


def format_float(x: float) -> str:
    return repr(float(x))


def check_schema(record: dict) -> None:
    version = record.get("schema_version")
    if not isinstance(version, str):
        raise FormatError("missing schema_version")
    major = version.split(".", 1)[0]
    if major != SCHEMA_VERSION.split(".", 1)[0]:
        raise FormatError(f"unsupported schema version {version!r}")


def dump_json(record: dict, path: Optional[Path] = None) -> str:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **record}, indent=2,
                      allow_nan=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_json(path) -> dict:
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON in {path}: {exc.msg}") from None
    if not isinstance(record, dict):
        raise FormatError("top-level JSON value must be an object")
    check_schema(record)
    return record


# -- surfaces ------------------------------------------------------------------

def surfaces_record(surfaces: Sequence[DistortionSurface], fits=None) -> dict:
    tasks = []
    for i, s in enumerate(surfaces):
        entry = {"gamma": s.gamma, "alphas": s.alphas.tolist(), "betas": s.betas.tolist()}
        if fits is not None:
            entry["r_squared"] = fits[i].r_squared
            entry["n_samples_used"] = fits[i].n_samples_used
        tasks.append(entry)
    return {"kind": "surfaces", "n_streams": surfaces[0].n_streams,
            "n_tasks": len(surfaces), "tasks": tasks}


def write_surfaces(path, surfaces: Sequence[DistortionSurface], fits=None) -> None:
    dump_json(surfaces_record(surfaces, fits), path)


def read_surfaces(path) -> list[DistortionSurface]:
    record = load_json(path)
    try:
        tasks = record["tasks"]
        surfaces = [DistortionSurface(float(t["gamma"]), t["alphas"], t["betas"])
                    for t in tasks]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed surface record: {exc}") from None
    if not surfaces:
        raise FormatError("surface file lists no tasks")
    n = record.get("n_streams", surfaces[0].n_streams)
    if n != surfaces[0].n_streams or record.get("n_tasks", len(surfaces)) != len(surfaces):
        raise FormatError("n_streams/n_tasks disagree with the task records")
    if any(s.n_streams != n for s in surfaces):
        raise FormatError("surfaces have different stream counts")
    return surfaces


# -- samples -------------------------------------------------------------------

def _indexed(names, pattern):
    idx = []
    for name in names:
        m = pattern.match(name)
        if m:
            idx.append(int(m.group(1)))
    return idx


def write_samples(path, samples: Sequence[MeasuredSample]) -> None:
    n = len(samples[0].rates)
    k = samples[0].distortions.size
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([f"R_{j + 1}" for j in range(n)] + [f"D_{i + 1}" for i in range(k)])
        for s in samples:
            out.writerow([format_float(x) for x in s.rates.rates]
                         + [format_float(x) for x in s.distortions])


def read_samples(path) -> list[MeasuredSample]:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise FormatError("samples file is empty")
    header = [c.strip() for c in rows[0]]
    n = len(_indexed(header, _RATE_COL))
    k = len(_indexed(header, _DIST_COL))
    expected = [f"R_{j + 1}" for j in range(n)] + [f"D_{i + 1}" for i in range(k)]
    if n == 0 or k == 0 or header != expected:
        raise FormatError("header must be R_1..R_N followed by D_1..D_k")
    samples = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != n + k:
            raise FormatError(f"line {lineno}: expected {n + k} columns, got {len(row)}")
        try:
            values = [float(c) for c in row]
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in values):
            raise FormatError(f"line {lineno}: non-finite value")
        if any(v < 0 for v in values[:n]):
            raise BitAllocError(f"invalid rate on line {lineno}")
        samples.append(MeasuredSample(RateVector(values[:n]), np.array(values[n:])))
    return samples


# -- plot tables ---------------------------------------------------------------

def write_table(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(list(header))
        for row in rows:
            out.writerow([c if isinstance(c, str) else format_float(c) for c in row])
