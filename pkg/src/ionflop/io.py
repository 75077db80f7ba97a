"""Reading and writing histogram files and plot-ready tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import ConfigError, InvalidInputError
from .protocol import CountHistogram

FORMAT_NAME = "ionflop-histograms"
FORMAT_VERSION = 1


@dataclass
class HistogramPoint:
    index: int
    energy: float
    scatter_counts: float
    histogram: CountHistogram
    p_excite: float = float("nan")
    rabi_frequency: float = float("nan")


@dataclass
class HistogramSet:
    points: list
    seed: int = None
    config: dict = None
    bright_reference: CountHistogram = None
    dark_reference: CountHistogram = None
    metadata: dict = field(default_factory=dict)


def _nan_to_none(x):
    return None if x != x else x


def histograms_to_json(hs: HistogramSet) -> str:
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "generator": f"ionflop {__version__}",
        "seed": hs.seed,
        "config": hs.config,
        "points": [
            {
                "index": p.index,
                "energy_J": p.energy,
                "scatter_counts": _nan_to_none(p.scatter_counts),
                "p_excite": _nan_to_none(p.p_excite),
                "rabi_frequency": _nan_to_none(p.rabi_frequency),
                "total": p.histogram.total,
                "histogram": p.histogram.to_dict(),
            }
            for p in hs.points
        ],
    }
    if hs.bright_reference is not None:
        doc["reference"] = {
            "bright": hs.bright_reference.to_dict(),
            "dark": hs.dark_reference.to_dict(),
        }
    if hs.metadata:
        doc["metadata"] = hs.metadata
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def histograms_to_csv(hs: HistogramSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["energy_J", "scatter_counts", "count_value", "occurrences"])
    for p in hs.points:
        values, occ = p.histogram.arrays()
        for k, n in zip(values, occ):
            w.writerow([repr(p.energy), repr(p.scatter_counts), int(k), int(n)])
    return buf.getvalue()


def read_histograms(path) -> HistogramSet:
    """Load a histogram file written by ``simulate`` (JSON or flat CSV)."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid JSON: {exc}") from None
        if doc.get("format") != FORMAT_NAME:
            raise InvalidInputError(f"{path}: not an {FORMAT_NAME} file")
        points = [
            HistogramPoint(
                index=int(p["index"]),
                energy=float(p["energy_J"]),
                scatter_counts=float("nan") if p.get("scatter_counts") is None else float(p["scatter_counts"]),
                histogram=CountHistogram.from_dict(p["histogram"]),
                p_excite=float("nan") if p.get("p_excite") is None else float(p["p_excite"]),
                rabi_frequency=float("nan") if p.get("rabi_frequency") is None else float(p["rabi_frequency"]),
            )
            for p in doc["points"]
        ]
        ref = doc.get("reference")
        return HistogramSet(
            points=points,
            seed=doc.get("seed"),
            config=doc.get("config"),
            bright_reference=CountHistogram.from_dict(ref["bright"]) if ref else None,
            dark_reference=CountHistogram.from_dict(ref["dark"]) if ref else None,
            metadata=doc.get("metadata", {}),
        )
    return _read_histogram_csv(path, text)


def _read_histogram_csv(path, text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:4] != ["energy_J", "scatter_counts", "count_value", "occurrences"]:
        raise InvalidInputError(f"{path}: missing histogram CSV header")
    by_energy = {}
    order = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            e, c, k, n = float(row[0]), float(row[1]), int(row[2]), int(row[3])
        except (ValueError, IndexError):
            raise InvalidInputError(f"{path}:{lineno}: malformed row {row!r}") from None
        if e not in by_energy:
            by_energy[e] = (c, {})
            order.append(e)
        by_energy[e][1][k] = by_energy[e][1].get(k, 0) + n
    points = [
        HistogramPoint(i, e, by_energy[e][0], CountHistogram(by_energy[e][1])) for i, e in enumerate(order)
    ]
    return HistogramSet(points=points)


def write_table(path, header, rows, fmt="csv"):
    path = Path(path)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])
        path.write_text(buf.getvalue())
    elif fmt == "json":
        path.write_text(json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n")
    else:
        raise ConfigError(f"unknown format {fmt!r}", "output.format")
    return path


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, default=_json_default) + "\n")


def _json_default(o):
    try:
        return float(o)
    except (TypeError, ValueError):
        return str(o)
