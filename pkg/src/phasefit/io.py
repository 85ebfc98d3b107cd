"""Model persistence (versioned JSON documents) and CSV data ingestion
with a per-coordinate censoring encoding.

CSV encoding: an exact coordinate is a single numeric column; a censored
coordinate is a pair of columns ``<name>_lo`` / ``<name>_hi`` where an empty
or ``inf`` upper cell means right-censored and equal bounds mean exact.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from . import em, em_multi, iph, mph, ph
from .transforms import make_transform

SCHEMA_VERSION = 1


class DataError(ValueError):
    """Malformed input data (CSV parse or invariant violation)."""


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model, metadata=None) -> dict:
    """Serializable document for any supported model type."""
    doc = {"schema_version": SCHEMA_VERSION}
    if isinstance(model, ph.PHModel):
        doc.update(type="ph", pi=_arr(model.pi), T=_arr(model.T))
    elif isinstance(model, iph.IPHModel):
        doc.update(type="iph", pi=_arr(model.base.pi), T=_arr(model.base.T),
                   transform={"family": model.transform.name,
                              "params": _arr(model.transform.params)})
    elif isinstance(model, mph.MPHModel):
        doc.update(type="mph", pi=_arr(model.pi), T=_arr(model.T),
                   R=_arr(model.R))
    elif isinstance(model, mph.BivariateBlockModel):
        doc.update(type="bivblock", alpha=_arr(model.alpha),
                   T11=_arr(model.T11), T12=_arr(model.T12),
                   T22=_arr(model.T22))
    elif isinstance(model, mph.InhomMPHModel):
        doc.update(type="inhom-mph", base=model_to_dict(model.base),
                   transforms=[{"family": tr.name, "params": _arr(tr.params)}
                               for tr in model.transforms])
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    if metadata is not None:
        doc["metadata"] = metadata
    return doc


def dict_to_model(doc: dict):
    """Inverse of model_to_dict; numeric fields round-trip exactly."""
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"unsupported schema version {version!r}")
    kind = doc.get("type")
    if kind == "ph":
        return ph.PHModel(doc["pi"], doc["T"])
    if kind == "iph":
        tr = doc["transform"]
        return iph.IPHModel(ph.PHModel(doc["pi"], doc["T"]),
                            make_transform(tr["family"], tr["params"]))
    if kind == "mph":
        return mph.MPHModel(doc["pi"], doc["T"], doc["R"])
    if kind == "bivblock":
        return mph.BivariateBlockModel(doc["alpha"], doc["T11"], doc["T12"],
                                       doc["T22"])
    if kind == "inhom-mph":
        base = dict_to_model(doc["base"])
        trs = tuple(make_transform(t["family"], t["params"])
                    for t in doc["transforms"])
        return mph.InhomMPHModel(base, trs)
    raise DataError(f"unknown model type tag {kind!r}")


def save_model(model, path: str, metadata=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, metadata), fh, indent=2)
        fh.write("\n")


def load_model(path: str):
    with open(path, encoding="utf-8") as fh:
        return dict_to_model(json.load(fh))


def _coordinate_layout(header):
    """Group header names into coordinates: plain names are exact columns,
    ``name_lo``/``name_hi`` pairs are censored coordinates."""
    layout = []
    used = set()
    for i, name in enumerate(header):
        if i in used:
            continue
        if name.endswith("_lo"):
            stem = name[:-3]
            try:
                j = header.index(stem + "_hi")
            except ValueError:
                raise DataError(f"column {name!r} has no matching {stem}_hi")
            used.update((i, j))
            layout.append((stem, i, j))
        elif name.endswith("_hi"):
            stem = name[:-3]
            if stem + "_lo" not in header:
                raise DataError(f"column {name!r} has no matching {stem}_lo")
        else:
            used.add(i)
            layout.append((name, i, None))
    if not layout:
        raise DataError("no data columns found")
    return layout


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {cell!r}") from None


def ingest(path: str) -> em_multi.MultivariateSample:
    """Read a CSV file into a multivariate sample (d = 1 for univariate
    data).  Row numbers in errors are 1-based data rows (excluding the
    header)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file") from None
        layout = _coordinate_layout(header)
        rows = []
        for rownum, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"row {rownum}: expected {len(header)} fields, got {len(rec)}")
            row = []
            for name, i, j in layout:
                if j is None:
                    y = _parse_float(rec[i].strip(), rownum, name)
                    if y <= 0.0:
                        raise DataError(
                            f"row {rownum}, column {name!r}: exact values "
                            f"must be positive, got {y!r}")
                    row.append(em.exact(y))
                else:
                    lo = _parse_float(rec[i].strip(), rownum, name + "_lo")
                    hicell = rec[j].strip()
                    hi = math.inf if hicell in ("", "inf") else \
                        _parse_float(hicell, rownum, name + "_hi")
                    if hi < lo:
                        raise DataError(
                            f"row {rownum}, column {name!r}: upper bound "
                            f"{hi!r} below lower bound {lo!r}")
                    if hi == lo:
                        if lo <= 0.0:
                            raise DataError(
                                f"row {rownum}, column {name!r}: exact values "
                                f"must be positive, got {lo!r}")
                        row.append(em.exact(lo))
                    else:
                        row.append(em.interval(lo, hi))
            rows.append(tuple(row))
    if not rows:
        raise DataError("no data rows")
    return em_multi.MultivariateSample.from_rows(rows)


def sample_to_observations(sample: em_multi.MultivariateSample):
    """Flatten a d = 1 sample to the univariate observation list."""
    if sample.d != 1:
        raise DataError(f"expected univariate data, got d = {sample.d}")
    return [row[0] for row in sample.rows]


def write_csv(path: str, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (int, float, np.floating))
                             else v for v in row])
