"""File formats: network/path JSON, measurement CSV, result JSON, manifests.

Schemas (stable; see README for examples):

* network JSON: ``{"nodes": [...], "links": [{"id", "tail", "head",
  "length", "travel_time"}, ...], "coords": {node: [x, y]}?}``
* path JSON: ordered list of ``{"od": [o, d], "links": [id, ...]}``
* measurement CSV: header ``link_id,count`` (static) or
  ``link_id,time,count`` (dynamic); rows keep file order
* result/bounds JSON: see ``result_to_dict`` / the CLI docs

All floating-point output is printed with 12 significant digits so a rerun
of the same manifest is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path as FsPath
from typing import Sequence

from . import __version__
from .estimators import EstimationResult, VmtBounds
from .network import (
    Link,
    Network,
    Path,
    PathTable,
    validate_network,
    validate_path,
)


class FileFormatError(ValueError):
    """A data file failed to parse or violated its schema."""


def _fmt(value) -> str:
    """12-significant-digit rendering for floats; plain str otherwise."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        if value != value:       # nan
            return "nan"
        if value in (float("inf"), float("-inf")):
            return "inf" if value > 0 else "-inf"
        return format(value, ".12g")
    return str(value)


def _round12(obj):
    """Recursively coerce floats to their 12-significant-digit value."""
    if isinstance(obj, float):
        return float(_fmt(obj)) if obj == obj and abs(obj) != float("inf") else obj
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    return obj


def dump_json(data, path: FsPath | str) -> None:
    text = json.dumps(_round12(data), indent=2, sort_keys=True)
    FsPath(path).write_text(text + "\n")


def _node_key(raw):
    # JSON object keys are strings; fixture nodes are ints.  Accept both.
    if isinstance(raw, str) and raw.lstrip("-").isdigit():
        return int(raw)
    return raw


def load_network(path: FsPath | str) -> Network:
    try:
        data = json.loads(FsPath(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"cannot read network file {path}: {exc}") from exc
    try:
        links = tuple(
            Link(
                id=entry["id"],
                tail=entry["tail"],
                head=entry["head"],
                length=float(entry.get("length", 1.0)),
                travel_time=int(entry.get("travel_time", 1)),
            )
            for entry in data["links"]
        )
        coords = data.get("coords")
        if coords is not None:
            coords = {
                _node_key(node): (float(xy[0]), float(xy[1]))
                for node, xy in coords.items()
            }
        net = Network(nodes=tuple(data["nodes"]), links=links, coords=coords)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"malformed network file {path}: {exc}") from exc
    return validate_network(net)


def save_network(net: Network, path: FsPath | str) -> None:
    data = {
        "nodes": list(net.nodes),
        "links": [
            {
                "id": ln.id,
                "tail": ln.tail,
                "head": ln.head,
                "length": ln.length,
                "travel_time": ln.travel_time,
            }
            for ln in net.links
        ],
    }
    if net.coords is not None:
        data["coords"] = {str(n): list(xy) for n, xy in net.coords.items()}
    dump_json(data, path)


def load_paths(path: FsPath | str, net: Network | None = None) -> tuple[Path, ...]:
    try:
        data = json.loads(FsPath(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"cannot read path file {path}: {exc}") from exc
    if not isinstance(data, list):
        raise FileFormatError(f"path file {path} must hold a JSON list")
    try:
        paths = tuple(
            Path(od=(entry["od"][0], entry["od"][1]), links=tuple(entry["links"]))
            for entry in data
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise FileFormatError(f"malformed path file {path}: {exc}") from exc
    if net is not None:
        for p in paths:
            validate_path(net, p)
    return paths


def save_paths(paths: Sequence[Path], path: FsPath | str) -> None:
    data = [{"od": list(p.od), "links": list(p.links)} for p in paths]
    dump_json(data, path)


@dataclass(frozen=True)
class Measurements:
    """Parsed count file: static rows are link ids, dynamic rows are
    (link id, count time) pairs."""

    kind: str                      # "static" | "dynamic"
    row_labels: tuple
    counts: tuple[float, ...]


def load_measurements(path: FsPath | str) -> Measurements:
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read measurement file {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise FileFormatError(f"measurement file {path} is empty")
    header = [cell.strip().lower() for cell in rows[0]]
    if header == ["link_id", "count"]:
        kind = "static"
    elif header == ["link_id", "time", "count"]:
        kind = "dynamic"
    else:
        raise FileFormatError(
            f"measurement file {path} header must be 'link_id,count' or "
            f"'link_id,time,count', got {rows[0]!r}"
        )
    labels: list = []
    counts: list[float] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FileFormatError(f"{path}:{lineno}: wrong column count")
        try:
            if kind == "static":
                labels.append(row[0].strip())
                counts.append(float(row[1]))
            else:
                labels.append((row[0].strip(), int(row[1])))
                counts.append(float(row[2]))
        except ValueError as exc:
            raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    return Measurements(kind=kind, row_labels=tuple(labels), counts=tuple(counts))


def save_measurements(meas: Measurements, path: FsPath | str) -> None:
    lines = []
    if meas.kind == "static":
        lines.append("link_id,count")
        for lbl, cnt in zip(meas.row_labels, meas.counts):
            lines.append(f"{lbl},{_fmt(float(cnt))}")
    else:
        lines.append("link_id,time,count")
        for (lbl, t), cnt in zip(meas.row_labels, meas.counts):
            lines.append(f"{lbl},{t},{_fmt(float(cnt))}")
    FsPath(path).write_text("\n".join(lines) + "\n")


def write_csv(path: FsPath | str, header: Sequence[str], rows) -> None:
    """Deterministic CSV: fixed newline, 12-significant-digit floats."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    FsPath(path).write_text("\n".join(lines) + "\n")


def result_to_dict(result: EstimationResult, table: PathTable) -> dict:
    alloc = result.allocation
    entries = []
    for j, label in enumerate(alloc.labels):
        if isinstance(label, tuple):
            n, departure = label
        else:
            n, departure = label, None
        entry = {
            "path": int(n),
            "od": list(table.paths[n].od),
            "links": list(table.paths[n].links),
            "flow": float(alloc.x[j]),
        }
        if departure is not None:
            entry["departure"] = int(departure)
        entries.append(entry)
    return {
        "method": result.method,
        "status": result.status,
        "objective": float(result.objective),
        "residual_eq": float(result.residual_eq),
        "residual_cone": float(result.residual_cone),
        "iterations": int(result.iterations),
        "sparsity": alloc.sparsity(),
        "allocation": entries,
        "od_flows": [
            {"od": list(od), "flow": float(f)}
            for od, f in zip(table.od_pairs, result.od_flows)
        ],
        "splits": [
            {"path": int(n), "od": list(table.paths[n].od), "split": float(w)}
            for n, w in sorted(result.splits.items())
        ],
        "objective_trace": [float(v) for v in result.objective_trace],
    }


def bounds_to_dict(bounds: VmtBounds, table: PathTable) -> dict:
    def _alloc_list(alloc):
        return [
            {"path": int(n if not isinstance(n, tuple) else n[0]),
             "flow": float(v)}
            for n, v in zip(alloc.labels, alloc.x)
        ]

    return {
        "vmt_lower": float(bounds.vmt_lower),
        "vmt_upper": float(bounds.vmt_upper),
        "x_min": _alloc_list(bounds.x_min),
        "x_max": _alloc_list(bounds.x_max),
    }


def write_manifest(
    output_path: FsPath | str,
    command: str,
    argv: Sequence[str],
    seed: int | None,
    inputs: dict,
    outputs: Sequence[str],
) -> FsPath:
    """Drop a re-run recipe beside an output file.

    The manifest records the fully resolved argument vector; replaying it
    reproduces every output byte-for-byte (the manifest's own timestamp is
    the only thing that changes).
    """
    manifest = {
        "tool": "odflow",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "inputs": inputs,
        "outputs": [str(o) for o in outputs],
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path = FsPath(str(output_path) + ".manifest.json")
    dump_json(manifest, path)
    return path


def load_manifest(path: FsPath | str) -> dict:
    try:
        data = json.loads(FsPath(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(data, dict) or "argv" not in data:
        raise FileFormatError(f"manifest {path} lacks an argv record")
    return data
