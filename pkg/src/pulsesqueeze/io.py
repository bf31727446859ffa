"""File formats: curve CSVs, protocol JSON, run manifests."""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .propagate import Protocol, TwistSegment

DIGITS = 12


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return f"{float(value):.{DIGITS}g}"


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path: Path | str) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def protocol_to_dict(n_particles: int, protocol: Protocol, xi2: float, seed: int) -> dict:
    return {
        "n_particles": int(n_particles),
        "segments": [
            {"theta_rad": float(s.theta), "duration_inv_chi": float(s.duration)}
            for s in protocol.segments
        ],
        "xi2": float(xi2),
        "seed": int(seed),
    }


def protocol_from_dict(data: dict) -> tuple[int, Protocol, float, int]:
    try:
        segments = tuple(
            TwistSegment(float(s["theta_rad"]), float(s["duration_inv_chi"])) for s in data["segments"]
        )
        return int(data["n_particles"]), Protocol(segments), float(data["xi2"]), int(data["seed"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed protocol document: {exc}") from exc


def write_json(path: Path | str, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def read_protocol(path: Path | str) -> tuple[int, Protocol, float, int]:
    return protocol_from_dict(json.loads(Path(path).read_text()))


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return value


@dataclass
class RunManifest:
    """Provenance of one CLI invocation.

    Data files carry the manifest's stem as a filename prefix, so each data
    file points back to the manifest that produced it without embedding the
    timestamp in the data itself.
    """

    command: str
    params: dict
    seed: int
    version: str = field(default_factory=code_version)
    python: str = field(default_factory=platform.python_version)
    wall_time_s: float = 0.0
    started_at: str = ""
    outputs: list[str] = field(default_factory=list)
    results: dict = field(default_factory=dict)

    @property
    def filename(self) -> str:
        return f"{self.command}_manifest.json"

    def output_path(self, out_dir: Path, name: str) -> Path:
        path = Path(out_dir) / f"{self.command}_{name}"
        self.outputs.append(path.name)
        return path

    def write(self, out_dir: Path | str) -> Path:
        return write_json(Path(out_dir) / self.filename, _jsonable(asdict(self)))
