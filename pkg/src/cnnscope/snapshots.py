"""Per-step tensor snapshots: JSON header + raw little-endian float64 blocks.

Layout: magic, uint32 header length, UTF-8 JSON header (sorted keys, so the
same run always produces identical bytes), then each tensor's raw data in
header order.  Snapshots carry everything needed to re-derive any view
offline: per-layer weights, biases, batch-summed and accumulated activation
maps, the trajectory so far, and the latest similarity report per layer.
"""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .similarity import SimilarityReport
from .views import TrajectoryTrace

MAGIC = b"CSNAP1\n"
_NAME_RE = re.compile(r"snapshot_(\d{8})\.snap$")


def snapshot_filename(step: int) -> str:
    return f"snapshot_{step:08d}.snap"


@dataclass
class Snapshot:
    step: int
    loss: float
    layer_ids: list[int]
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    reports: dict[int, SimilarityReport | None] = field(default_factory=dict)

    def weights(self, layer: int) -> np.ndarray:
        return self.tensors[f"weights_{layer}"]

    def bias(self, layer: int) -> np.ndarray:
        return self.tensors[f"bias_{layer}"]

    def summed(self, layer: int) -> np.ndarray:
        return self.tensors[f"summed_{layer}"]

    def accum(self, layer: int) -> np.ndarray:
        return self.tensors[f"accum_{layer}"]

    def trajectory(self, dims: tuple[int, int, int]) -> TrajectoryTrace:
        pts = self.tensors.get("traj_points")
        steps = self.tensors.get("traj_steps")
        if pts is None or pts.size == 0:
            return TrajectoryTrace(dims=dims)
        return TrajectoryTrace(
            dims=dims,
            points=tuple((float(x), float(y), float(z)) for x, y, z in pts.reshape(-1, 3)),
            steps=tuple(int(s) for s in steps),
        )


def write_snapshot(path: str, snapshot: Snapshot) -> int:
    names = list(snapshot.tensors)
    header = {
        "format": "cnnscope-snapshot-1",
        "step": snapshot.step,
        "loss": snapshot.loss,
        "layers": snapshot.layer_ids,
        "reports": {
            str(layer): (rep.to_jsonable() if rep is not None else None)
            for layer, rep in snapshot.reports.items()
        },
        "tensors": [
            {"name": name, "shape": list(snapshot.tensors[name].shape)} for name in names
        ],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        for name in names:
            f.write(np.ascontiguousarray(snapshot.tensors[name], dtype="<f8").tobytes())
    return os.path.getsize(path)


def read_snapshot(path: str) -> Snapshot:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    reports = {
        int(layer): (SimilarityReport.from_jsonable(rep) if rep is not None else None)
        for layer, rep in header.get("reports", {}).items()
    }
    return Snapshot(
        step=header["step"],
        loss=header["loss"],
        layer_ids=list(header["layers"]),
        tensors=tensors,
        reports=reports,
    )


def list_snapshots(directory: str) -> list[tuple[int, str]]:
    """Sorted (step, path) pairs for every snapshot file in a directory."""
    out = []
    for name in os.listdir(directory):
        m = _NAME_RE.match(name)
        if m:
            out.append((int(m.group(1)), os.path.join(directory, name)))
    return sorted(out)
