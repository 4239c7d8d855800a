"""JSON checkpoints: named arrays stored as {name: {shape, row-major values}}.

The format round-trips float64 exactly (json floats serialize via repr). A
checkpoint may carry a header (model kind, graph variant, config) and, when
saved mid-training, the optimizer state.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def arrays_to_json(arrays: dict[str, np.ndarray]) -> dict:
    return {
        name: {"shape": list(arr.shape), "values": np.asarray(arr).reshape(-1).tolist()}
        for name, arr in arrays.items()
    }


def arrays_from_json(obj: dict) -> dict[str, np.ndarray]:
    out = {}
    for name, entry in obj.items():
        arr = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        out[name] = arr
    return out


def save_checkpoint(
    path: str | Path,
    arrays: dict[str, np.ndarray],
    header: dict | None = None,
    optimizer: dict | None = None,
) -> None:
    doc = {"version": 1}
    if header:
        doc.update(header)
    doc["params"] = arrays_to_json(arrays)
    if optimizer is not None:
        doc["optimizer"] = optimizer
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict, dict | None]:
    doc = json.loads(Path(path).read_text())
    arrays = arrays_from_json(doc["params"])
    header = {k: v for k, v in doc.items() if k not in ("params", "optimizer")}
    return arrays, header, doc.get("optimizer")
