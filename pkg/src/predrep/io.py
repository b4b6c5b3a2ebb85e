"""Export helpers: row-major CSV with ``#`` header comments plus JSON metadata."""

from __future__ import annotations

import io as _io
import json
from pathlib import Path

import numpy as np


def _header_lines(meta: dict) -> str:
    return "".join(f"# {k}: {json.dumps(v)}\n" for k, v in meta.items())


def matrix_to_csv(matrix, meta: dict | None = None, fmt: str = "%.17g") -> str:
    """Serialize a 1-D or 2-D array row-major, NaN written as empty cells."""
    a = np.asarray(matrix, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("CSV export needs a 1-D or 2-D array; reshape higher ranks first")
    buf = _io.StringIO()
    buf.write(_header_lines({"shape": list(a.shape), **(meta or {})}))
    for row in a:
        buf.write(",".join("" if np.isnan(x) else fmt % x for x in row) + "\n")
    return buf.getvalue()


def csv_to_matrix(text: str) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`matrix_to_csv`; returns ``(array, metadata)``."""
    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = json.loads(value)
        elif line.strip():
            rows.append([float(x) if x else np.nan for x in line.split(",")])
    a = np.array(rows, dtype=float)
    shape = meta.get("shape")
    if shape is not None:
        a = a.reshape(shape)
    return a, meta


def sr_to_csv(sr) -> str:
    """SR or successor-model export carrying discount and policy id in the header."""
    arr = np.asarray(sr, dtype=float)
    meta = {"gamma": getattr(sr, "gamma", None), "policy_id": getattr(sr, "policy_id", None)}
    if arr.ndim == 3:  # action-conditioned: rows are (s, a) pairs
        meta["layout"] = "state-action rows"
        meta["n_actions"] = arr.shape[1]
        arr = arr.reshape(-1, arr.shape[2])
    return matrix_to_csv(arr, meta)


def sf_library_to_json(sfs) -> str:
    return to_json(
        [
            {"policy_id": sf.policy_id, "gamma": sf.gamma, "psi": np.asarray(sf.psi).tolist()}
            for sf in sfs
        ]
    )


def _default(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj, **kwargs) -> str:
    """Deterministic JSON (sorted keys) understanding numpy types and ``to_dict``."""
    return json.dumps(obj, default=_default, sort_keys=True, indent=kwargs.pop("indent", 2), **kwargs)


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
