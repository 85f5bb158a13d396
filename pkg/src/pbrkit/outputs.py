"""Deterministic CSV/JSON writers with a provenance header."""
from __future__ import annotations

import hashlib
import io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import __version__


def header(seed: int | None) -> str:
    return f"# pbrkit {__version__} seed={seed}\n"


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (frozenset, set)):
        return sorted(_clean(v) for v in obj)
    return obj


def csv_text(df: pd.DataFrame, seed: int | None) -> str:
    buf = io.StringIO()
    buf.write(header(seed))
    df.to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


def json_text(obj: Any, seed: int | None) -> str:
    payload = {"meta": {"tool": "pbrkit", "version": __version__, "seed": seed}, "result": _clean(obj)}
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_csv(path: str | Path, df: pd.DataFrame, seed: int | None) -> Path:
    path = Path(path)
    path.write_text(csv_text(df, seed), encoding="utf-8")
    return path


def write_json(path: str | Path, obj: Any, seed: int | None) -> Path:
    path = Path(path)
    path.write_text(json_text(obj, seed), encoding="utf-8")
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_json(path: str | Path) -> Any:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return data.get("result", data) if isinstance(data, dict) else data


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
