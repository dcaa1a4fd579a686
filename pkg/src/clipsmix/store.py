"""JSON Lines serialisation of draw stores.

Line 1 is a header ``{"schema_version", "kernel", "config"}``; each further
line is one record ``{"m", "K", "K_plus", "eta", "theta", "S"}``. Reals are
written with 17 significant digits so a round trip is exact.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import DataError
from .kernels import get_kernel
from .sampler import DrawRecord, DrawStore

SCHEMA_VERSION = 1


def _dump(obj) -> str:
    # json.dumps with fixed 17-digit reals; numpy scalars and arrays accepted
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _dump(obj.tolist())
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(x)
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


dumps = _dump


def record_to_json(rec: DrawRecord, kernel) -> dict:
    return {"m": rec.m, "K": rec.K, "K_plus": rec.K_plus, "eta": rec.eta,
            "theta": kernel.theta_to_json(rec.theta), "S": rec.S}


def record_from_json(obj, kernel) -> DrawRecord:
    return DrawRecord(m=int(obj["m"]), K=int(obj["K"]), K_plus=int(obj["K_plus"]),
                      eta=np.asarray(obj["eta"], dtype=float),
                      theta=kernel.theta_from_json(obj["theta"]),
                      S=np.asarray(obj["S"], dtype=np.int64))


def write_store(path, store: DrawStore):
    kernel = get_kernel(store.kernel)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump({"schema_version": store.schema_version, "kernel": store.kernel,
                        "config": store.config}) + "\n")
        for rec in store.records:
            fh.write(_dump(record_to_json(rec, kernel)) + "\n")


def read_store(path) -> DrawStore:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty store file")
    try:
        header = json.loads(lines[0])
        kernel = get_kernel(header["kernel"])
        records = [record_from_json(json.loads(ln), kernel) for ln in lines[1:]]
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed store ({exc})") from None
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported schema version {header.get('schema_version')}")
    ms = [r.m for r in records]
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise DataError(f"{path}: iteration indices are not increasing")
    for r in records:
        if r.K_plus != int(np.count_nonzero(r.Nk)):
            raise DataError(f"{path}: record m={r.m} has inconsistent K_plus")
    return DrawStore(kernel=header["kernel"], config=header["config"], records=records,
                     schema_version=header["schema_version"])
