"""Single-file checkpoint archive: a JSON header plus one binary weight blob.

The archive is a zip with two members, ``header.json`` and ``weights.bin``.
Members carry a fixed timestamp so identical content gives identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def pack(kind: str, header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    index, blob, offset = [], io.BytesIO(), 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        raw = a.tobytes()
        index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        blob.write(raw)
        offset += len(raw)
    head = {"format_version": FORMAT_VERSION, "type": kind, **header, "tensors": index}
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_DEFLATED) as zf:
        for member, data in (
            ("header.json", json.dumps(head, sort_keys=True, indent=1).encode()),
            ("weights.bin", blob.getvalue()),
        ):
            info = zipfile.ZipInfo(member, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, data)
    return out.getvalue()


def unpack(data: bytes, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        head = json.loads(zf.read("header.json"))
        blob = zf.read("weights.bin")
    if "format_version" not in head:
        raise ValueError("checkpoint header has no format_version")
    if head["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {head['format_version']}")
    if kind is not None and head.get("type") != kind:
        raise ValueError(f"expected a {kind!r} checkpoint, found {head.get('type')!r}")
    arrays = {}
    for t in head.pop("tensors"):
        buf = blob[t["offset"] : t["offset"] + t["nbytes"]]
        arrays[t["name"]] = np.frombuffer(buf, dtype=np.dtype(t["dtype"])).reshape(t["shape"]).copy()
    return head, arrays


def write(path, kind, header, arrays):
    Path(path).write_bytes(pack(kind, header, arrays))


def read(path, kind=None):
    return unpack(Path(path).read_bytes(), kind)
