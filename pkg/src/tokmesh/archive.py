"""Named-array archive: a minimal cross-language container for tensors.

File layout (all integers little-endian):

    bytes 0..8    magic b"NARCHIV1"
    bytes 8..16   uint64 manifest length in bytes
    manifest      UTF-8 JSON object:
                    {"format_version": 1,
                     "meta": {...},                      # caller-defined JSON
                     "entries": [{"name": str,
                                  "dtype": str,          # numpy dtype.str, e.g. "<f8"
                                  "shape": [int, ...],
                                  "offset": int,         # into the payload section
                                  "nbytes": int}, ...]}
    payload       raw row-major array bytes, concatenated

The format carries no pickle or executable content and is readable from any
language with a JSON parser.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"NARCHIV1"
FORMAT_VERSION = 1


class ArchiveError(ValueError):
    """File is not a parseable named-array archive."""


class ArchiveVersionError(ArchiveError):
    """Archive has an unsupported format version."""


@dataclass
class Archive:
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> list[str]:
        return sorted(self.arrays)


def save_archive(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write arrays (row-major) plus a JSON-serializable meta dict."""
    entries = []
    payload = bytearray()
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        shape = list(arr.shape)  # before ascontiguousarray, which promotes 0-d to 1-d
        arr = np.ascontiguousarray(arr)
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": shape,
                "offset": len(payload),
                "nbytes": arr.nbytes,
            }
        )
        payload.extend(arr.tobytes())
    manifest = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta or {}, "entries": entries},
        sort_keys=True,
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        fh.write(bytes(payload))


def load_archive(path: str | Path) -> Archive:
    """Read an archive; raises ArchiveError on malformed or foreign files."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise ArchiveError(f"{path}: not a named-array archive (bad magic)")
    (manifest_len,) = struct.unpack("<Q", raw[8:16])
    if 16 + manifest_len > len(raw):
        raise ArchiveError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[16 : 16 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{path}: manifest is not valid JSON") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ArchiveVersionError(f"{path}: format version {version!r}, expected {FORMAT_VERSION}")
    payload = raw[16 + manifest_len :]
    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["entries"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise ArchiveError(f"{path}: entry {entry['name']!r} overruns payload")
        buf = payload[start : start + nbytes]
        arrays[entry["name"]] = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    return Archive(arrays=arrays, meta=manifest.get("meta", {}))
