"""On-disk formats: atomic JSON/CSV writes and raw float64 arrays with JSON sidecars.

Arrays are stored as ``<stem>.bin`` (little-endian float64, C order) next to a
``<stem>.json`` sidecar describing the shape and provenance. Every write goes to
a temporary file in the target directory first and is then renamed, so readers
never observe a half-written artifact.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from src.shared.errors import StorageError
from src.shared.logging import get_logger

logger = get_logger(__name__)

STORAGE_VERSION = 1
ARRAY_DTYPE = np.dtype("<f8")


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as e:
        raise StorageError(f"Failed to write {path}: {e}", original_error=e) from e


def write_json(path: Path, data: dict[str, Any]) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    _atomic_write_bytes(Path(path), (text + "\n").encode("utf-8"))


def read_json(path: Path) -> dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}", original_error=e) from e
    except json.JSONDecodeError as e:
        raise StorageError(f"Malformed JSON in {path}: {e}", original_error=e) from e


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(value) for value in row])
    _atomic_write_bytes(Path(path), buffer.getvalue().encode("utf-8"))


def _csv_cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def read_csv(path: Path) -> list[dict[str, str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise StorageError(f"Failed to read {path}: {e}", original_error=e) from e


def array_paths(stem: Path) -> tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_name(stem.name + ".bin"), stem.with_name(stem.name + ".json")


def write_array(stem: Path, values: np.ndarray, metadata: dict[str, Any]) -> tuple[Path, Path]:
    bin_path, json_path = array_paths(stem)
    array = np.ascontiguousarray(values, dtype=ARRAY_DTYPE)
    _atomic_write_bytes(bin_path, array.tobytes(order="C"))
    sidecar = {
        "version": STORAGE_VERSION,
        "dtype": "float64",
        "byte_order": "little",
        "shape": list(array.shape),
        **metadata,
    }
    write_json(json_path, sidecar)
    return bin_path, json_path


def read_array(stem: Path) -> tuple[np.ndarray, dict[str, Any]]:
    bin_path, json_path = array_paths(stem)
    sidecar = read_json(json_path)
    try:
        raw = bin_path.read_bytes()
    except OSError as e:
        raise StorageError(f"Failed to read {bin_path}: {e}", original_error=e) from e
    values = np.frombuffer(raw, dtype=ARRAY_DTYPE).astype(np.float64)
    shape = tuple(int(n) for n in sidecar.get("shape", [values.size]))
    if int(np.prod(shape)) != values.size:
        raise StorageError(
            f"{bin_path} holds {values.size} values but its sidecar declares shape {shape}"
        )
    return values.reshape(shape), sidecar


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as e:
        raise StorageError(f"Failed to hash {path}: {e}", original_error=e) from e
    return digest.hexdigest()


def stable_hash(data: Any) -> str:
    """SHA-256 of the canonical JSON rendering of ``data``."""
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def array_hash(*arrays: np.ndarray) -> str:
    """SHA-256 over the little-endian float64 bytes of each array in turn."""
    digest = hashlib.sha256()
    for array in arrays:
        values = np.ascontiguousarray(array, dtype=ARRAY_DTYPE)
        digest.update(str(values.shape).encode("ascii"))
        digest.update(values.tobytes(order="C"))
    return digest.hexdigest()


__all__ = [
    "STORAGE_VERSION",
    "write_json",
    "read_json",
    "write_csv",
    "read_csv",
    "array_paths",
    "write_array",
    "read_array",
    "file_sha256",
    "stable_hash",
    "array_hash",
]
