"""Checkpoint container: a directory holding a text manifest, a raw tensor
payload, and a JSON state header.

Layout::

    <dir>/manifest.txt   one line per tensor: "<name> <shape> f32 <offset>"
                         (shape is comma-separated dims, offset in bytes)
    <dir>/tensors.bin    concatenated little-endian IEEE-754 32-bit floats
    <dir>/state.json     everything that is not a tensor: architecture and
                         training configuration, normalization stats, step
                         counter, RNG states, sampler position

Tensors are written in sorted-name order so identical state produces
byte-identical files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.txt"
PAYLOAD_NAME = "tensors.bin"
STATE_NAME = "state.json"


class CheckpointError(RuntimeError):
    """Raised for unreadable or internally inconsistent checkpoints."""


def save_checkpoint(path, tensors: dict[str, np.ndarray], state: dict) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    offset = 0
    with open(path / PAYLOAD_NAME, "wb") as payload:
        for name in sorted(tensors):
            if " " in name:
                raise CheckpointError(f"tensor name {name!r} contains a space")
            arr = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
            shape = ",".join(str(d) for d in arr.shape)
            manifest_lines.append(f"{name} {shape} f32 {offset}")
            payload.write(arr.tobytes())
            offset += arr.nbytes
    with open(path / MANIFEST_NAME, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(manifest_lines) + "\n")
    with open(path / STATE_NAME, "w", encoding="utf-8", newline="") as fh:
        json.dump(state, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    for required in (MANIFEST_NAME, PAYLOAD_NAME, STATE_NAME):
        if not (path / required).is_file():
            raise CheckpointError(f"checkpoint at {path} is missing {required}")
    with open(path / STATE_NAME, "r", encoding="utf-8") as fh:
        try:
            state = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt state.json: {exc}") from None
    payload = (path / PAYLOAD_NAME).read_bytes()
    tensors: dict[str, np.ndarray] = {}
    with open(path / MANIFEST_NAME, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 4:
                raise CheckpointError(f"manifest line {lineno}: expected 4 fields")
            name, shape_text, dtype, offset_text = parts
            if dtype != "f32":
                raise CheckpointError(f"manifest line {lineno}: unsupported dtype {dtype}")
            try:
                shape = tuple(int(d) for d in shape_text.split(",")) if shape_text else ()
                offset = int(offset_text)
            except ValueError:
                raise CheckpointError(f"manifest line {lineno}: malformed entry") from None
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            end = offset + 4 * count
            if offset < 0 or end > len(payload):
                raise CheckpointError(f"manifest line {lineno}: payload out of range")
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            tensors[name] = arr.reshape(shape).copy()
    return tensors, state


def checkpoint_bytes(path) -> bytes:
    """Concatenated raw bytes of the three files, for bitwise comparisons."""
    path = Path(path)
    return b"".join(
        (path / name).read_bytes() for name in (MANIFEST_NAME, PAYLOAD_NAME, STATE_NAME)
    )


def list_checkpoints(out_dir) -> list[Path]:
    """Step-stamped checkpoint directories under ``out_dir``, oldest first."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        return []
    found = []
    for entry in out_dir.iterdir():
        if entry.is_dir() and entry.name.startswith("ckpt_"):
            try:
                step = int(entry.name.split("_", 1)[1])
            except ValueError:
                continue
            found.append((step, entry))
    return [entry for _, entry in sorted(found, key=lambda it: it[0])]
