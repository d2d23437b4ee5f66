"""Binary checkpoint format: JSON header + raw float32 parameter blocks.

Layout:  magic "MXMK" | u32 version | u64 header length | header JSON (UTF-8)
         | concatenated blocks (row-major float32, little-endian).
The header lists block names/shapes in name order, the config snapshot, the
training step counter, RNG states, and free-form metadata. Save -> load ->
save round-trips byte-identically.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .errors import ParseError, ValidationError

MAGIC = b"MXMK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """A full training snapshot addressable by parameter-block name."""

    config: TrainConfig
    params: dict[str, np.ndarray]
    step: int = 0
    rng: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def capture_rng(np_rng: np.random.Generator) -> dict:
    """JSON-able snapshot of the trainer's numpy generator and torch's CPU RNG."""
    return {
        "numpy": json.loads(json.dumps(np_rng.bit_generator.state)),
        "torch": base64.b64encode(
            torch.get_rng_state().numpy().tobytes()
        ).decode("ascii"),
    }


def restore_rng(state: dict) -> np.random.Generator:
    """Rebuild the numpy generator and restore torch's CPU RNG state."""
    rng = np.random.default_rng()
    rng.bit_generator.state = state["numpy"]
    torch_bytes = base64.b64decode(state["torch"])
    torch.set_rng_state(torch.frombuffer(bytearray(torch_bytes), dtype=torch.uint8).clone())
    return rng


def save_checkpoint(ckpt: Checkpoint, path: Path | str) -> None:
    names = sorted(ckpt.params)
    if len(names) != len(set(names)):
        raise ValidationError("parameter block names must be unique")
    blocks = []
    index = []
    for name in names:
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f4")
        index.append({"name": name, "shape": list(arr.shape)})
        blocks.append(arr.tobytes())
    header = json.dumps(
        {
            "format_version": ckpt.format_version,
            "config": ckpt.config.to_dict(),
            "step": ckpt.step,
            "rng": ckpt.rng,
            "meta": ckpt.meta,
            "blocks": index,
        },
        sort_keys=True,
    ).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", ckpt.format_version, len(header)))
        fh.write(header)
        for blob in blocks:
            fh.write(blob)


def load_checkpoint(path: Path | str) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<IQ", data, 4)
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    offset = 4 + struct.calcsize("<IQ")
    header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    cursor = offset + header_len
    params = {}
    for entry in header["blocks"]:
        shape = tuple(entry["shape"])
        numel = int(np.prod(shape)) if shape else 1
        raw = data[cursor : cursor + 4 * numel]
        if len(raw) != 4 * numel:
            raise ParseError(f"{path}: truncated block {entry['name']}")
        params[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        cursor += 4 * numel
    return Checkpoint(
        config=TrainConfig.from_dict(header["config"]),
        params=params,
        step=header["step"],
        rng=header["rng"],
        meta=header["meta"],
        format_version=version,
    )
