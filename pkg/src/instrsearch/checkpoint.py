"""Binary checkpoint format.

Layout: magic, format version (u16), header length (u32), a JSON header
describing every array, the arrays as little-endian bytes in header order,
and a SHA-256 digest of everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .encoder import EncoderParams
from .errors import ChecksumMismatch, CorruptFile, VersionMismatch
from .trainer import Model, Moments, TrainConfig, TrainState, config_from_dict

MAGIC = b"INSCKPT\n"
FORMAT_VERSION = 1
_DIGEST = 32


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab_checksums: dict[str, str]
    rules_checksum: str
    state: TrainState
    seed: int
    version: int = FORMAT_VERSION
    metadata: dict = field(default_factory=dict)

    @property
    def model(self) -> Model:
        return self.state.model

    @property
    def epoch(self) -> int:
        return self.state.epoch


def _arrays(cp: Checkpoint) -> list[tuple[str, np.ndarray]]:
    params = cp.state.model.parameters()
    out = list(params.items())
    out += [(f"moment1.{k}", cp.state.moments.first[k]) for k in params]
    out += [(f"moment2.{k}", cp.state.moments.second[k]) for k in params]
    return out


def encode_checkpoint(cp: Checkpoint) -> bytes:
    arrays = _arrays(cp)
    blobs, table, offset = [], [], 0
    for name, arr in arrays:
        raw = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
        table.append({"name": name, "dtype": arr.dtype.newbyteorder("<").str, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "config": cp.config.to_dict(),
        "vocab_checksums": dict(sorted(cp.vocab_checksums.items())),
        "rules_checksum": cp.rules_checksum,
        "epoch": cp.state.epoch,
        "optimizer_step": cp.state.moments.step,
        "seed": cp.seed,
        "metadata": cp.metadata,
        "arrays": table,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = MAGIC + struct.pack("<HI", cp.version, len(head)) + head + b"".join(blobs)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(cp: Checkpoint, path) -> None:
    with open(path, "wb") as f:
        f.write(encode_checkpoint(cp))


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    if not data.startswith(MAGIC):
        raise CorruptFile(f"{source}: not a checkpoint file")
    fixed = len(MAGIC) + 6
    if len(data) < fixed + _DIGEST:
        raise CorruptFile(f"{source}: truncated")
    version, head_len = struct.unpack_from("<HI", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{source}: checkpoint format {version}, expected {FORMAT_VERSION}")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFile(f"{source}: digest mismatch (truncated or modified)")
    try:
        header = json.loads(body[fixed:fixed + head_len].decode("utf-8"))
        base = fixed + head_len
        arrays = {}
        for entry in header["arrays"]:
            start = base + entry["offset"]
            raw = body[start:start + entry["nbytes"]]
            if len(raw) != entry["nbytes"]:
                raise CorruptFile(f"{source}: array {entry['name']} is cut short")
            arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
            arrays[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="))
        config = config_from_dict(header["config"])
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptFile(f"{source}: bad header ({exc})") from None

    def encoder(prefix: str) -> EncoderParams:
        return EncoderParams(**{f.name: arrays[f"{prefix}.{f.name}"] for f in fields(EncoderParams)})

    try:
        embeddings = {k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("embed.")}
        model = Model(embeddings, encoder("cenc"), encoder("tenc"))
        names = list(model.parameters())
        moments = Moments({k: arrays[f"moment1.{k}"] for k in names},
                          {k: arrays[f"moment2.{k}"] for k in names},
                          int(header["optimizer_step"]))
    except KeyError as exc:
        raise CorruptFile(f"{source}: missing array {exc}") from None
    return Checkpoint(
        config,
        dict(header["vocab_checksums"]),
        header["rules_checksum"],
        TrainState(model, moments, int(header["epoch"])),
        int(header["seed"]),
        version,
        header.get("metadata", {}),
    )


def load_checkpoint(
    path,
    vocab_checksums: Optional[dict[str, str]] = None,
    rules_checksum: Optional[str] = None,
) -> Checkpoint:
    """Read and verify a checkpoint; given checksums must match the ones recorded at training time."""
    with open(path, "rb") as f:
        data = f.read()
    cp = decode_checkpoint(data, str(path))
    if vocab_checksums is not None:
        for role, checksum in vocab_checksums.items():
            if cp.vocab_checksums.get(role) != checksum:
                raise ChecksumMismatch(f"{path}: {role} vocabulary differs from the one used in training")
    if rules_checksum is not None and cp.rules_checksum != rules_checksum:
        raise ChecksumMismatch(f"{path}: rule file differs from the one used in training")
    return cp
