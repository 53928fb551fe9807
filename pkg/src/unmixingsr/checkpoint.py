"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic "USRC" | u32 version
    u32 n | kind (utf-8)          network tag, "unmixing" or "sr"
    u32 n | meta (utf-8)          sorted key=value lines of the network config
    u64 epoch | u64 adam step
    32 bytes                      sha256 of the training config text
    u32 record count
    record: u32 n | name | u8 section (0 param, 1 adam m, 2 adam v)
            u32 ndim | u32 dims... | float64 LE payload
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"USRC"
VERSION = 1
_SECTIONS = {"param": 0, "m": 1, "v": 2}


def config_hash(text: str) -> bytes:
    return hashlib.sha256(text.encode("utf-8")).digest()


def format_meta(meta: dict) -> str:
    return "".join(f"{k}={meta[k]}\n" for k in sorted(meta))


def parse_meta(text: str) -> dict[str, str]:
    return dict(line.split("=", 1) for line in text.splitlines() if line)


@dataclass
class Checkpoint:
    kind: str
    meta: dict
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    epoch: int = 0
    config_digest: bytes = bytes(32)
    version: int = VERSION

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack("<I", self.version)
        for text in (self.kind, format_meta(self.meta)):
            raw = text.encode("utf-8")
            out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<QQ", self.epoch, self.adam_t)
        if len(self.config_digest) != 32:
            raise CheckpointError("config digest must be 32 bytes")
        out += self.config_digest
        records = [(n, "param", a) for n, a in self.params.items()]
        records += [(n, "m", a) for n, a in self.adam_m.items()]
        records += [(n, "v", a) for n, a in self.adam_v.items()]
        out += struct.pack("<I", len(records))
        for name, section, arr in records:
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f8")
            out += struct.pack("<I", len(raw)) + raw
            out += struct.pack("<BI", _SECTIONS[section], arr.ndim)
            out += struct.pack(f"<{arr.ndim}I", *arr.shape)
            out += arr.tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> Checkpoint:
        view = memoryview(raw)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise CheckpointError("checkpoint truncated")
            chunk = view[pos:pos + n]
            pos += n
            return chunk

        if bytes(take(4)) != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", take(4))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        texts = []
        for _ in range(2):
            (n,) = struct.unpack("<I", take(4))
            texts.append(bytes(take(n)).decode("utf-8"))
        epoch, adam_t = struct.unpack("<QQ", take(16))
        digest = bytes(take(32))
        (count,) = struct.unpack("<I", take(4))
        sections: list[dict[str, np.ndarray]] = [{}, {}, {}]
        for _ in range(count):
            (n,) = struct.unpack("<I", take(4))
            name = bytes(take(n)).decode("utf-8")
            section, ndim = struct.unpack("<BI", take(5))
            if section > 2:
                raise CheckpointError(f"unknown record section {section}")
            shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
            sections[section][name] = arr
        if pos != len(view):
            raise CheckpointError("trailing bytes after checkpoint records")
        return cls(texts[0], parse_meta(texts[1]), sections[0], sections[1], sections[2],
                   adam_t, epoch, digest, version)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> Checkpoint:
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_bytes(raw)

    def params_digest(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
        return h.hexdigest()
