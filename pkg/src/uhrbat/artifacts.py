"""On-disk artifacts for compressed sequences: metadata sidecars and keep-mask images."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .core import KIND_KEPT, KIND_MERGED, CompressedSequence, UHRBatError
from .tensorio import atomic_write_bytes

_KIND_NAMES = {KIND_KEPT: "kept", KIND_MERGED: "merged"}
_NAME_KINDS = {v: k for k, v in _KIND_NAMES.items()}

MASK_KEPT = 255
MASK_MERGED = 128
MASK_DROPPED = 0


class MetadataError(UHRBatError, ValueError):
    pass


def encode_metadata(seq: CompressedSequence) -> bytes:
    """One JSON object per output token, in sequence order."""
    lines = []
    for j in range(len(seq)):
        rec = {
            "index": j,
            "kind": _KIND_NAMES[int(seq.kinds[j])],
            "region": int(seq.regions[j]),
            "sources": seq.sources(j).tolist(),
            "score": float(seq.scores[j]),
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return ("\n".join(lines) + ("\n" if lines else "")).encode()


def write_metadata(path: str | os.PathLike, seq: CompressedSequence) -> None:
    atomic_write_bytes(path, encode_metadata(seq))


def read_metadata(path: str | os.PathLike) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["kind"]
                sources = [int(s) for s in rec["sources"]]
                region = int(rec["region"])
                score = float(rec["score"])
            except (ValueError, KeyError, TypeError) as exc:
                raise MetadataError(f"{path}:{lineno}: malformed record ({exc})") from exc
            if kind not in _NAME_KINDS:
                raise MetadataError(f"{path}:{lineno}: unknown kind {kind!r}")
            if not sources or (kind == "kept" and len(sources) != 1):
                raise MetadataError(f"{path}:{lineno}: bad source list for a {kind} record")
            records.append({"kind": kind, "region": region, "sources": sources, "score": score})
    return records


def mask_from_metadata(records: list[dict], n_tokens: int) -> np.ndarray:
    """255 kept, 128 merged into a surviving representative, 0 dropped by the budget."""
    mask = np.zeros(n_tokens, dtype=np.uint8)
    seen = np.zeros(n_tokens, dtype=bool)
    for rec in records:
        src = np.asarray(rec["sources"], dtype=np.int64)
        if src.min() < 0 or src.max() >= n_tokens:
            raise MetadataError(f"source index outside the {n_tokens}-token grid")
        if seen[src].any():
            raise MetadataError("a token is cited by more than one record")
        seen[src] = True
        mask[src] = MASK_KEPT if rec["kind"] == "kept" else MASK_MERGED
    return mask


def encode_pgm(image: np.ndarray) -> bytes:
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def decode_pgm(buf: bytes) -> np.ndarray:
    parts = buf.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    data = buf[len(buf) - w * h:]
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)


def write_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pgm(image))


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())
