"""Versioned binary model archives.

Layout: 8-byte magic, little-endian uint32 format version, uint64 header
length, a UTF-8 JSON header (sorted keys), then every tensor as
little-endian float32 in header order. Identical models give identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import model_config_from_dict, model_config_to_dict
from .data import Vocabulary
from .morph import TaggerModel
from .parser import Parser

MAGIC = b"MPARSE\x00\x01"
FORMAT_VERSION = 1
_STORED = np.dtype("<f4")


class ArchiveError(Exception):
    pass


class ArchiveVersionError(ArchiveError):
    pass


def _pack(header: dict, tensors: dict[str, np.ndarray]) -> bytes:
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=_STORED)
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = dict(header, tensors=manifest)
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(text)) + text + b"".join(blobs)


def _unpack(raw: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise ArchiveError("not a model archive")
    version, n = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ArchiveVersionError(f"archive format version {version}, this build reads version {FORMAT_VERSION}")
    start = len(MAGIC) + 12
    try:
        header = json.loads(raw[start : start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ArchiveError(f"corrupt archive header: {err}") from None
    body = raw[start + n :]
    tensors = {}
    for item in header["tensors"]:
        count = int(np.prod(item["shape"], dtype=np.int64))
        end = item["offset"] + count * _STORED.itemsize
        if end > len(body):
            raise ArchiveError(f"truncated archive at tensor {item['name']}")
        tensors[item["name"]] = np.frombuffer(body, dtype=_STORED, count=count, offset=item["offset"]).reshape(item["shape"])
    return header, tensors


def _tagger_header(tagger: TaggerModel) -> dict:
    return {
        "config": model_config_to_dict(tagger.config),
        "vocab": tagger.vocab.to_json(),
        "hidden": tagger.head.layers[0].W.shape[0],
        "dropout": tagger.head.dropout,
    }


def save_parser(parser: Parser, path: str | Path, metadata: dict | None = None,
                tagger: TaggerModel | None = None) -> None:
    header = {
        "kind": "parser",
        "config": model_config_to_dict(parser.config),
        "vocab": parser.vocab.to_json(),
        "seed": parser.seed,
        "metadata": metadata or {},
    }
    tensors = {f"parser/{k}": v for k, v in parser.store.state().items()}
    if tagger is not None:
        header["tagger"] = _tagger_header(tagger)
        tensors.update({f"tagger/{k}": v for k, v in tagger.store.state().items()})
    Path(path).write_bytes(_pack(header, tensors))


def _strip(tensors: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


def _build_tagger(info: dict, tensors: dict) -> TaggerModel:
    tagger = TaggerModel(Vocabulary.from_json(info["vocab"]), model_config_from_dict(info["config"]),
                         hidden=info["hidden"], dropout=info["dropout"])
    tagger.store.load_state(tensors)
    return tagger


def load_parser(path: str | Path, dtype=np.float32) -> tuple[Parser, dict, TaggerModel | None]:
    """Returns (parser, metadata, bundled case tagger or None)."""
    header, tensors = _unpack(Path(path).read_bytes())
    if header.get("kind") != "parser":
        raise ArchiveError(f"expected a parser archive, found {header.get('kind')!r}")
    parser = Parser(model_config_from_dict(header["config"]), Vocabulary.from_json(header["vocab"]),
                    seed=header["seed"], dtype=dtype)
    parser.store.load_state(_strip(tensors, "parser/"))
    tagger = _build_tagger(header["tagger"], _strip(tensors, "tagger/")) if "tagger" in header else None
    return parser, header["metadata"], tagger


def save_tagger(tagger: TaggerModel, path: str | Path, metadata: dict | None = None) -> None:
    header = {"kind": "tagger", "tagger": _tagger_header(tagger), "metadata": metadata or {}}
    Path(path).write_bytes(_pack(header, {f"tagger/{k}": v for k, v in tagger.store.state().items()}))


def load_tagger(path: str | Path) -> tuple[TaggerModel, dict]:
    header, tensors = _unpack(Path(path).read_bytes())
    if header.get("kind") != "tagger":
        raise ArchiveError(f"expected a tagger archive, found {header.get('kind')!r}")
    return _build_tagger(header["tagger"], _strip(tensors, "tagger/")), header["metadata"]
