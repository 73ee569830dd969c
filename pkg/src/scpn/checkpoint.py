"""On-disk checkpoints: ``manifest.json`` + ``params.bin`` (+ vocab/merges files).

params.bin holds every parameter as little-endian float32, row-major,
concatenated in manifest order.  The manifest records each parameter's name,
shape, dtype, byte offset and byte length.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .corpus import Vocab
from .errors import ScpnError
from .fileio import atomic_write
from .model import ScpnConfig, ScpnModel
from .subword import BpeModel

FORMAT_VERSION = 1


class CheckpointError(ScpnError):
    pass


@dataclass
class Checkpoint:
    model: ScpnModel
    word_vocab: Vocab
    parse_vocab: Vocab
    bpe: Optional[BpeModel] = None
    history: list = field(default_factory=list)

    @property
    def config(self) -> ScpnConfig:
        return self.model.config

    @property
    def kind(self) -> str:
        return self.model.config.kind

    def save(self, directory) -> None:
        save_checkpoint(self, directory)


def pack_params(module: torch.nn.Module) -> tuple[list[dict], bytes]:
    """Parameter table and the concatenated little-endian f32 blob."""
    table = []
    blobs = []
    offset = 0
    for name, p in module.named_parameters():
        arr = p.detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        table.append({"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": offset, "length": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    return table, b"".join(blobs)


def unpack_params(module: torch.nn.Module, table: list[dict], blob: bytes) -> None:
    params = dict(module.named_parameters())
    if sorted(e["name"] for e in table) != sorted(params):
        raise CheckpointError("parameter table does not match the model architecture")
    with torch.no_grad():
        for entry in table:
            arr = np.frombuffer(blob, dtype="<f4", count=entry["length"] // 4, offset=entry["offset"])
            params[entry["name"]].copy_(torch.from_numpy(arr.reshape(entry["shape"]).copy()))


def read_manifest(directory) -> tuple[dict, bytes]:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        blob = (directory / "params.bin").read_bytes()
    except FileNotFoundError as err:
        raise CheckpointError(f"incomplete checkpoint at {directory}: {err}") from err
    except json.JSONDecodeError as err:
        raise CheckpointError(f"corrupt manifest at {directory}: {err}") from err
    validate_manifest(manifest, len(blob))
    return manifest, blob


def save_checkpoint(ckpt: Checkpoint, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    table, blob = pack_params(ckpt.model)
    files = {"word_vocab": "word_vocab.txt", "parse_vocab": "parse_vocab.txt"}
    ckpt.word_vocab.save(directory / files["word_vocab"])
    ckpt.parse_vocab.save(directory / files["parse_vocab"])
    if ckpt.bpe is not None:
        files["merges"] = "merges.txt"
        ckpt.bpe.save(directory / files["merges"])
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "config": ckpt.config.to_dict(),
        "params": table,
        "files": files,
        "history": ckpt.history,
    }
    atomic_write(directory / "params.bin", blob)
    atomic_write(directory / "manifest.json", json.dumps(manifest, indent=2).encode("utf-8"))


def validate_manifest(manifest: dict, blob_size: int) -> None:
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {manifest.get('format_version')}")
    expected = 0
    for entry in manifest["params"]:
        if entry["dtype"] != "f32":
            raise CheckpointError(f"{entry['name']}: dtype {entry['dtype']} not supported")
        if entry["offset"] != expected:
            raise CheckpointError(f"{entry['name']}: offset {entry['offset']} != {expected}")
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if entry["length"] != 4 * n:
            raise CheckpointError(f"{entry['name']}: length {entry['length']} != {4 * n}")
        expected += entry["length"]
    if expected != blob_size:
        raise CheckpointError(f"params.bin has {blob_size} bytes, manifest covers {expected}")


def load_checkpoint(directory) -> Checkpoint:
    directory = Path(directory)
    manifest, blob = read_manifest(directory)
    if manifest.get("kind") not in ("scpn", "parsegen"):
        raise CheckpointError(f"{directory}: not a paraphraser or parse generator checkpoint")
    model = ScpnModel(ScpnConfig.from_dict(manifest["config"]))
    unpack_params(model, manifest["params"], blob)
    files = manifest["files"]
    bpe = BpeModel.load(directory / files["merges"]) if "merges" in files else None
    model.eval()
    return Checkpoint(
        model,
        Vocab.load(directory / files["word_vocab"]),
        Vocab.load(directory / files["parse_vocab"]),
        bpe,
        manifest.get("history", []),
    )
