"""Versioned binary containers for datasets and models, plus hashing helpers.

Layout of both file kinds: an 8-byte magic, a little-endian uint32 format
version, a little-endian uint64 header length, a JSON header (UTF-8), then
raw little-endian array blocks in the order the header declares them.
All writes go to a temporary path and are renamed into place atomically.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import struct

import numpy as np

from .channel import Dataset, ScenarioConfig
from .errors import (
    FileTruncatedError,
    FormatVersionError,
    ShapeMismatchError,
)

DATASET_MAGIC = b"BSIMDSET"
MODEL_MAGIC = b"BSIMMODL"
FORMAT_VERSION = 1


def atomic_write(path: str, data: bytes) -> None:
    """Write bytes to a temporary file and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _pack(magic: bytes, header: dict, blocks: list[np.ndarray]) -> bytes:
    payload = _encode_header(header)
    parts = [magic, struct.pack("<I", FORMAT_VERSION),
             struct.pack("<Q", len(payload)), payload]
    for block in blocks:
        parts.append(block.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, path: str):
        self.path = path
        with open(path, "rb") as fh:
            self.buf = fh.read()
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FileTruncatedError(
                f"{self.path}: expected {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def _read_container(path: str, magic: bytes) -> tuple[dict, _Reader]:
    reader = _Reader(path)
    got = reader.take(8)
    if got != magic:
        raise FormatVersionError(
            f"{path}: bad magic {got!r}, expected {magic!r}"
        )
    (version,) = struct.unpack("<I", reader.take(4))
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: format version {version} not supported "
            f"(reader supports {FORMAT_VERSION})"
        )
    (header_len,) = struct.unpack("<Q", reader.take(8))
    raw = reader.take(header_len)
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatVersionError(f"{path}: corrupted header: {exc}") from None
    return header, reader


def _read_block(reader: _Reader, dtype: np.dtype, shape: tuple) -> np.ndarray:
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    raw = reader.take(count * dtype.itemsize)
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


# ---------------------------------------------------------------------------
# dataset container: one fixed-width record per sample

def _record_dtype(n_beams: int) -> np.dtype:
    return np.dtype([
        ("x", "<f8"),
        ("y", "<f8"),
        ("rss", "<f8", (n_beams,)),
        ("label", "<i4"),
    ])


def save_dataset(dataset: Dataset, path: str) -> None:
    cfg = dataset.config
    n = dataset.n_samples
    records = np.empty(n, dtype=_record_dtype(cfg.n_beams))
    records["x"] = dataset.positions[:, 0]
    records["y"] = dataset.positions[:, 1]
    records["rss"] = dataset.rss
    records["label"] = dataset.labels
    header = {
        "kind": "dataset",
        "scenario": dataclasses.asdict(cfg),
        "n_beams": cfg.n_beams,
        "m": int(len(dataset.subset_indices)),
        "subset_indices": [int(i) for i in dataset.subset_indices],
        "n_samples": n,
        "splits": {"train": dataset.n_train, "val": dataset.n_val,
                   "test": dataset.n_test},
    }
    atomic_write(path, _pack(DATASET_MAGIC, header, [records]))


def load_dataset(path: str) -> Dataset:
    header, reader = _read_container(path, DATASET_MAGIC)
    if header.get("kind") != "dataset":
        raise FormatVersionError(f"{path}: not a dataset container")
    scenario = dict(header["scenario"])
    scenario["tx_position"] = tuple(scenario["tx_position"])
    cfg = ScenarioConfig(**scenario)
    n = int(header["n_samples"])
    if header["n_beams"] != cfg.n_beams:
        raise ShapeMismatchError(
            f"{path}: header n_beams {header['n_beams']} != scenario "
            f"n_beams {cfg.n_beams}"
        )
    records = _read_block(reader, _record_dtype(cfg.n_beams), (n,))
    subset = np.asarray(header["subset_indices"], dtype=np.int64)
    if len(subset) != int(header["m"]):
        raise ShapeMismatchError(
            f"{path}: subset length {len(subset)} != header m {header['m']}"
        )
    positions = np.stack([records["x"], records["y"]], axis=1)
    splits = header["splits"]
    if splits["train"] + splits["val"] + splits["test"] != n:
        raise ShapeMismatchError(f"{path}: split sizes do not add up to {n}")
    return Dataset(
        config=cfg,
        subset_indices=subset,
        positions=positions,
        rss=np.array(records["rss"], dtype=np.float64),
        labels=np.array(records["label"], dtype=np.int32),
        n_train=int(splits["train"]),
        n_val=int(splits["val"]),
        n_test=int(splits["test"]),
    )


def export_dataset_csv(dataset: Dataset, path: str) -> None:
    """Lossless CSV view of the dataset (one row per sample)."""
    n_beams = dataset.config.n_beams
    lines = ["x,y," + ",".join(f"rss_{b}" for b in range(n_beams)) + ",label"]
    for i in range(dataset.n_samples):
        vals = [repr(float(dataset.positions[i, 0])),
                repr(float(dataset.positions[i, 1]))]
        vals.extend(repr(float(v)) for v in dataset.rss[i])
        vals.append(str(int(dataset.labels[i])))
        lines.append(",".join(vals))
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# model container: standardization vectors, then per-layer parameter blocks

def save_model_state(state: dict, path: str) -> None:
    """Serialize a model state dict (see model.Model.state_dict)."""
    widths = state["layer_widths"]
    blocks: list[np.ndarray] = []
    block_meta: list[dict] = []

    def add(name: str, arr: np.ndarray) -> None:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        blocks.append(arr)
        block_meta.append({"name": name, "shape": list(arr.shape)})

    add("std_mean", state["std_mean"])
    add("std_std", state["std_std"])
    n_dense = len(widths) - 1
    for i in range(n_dense):
        add(f"W{i}", state["weights"][i])
        add(f"b{i}", state["biases"][i])
    for i in range(n_dense - 1):
        add(f"gamma{i}", state["bn_gamma"][i])
        add(f"beta{i}", state["bn_beta"][i])
        add(f"run_mean{i}", state["bn_run_mean"][i])
        add(f"run_var{i}", state["bn_run_var"][i])
    header = {
        "kind": "model",
        "layer_widths": [int(w) for w in widths],
        "bn_eps": state["bn_eps"],
        "bn_momentum": state["bn_momentum"],
        "dataset_hash": state.get("dataset_hash", ""),
        "train_config": state.get("train_config", {}),
        "blocks": block_meta,
    }
    atomic_write(path, _pack(MODEL_MAGIC, header, blocks))


def load_model_state(path: str) -> dict:
    header, reader = _read_container(path, MODEL_MAGIC)
    if header.get("kind") != "model":
        raise FormatVersionError(f"{path}: not a model container")
    widths = [int(w) for w in header["layer_widths"]]
    arrays: dict[str, np.ndarray] = {}
    for meta in header["blocks"]:
        arrays[meta["name"]] = _read_block(
            reader, np.dtype("<f8"), tuple(meta["shape"])
        )
    n_dense = len(widths) - 1
    try:
        state = {
            "layer_widths": widths,
            "bn_eps": float(header["bn_eps"]),
            "bn_momentum": float(header["bn_momentum"]),
            "dataset_hash": header.get("dataset_hash", ""),
            "train_config": header.get("train_config", {}),
            "std_mean": arrays["std_mean"],
            "std_std": arrays["std_std"],
            "weights": [arrays[f"W{i}"] for i in range(n_dense)],
            "biases": [arrays[f"b{i}"] for i in range(n_dense)],
            "bn_gamma": [arrays[f"gamma{i}"] for i in range(n_dense - 1)],
            "bn_beta": [arrays[f"beta{i}"] for i in range(n_dense - 1)],
            "bn_run_mean": [arrays[f"run_mean{i}"] for i in range(n_dense - 1)],
            "bn_run_var": [arrays[f"run_var{i}"] for i in range(n_dense - 1)],
        }
    except KeyError as exc:
        raise ShapeMismatchError(f"{path}: missing parameter block {exc}") from None
    for i in range(n_dense):
        expected = (widths[i], widths[i + 1])
        if state["weights"][i].shape != expected:
            raise ShapeMismatchError(
                f"{path}: W{i} has shape {state['weights'][i].shape}, "
                f"layer widths require {expected}"
            )
    return state
