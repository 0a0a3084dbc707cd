"""Versioned binary model format.

Layout: ``b"PPMF"`` | u32 header length (little endian) | UTF-8 JSON header |
array payload. The header records format_version, variant, schema_width,
hyperparameters, seed, per-tree scalars and, for every array, its name,
dtype, shape, offset and byte length within the payload. Arrays are stored
raw in little-endian order, so equal models serialise to equal bytes.
"""
import json
import struct

import numpy as np

from .batch import BatchForest, BatchHyperparameters, ForestError, Tree
from .incremental import HoeffdingTree, IncHyperparameters, IncrementalForest

MAGIC = b"PPMF"
FORMAT_VERSION = 1
_TREE_FIELDS = ("feature", "threshold", "left", "right", "pos", "neg")


class ModelFormatError(ForestError):
    pass


def serialize(model) -> bytes:
    arrays = []
    trees_meta = []

    def add(name, a):
        a = np.ascontiguousarray(a)
        arrays.append((name, a.astype(a.dtype.newbyteorder("<"), copy=False)))

    if isinstance(model, BatchForest):
        for i, t in enumerate(model.trees):
            for f in _TREE_FIELDS:
                add(f"t{i}.{f}", getattr(t, f))
            trees_meta.append({})
    elif isinstance(model, IncrementalForest):
        for i, t in enumerate(model.trees):
            for name, a in t.state().items():
                add(f"t{i}.{name}", a)
            trees_meta.append({"key": str(t.key)})
    else:
        raise ModelFormatError(f"cannot serialise {type(model).__name__}")

    index, offset = [], 0
    for name, a in arrays:
        index.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                      "offset": offset, "nbytes": a.nbytes})
        offset += a.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "variant": model.variant,
        "schema_width": model.schema_width,
        "hyperparameters": model.hp.to_dict(),
        "seed": model.seed,
        "trees": trees_meta,
        "arrays": index,
        "payload_bytes": offset,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, struct.pack("<I", len(hb)), hb] + [a.tobytes() for _, a in arrays])


def deserialize(blob: bytes):
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    (hlen,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + hlen:
        raise ModelFormatError("corrupt model payload (truncated header)")
    try:
        header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"model format version {header.get('format_version')} != {FORMAT_VERSION}")
    payload = blob[8 + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise ModelFormatError("corrupt model payload (size mismatch)")
    arrays = {}
    for e in header["arrays"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(
            e["shape"]).copy()

    variant = header["variant"]
    width, seed = header["schema_width"], header["seed"]
    if variant == "batch":
        hp = BatchHyperparameters(**header["hyperparameters"])
        trees = [Tree(*(arrays[f"t{i}.{f}"] for f in _TREE_FIELDS))
                 for i in range(len(header["trees"]))]
        return BatchForest(hp, seed, width, trees)
    if variant == "incremental":
        hp = IncHyperparameters(**header["hyperparameters"])
        trees = []
        for i, tm in enumerate(header["trees"]):
            prefix = f"t{i}."
            st = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
            trees.append(HoeffdingTree.from_state(int(tm["key"]), st))
        return IncrementalForest(hp, seed, width, trees)
    raise ModelFormatError(f"unknown model variant {variant!r}")
