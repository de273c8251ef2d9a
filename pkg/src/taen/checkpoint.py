"""Binary checkpoint container.

Layout (little-endian):

    magic       8 bytes  b"TAENCKPT"
    version     u32      1
    header_len  u32      byte length of the JSON header
    header      UTF-8 JSON: dims, a, e, C, loss weights, flags, seed and
                the tensor name order
    blobs       for each tensor, in the declared order:
                u32 name length, name bytes, u32 rank, u32 dims[rank],
                float32 payload (C order)

Tensors are stored as float32 and promoted to float64 on load.
"""

import json
import struct

import numpy as np

from taen.embednet import MlpParams
from taen.errors import DataError
from taen.loss import LossWeights
from taen.model import TaenModel
from taen.prototypes import PrototypeBank

MAGIC = b"TAENCKPT"
CKPT_VERSION = 1
_U32 = struct.Struct("<I")


def _header_dict(model):
    return {
        "dims": model.dims,
        "a": model.a,
        "e": model.e,
        "C": model.n_classes,
        "weights": {
            "w_aff": model.weights.w_aff,
            "w_mot": model.weights.w_mot,
            "w_div": model.weights.w_div,
            "margin_alpha": model.weights.margin_alpha,
            "sigma": model.weights.sigma,
        },
        "margin_mode": model.margin_mode,
        "literal_motion_sign": model.literal_motion_sign,
        "seed": model.seed,
        "tensors": [name for name, _ in model.tensors()],
    }


def save_model(path, model):
    header = json.dumps(_header_dict(model), sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_U32.pack(CKPT_VERSION))
        f.write(_U32.pack(len(header)))
        f.write(header)
        for name, arr in model.tensors():
            name_b = name.encode()
            f.write(_U32.pack(len(name_b)))
            f.write(name_b)
            f.write(_U32.pack(arr.ndim))
            for d in arr.shape:
                f.write(_U32.pack(d))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes(order="C"))


class _Reader:
    def __init__(self, raw, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise DataError(
                f"{self.path}: checkpoint truncated at byte {self.pos} reading {what}"
            )
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def load_model(path):
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc

    r = _Reader(raw, path)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {magic!r}")
    version = r.u32("version")
    if version != CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    header_len = r.u32("header length")
    try:
        header = json.loads(r.take(header_len, "header"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid checkpoint header: {exc}") from exc

    tensors = {}
    for expected in header["tensors"]:
        name_len = r.u32("tensor name length")
        name = r.take(name_len, "tensor name").decode()
        if name != expected:
            raise DataError(f"{path}: tensor {name!r} out of order, expected {expected!r}")
        rank = r.u32("tensor rank")
        shape = tuple(r.u32("tensor dim") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        payload = r.take(4 * count, f"tensor {name} payload")
        tensors[name] = (
            np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)
        )
    if r.pos != len(raw):
        raise DataError(f"{path}: {len(raw) - r.pos} trailing bytes after tensors")

    dims = header["dims"]
    weights, biases = [], []
    for i in range(len(dims) - 1):
        try:
            weights.append(tensors[f"mlp.{i}.weight"])
            biases.append(tensors[f"mlp.{i}.bias"])
        except KeyError as exc:
            raise DataError(f"{path}: missing tensor {exc}") from exc
        if weights[-1].shape != (dims[i + 1], dims[i]):
            raise DataError(
                f"{path}: mlp.{i}.weight shape {weights[-1].shape} does not match dims"
            )
    if "prototypes.raw" not in tensors:
        raise DataError(f"{path}: missing tensor 'prototypes.raw'")
    raw_bank = tensors["prototypes.raw"]
    if raw_bank.shape != (header["C"], header["a"], header["e"]):
        raise DataError(f"{path}: prototype tensor shape {raw_bank.shape} does not match header")

    w = header["weights"]
    return TaenModel(
        params=MlpParams(weights=weights, biases=biases),
        bank=PrototypeBank(raw=raw_bank),
        a=header["a"],
        weights=LossWeights(
            w_aff=w["w_aff"],
            w_mot=w["w_mot"],
            w_div=w["w_div"],
            margin_alpha=w["margin_alpha"],
            sigma=w["sigma"],
        ),
        margin_mode=header["margin_mode"],
        literal_motion_sign=header["literal_motion_sign"],
        seed=header["seed"],
    )
