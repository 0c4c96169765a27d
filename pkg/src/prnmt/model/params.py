"""Parameter container, initialization and the checkpoint file format."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from prnmt.corpus import BOS, EOS

CHECKPOINT_MAGIC = b"PRNMTCKP"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 64
    attention_dim: int | None = None
    readout_dim: int | None = None
    bos_id: int = BOS
    eos_id: int = EOS

    def __post_init__(self):
        for name in ("src_vocab_size", "tgt_vocab_size", "embed_dim", "hidden_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("attention_dim", "readout_dim"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.eos_id < self.tgt_vocab_size:
            raise ValueError("eos_id outside target vocabulary")
        if not 0 <= self.bos_id < self.tgt_vocab_size:
            raise ValueError("bos_id outside target vocabulary")

    @property
    def att_dim(self) -> int:
        return self.attention_dim or self.hidden_dim

    @property
    def out_dim(self) -> int:
        return self.readout_dim or self.hidden_dim

    def shapes(self) -> dict[str, tuple[int, ...]]:
        E, H, A, R = self.embed_dim, self.hidden_dim, self.att_dim, self.out_dim
        C = 2 * H
        return {
            "src_emb": (self.src_vocab_size, E),
            "tgt_emb": (self.tgt_vocab_size, E),
            "encf_W": (E, 3 * H), "encf_U": (H, 3 * H), "encf_b": (3 * H,),
            "encb_W": (E, 3 * H), "encb_U": (H, 3 * H), "encb_b": (3 * H,),
            "init_W": (C, H), "init_b": (H,),
            "att_W": (H, A), "att_U": (C, A), "att_b": (A,), "att_v": (A,),
            "dec_W": (E + C, 3 * H), "dec_U": (H, 3 * H), "dec_b": (3 * H,),
            "ro_Ws": (H, R), "ro_We": (E, R), "ro_Wc": (C, R), "ro_b": (R,),
            "out_W": (R, self.tgt_vocab_size), "out_b": (self.tgt_vocab_size,),
        }


class ModelParams:
    """Named float64 weight blocks of the encoder-decoder plus their config.

    Gradients use the same class: one array per block, same shapes.
    """

    def __init__(self, config: ModelConfig, arrays: dict[str, np.ndarray]):
        self.config = config
        shapes = config.shapes()
        if set(arrays) != set(shapes):
            missing = set(shapes) - set(arrays)
            extra = set(arrays) - set(shapes)
            raise ValueError(f"parameter blocks mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, shape in shapes.items():
            if arrays[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arrays[name].shape}")
        self.arrays = {name: arrays[name] for name in shapes}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.config, {k: np.zeros_like(v) for k, v in self.arrays.items()})

    def scaled(self, c: float) -> "ModelParams":
        return ModelParams(self.config, {k: c * v for k, v in self.arrays.items()})

    def add_(self, other: "ModelParams", scale: float = 1.0) -> "ModelParams":
        for k, v in self.arrays.items():
            v += scale * other.arrays[k]
        return self

    def num_params(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays.values())

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(v, v) for v in self.arrays.values())))

    def equals(self, other: "ModelParams") -> bool:
        return self.config == other.config and all(
            np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items())


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in config.shapes().items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0]) if not name.endswith("_emb") else 1.0 / np.sqrt(shape[1])
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    arrays["att_v"] = rng.uniform(-1.0, 1.0, size=config.att_dim) / np.sqrt(config.att_dim)
    return ModelParams(config, arrays)


def save_checkpoint(params: ModelParams, path) -> None:
    """Write the binary checkpoint.

    Layout: magic, uint32 version, uint32 config length + JSON config, uint32
    block count, then per block a length-prefixed name, uint32 ndim, uint64
    dims and little-endian float64 data; a SHA-256 of everything precedes EOF.
    """
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<I", CHECKPOINT_VERSION)
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode("utf-8")
    body += struct.pack("<I", len(cfg)) + cfg
    body += struct.pack("<I", len(params.arrays))
    for name, arr in params.items():
        raw = name.encode("utf-8")
        body += struct.pack("<I", len(raw)) + raw
        body += struct.pack("<I", arr.ndim)
        body += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        body += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    body += hashlib.sha256(body).digest()
    with open(path, "wb") as f:
        f.write(bytes(body))


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(CHECKPOINT_MAGIC) + 36 or not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ValueError(f"{path}: checksum mismatch")
    pos = len(CHECKPOINT_MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, body, pos)
        pos += struct.calcsize(fmt)
        return vals

    (version,) = take("<I")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = take("<I")
    config = ModelConfig(**json.loads(body[pos:pos + cfg_len].decode("utf-8")))
    pos += cfg_len
    (nblocks,) = take("<I")
    arrays = {}
    for _ in range(nblocks):
        (name_len,) = take("<I")
        name = body[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        arrays[name] = arr.astype(np.float64)
    if pos != len(body):
        raise ValueError(f"{path}: trailing bytes after parameter blocks")
    return ModelParams(config, arrays)
