"""Binary checkpoint format.

Layout: magic "DOTA", version uint32 LE, length-prefixed UTF-8 run
config JSON, then per tensor: name length uint32, name bytes, rank
uint32, one uint32 per dim, payload as little-endian float64. Tensor
order is the model's parameter traversal plus the dropout rate, so a
save -> load -> save round trip is byte-identical.
"""

import json
import struct
from dataclasses import replace

import numpy as np

from .config import RunConfig, run_config_from_dict, run_config_to_json
from .errors import ConfigError, CorruptCheckpointError, UnsupportedVersionError
from .model import ModelParams, init_params, named_parameters
from .rng import SplitMix64

MAGIC = b"DOTA"
VERSION = 1


def _tensor_items(params: ModelParams):
    yield from named_parameters(params)
    yield "dropout.rate", np.array([params.dropout.rate])


def checkpoint_save(params: ModelParams, run_cfg: RunConfig, path) -> None:
    cfg_bytes = run_config_to_json(run_cfg).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        for name, tensor in _tensor_items(params):
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<I", tensor.ndim))
            for dim in tensor.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def _take(buf: bytes, pos: int, n: int, field: str) -> tuple:
    if pos + n > len(buf):
        raise CorruptCheckpointError(
            f"checkpoint truncated while reading {field} "
            f"(need {n} bytes at offset {pos}, file has {len(buf)})"
        )
    return buf[pos : pos + n], pos + n


def _read_u32(buf: bytes, pos: int, field: str) -> tuple:
    raw, pos = _take(buf, pos, 4, field)
    return struct.unpack("<I", raw)[0], pos


def checkpoint_load(path):
    """Returns (ModelParams, RunConfig); any malformed field is an error."""
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, pos = _take(buf, 0, 4, "magic")
    if raw != MAGIC:
        raise CorruptCheckpointError(f"bad magic {raw!r}, expected {MAGIC!r}")
    version, pos = _read_u32(buf, pos, "version")
    if version != VERSION:
        raise UnsupportedVersionError(
            f"unsupported checkpoint version {version}, expected {VERSION}"
        )
    cfg_len, pos = _read_u32(buf, pos, "config length")
    raw, pos = _take(buf, pos, cfg_len, "config JSON")
    try:
        run_cfg = run_config_from_dict(json.loads(raw.decode("utf-8")))
    except (ValueError, ConfigError) as ex:
        raise CorruptCheckpointError(f"bad embedded config: {ex}") from None

    tensors = {}
    order = []
    while pos < len(buf):
        name_len, pos = _read_u32(buf, pos, "tensor name length")
        raw, pos = _take(buf, pos, name_len, "tensor name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptCheckpointError(
                f"tensor name at offset {pos - name_len} is not UTF-8"
            ) from None
        rank, pos = _read_u32(buf, pos, f"rank of {name!r}")
        shape = []
        for i in range(rank):
            dim, pos = _read_u32(buf, pos, f"dim {i} of {name!r}")
            shape.append(dim)
        count = 1
        for dim in shape:
            count *= dim
        raw, pos = _take(buf, pos, count * 8, f"payload of {name!r}")
        if name in tensors:
            raise CorruptCheckpointError(f"duplicate tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        order.append(name)

    params = init_params(SplitMix64(0), run_cfg.model, run_cfg.train.dropout)
    expected = [name for name, _ in _tensor_items(params)]
    if order != expected:
        missing = [n for n in expected if n not in tensors]
        extra = [n for n in order if n not in set(expected)]
        raise CorruptCheckpointError(
            f"tensor list mismatch: missing {missing}, unexpected {extra}, "
            f"order {'ok' if not missing and not extra else 'differs'}"
        )
    for name, tensor in named_parameters(params):
        loaded = tensors[name]
        if loaded.shape != tensor.shape:
            raise CorruptCheckpointError(
                f"tensor {name!r} has shape {loaded.shape}, expected {tensor.shape}"
            )
        np.copyto(tensor, loaded)
    rate_arr = tensors["dropout.rate"]
    if rate_arr.shape != (1,):
        raise CorruptCheckpointError(
            f"tensor 'dropout.rate' has shape {rate_arr.shape}, expected (1,)"
        )
    try:
        params.dropout = replace(run_cfg.train.dropout, rate=float(rate_arr[0]))
    except ConfigError as ex:
        raise CorruptCheckpointError(f"bad stored dropout rate: {ex}") from None
    return params, run_cfg
