# -*- coding: utf-8 -*-
"""Versioned checkpoint container.

    "SCCK" | u16 version | u32 n + YAML config echo (n bytes)
    | u32 tensor count | per tensor: u16 n + name, u8 dtype code, u8 ndim,
      u32 per dim, raw little-endian data

64-bit floats for training checkpoints, 32-bit for inference export.
"""
import logging
import struct

import numpy as np
import torch
from omegaconf import OmegaConf

from src.models.Codec import CodecModel
from src.models.errors import ConfigurationError, CorruptionError, StreamError
from src.models.Hyperparameters import Hyperparameters

MAGIC = b"SCCK"
VERSION = 1
DTYPES = {0: "<f8", 1: "<f4", 2: "<i8"}
PRECISIONS = {"float64": 0, "float32": 1}


def _dtype_code(tensor, precision):
    if tensor.is_floating_point():
        return PRECISIONS[precision]
    return 2


def save_checkpoint(path, model, config, precision="float64"):
    """Writes the state dict of `model` and the config it was built from"""
    logger = logging.getLogger(__name__)
    if precision not in PRECISIONS:
        raise ConfigurationError(f"Unknown checkpoint precision {precision!r}")
    yaml = OmegaConf.to_yaml(config, resolve=True).encode("utf-8")
    state = model.state_dict()
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHI", MAGIC, VERSION, len(yaml)))
        f.write(yaml)
        f.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            code = _dtype_code(tensor, precision)
            raw = name.encode("utf-8")
            f.write(struct.pack("<HBB", len(raw), code, tensor.dim()) + raw)
            f.write(struct.pack(f"<{tensor.dim()}I", *tensor.shape))
            f.write(tensor.detach().cpu().numpy().astype(DTYPES[code]).tobytes())
    logger.info(f"Saved {len(state)} tensors ({precision}) to {path}")


def load_checkpoint(path):
    """(config, state dict) with tensors widened to float64"""
    with open(path, "rb") as f:
        data = f.read()
    position = 0

    def take(n):
        nonlocal position
        if position + n > len(data):
            raise StreamError(f"Checkpoint {path} is truncated")
        chunk = data[position: position + n]
        position += n
        return chunk

    magic, version, yaml_length = struct.unpack("<4sHI", take(10))
    if magic != MAGIC:
        raise CorruptionError(f"{path} is not a codec checkpoint")
    if version != VERSION:
        raise CorruptionError(f"Unsupported checkpoint version {version}")
    config = OmegaConf.create(take(yaml_length).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    state = {}
    for _ in range(count):
        name_length, code, ndim = struct.unpack("<HBB", take(4))
        name = take(name_length).decode("utf-8")
        if code not in DTYPES:
            raise CorruptionError(f"Unknown dtype code {code} for {name}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = np.dtype(DTYPES[code])
        n = int(np.prod(shape, dtype=np.int64))
        array = np.frombuffer(take(n * dtype.itemsize), dtype=dtype).reshape(shape)
        tensor = torch.from_numpy(array.copy())
        state[name] = tensor.double() if tensor.is_floating_point() else tensor
    return config, state


def load_model(path):
    """(model in eval mode, Hyperparameters) from a checkpoint file"""
    config, state = load_checkpoint(path)
    hp = Hyperparameters.from_config(config)
    model = CodecModel(hp.net_config(), hp.quantizer_config()).double()
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CorruptionError(f"Checkpoint {path} does not match its config: {e}")
    model.eval()
    return model, hp
