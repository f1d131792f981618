"""Binary checkpoints.

Layout::

    b"FANCKPT1"
    uint64 little-endian: byte length of the manifest
    manifest: UTF-8 text
    payloads: raw float64 little-endian, row-major, in manifest order

The manifest is line oriented::

    format = 1
    step = 1200
    alphabet = abcdefghijklmnopqrstuvwxyz0123456789
    optimizer.rho = 0.9
    optimizer.eps = 1e-06
    optimizer.step = 1200
    [config]
    corpus.count = 2000
    ...
    [tensors]
    att.W 64,64
    ...
    opt.sq_grad/att.W 64,64
    ...
    avg/att.W 64,64
    ...

``avg/`` tensors (present when training kept a weight average) hold the
averaged parameters; ``average.decay`` in the header gives its decay.
The ``[config]`` block is a complete config file, so a model can be rebuilt
from the checkpoint alone.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adcore.optim import AdadeltaState
from .attn import Alphabet
from .config import RunConfig, loads
from .model import FANModel
from .train import WeightAverage

MAGIC = b"FANCKPT1"
FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    model: FANModel
    state: AdadeltaState
    step: int
    average: WeightAverage | None = None

    def inference_model(self) -> FANModel:
        """The model with averaged weights swapped in, if the checkpoint has them."""
        if self.average is not None:
            self.average.copy_to(self.model.parameters())
        return self.model


def build_model(cfg: RunConfig, alphabet: Alphabet | None = None) -> FANModel:
    """Construct a freshly initialised model; crop size must already be resolved."""
    fc = cfg.focus_config()
    if min(fc.crop) < 1:
        raise CheckpointError("focus crop size is unresolved (0); set focus.crop_* or derive from data")
    return FANModel.build(cfg.encoder_config(), cfg.attn_config(), fc, alphabet=alphabet,
                          seed=cfg.train.init_seed)


def save(path: str | os.PathLike, cfg: RunConfig, model: FANModel, state: AdadeltaState | None,
         step: int, average: WeightAverage | None = None) -> None:
    """Write atomically (temp file + rename)."""
    params = model.parameters()
    state = state or AdadeltaState()
    named: list[tuple[str, np.ndarray]] = [(k, v.data) for k, v in params.items()]
    for k in params:
        if k in state.sq_grad:
            named.append((f"opt.sq_grad/{k}", state.sq_grad[k]))
            named.append((f"opt.sq_delta/{k}", state.sq_delta[k]))
    if average is not None:
        named += [(f"avg/{k}", average.values[k]) for k in params if k in average.values]
    head = [
        f"format = {FORMAT_VERSION}",
        f"step = {step}",
        f"alphabet = {model.alphabet.chars}",
        f"optimizer.rho = {state.rho!r}",
        f"optimizer.eps = {state.eps!r}",
        f"optimizer.step = {state.step}",
    ]
    if average is not None:
        head.append(f"average.decay = {average.decay!r}")
    head += [
        "[config]",
        cfg.dumps().rstrip("\n"),
        "[tensors]",
    ]
    head += [f"{name} {','.join(str(d) for d in arr.shape)}" for name, arr in named]
    manifest = ("\n".join(head) + "\n").encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype=_LE_F64).tobytes())
    os.replace(tmp, path)


def _parse_manifest(text: str):
    header: dict[str, str] = {}
    config_lines: list[str] = []
    tensors: list[tuple[str, tuple[int, ...]]] = []
    block = None
    for line in text.splitlines():
        if line in ("[config]", "[tensors]"):
            block = line
            continue
        if block == "[config]":
            config_lines.append(line)
        elif block == "[tensors]":
            name, _, dims = line.rpartition(" ")
            if not name:
                raise CheckpointError(f"malformed tensor line {line!r}")
            shape = tuple(int(d) for d in dims.split(",")) if dims else ()
            tensors.append((name, shape))
        else:
            k, sep, v = line.partition("=")
            if not sep:
                raise CheckpointError(f"malformed header line {line!r}")
            header[k.strip()] = v.strip()
    return header, "\n".join(config_lines), tensors


def load(path: str | os.PathLike) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(buf) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (mlen,) = struct.unpack("<Q", buf[8:16])
    try:
        text = buf[16 : 16 + mlen].decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError(f"{path}: manifest is not UTF-8") from None
    header, config_text, tensors = _parse_manifest(text)
    if header.get("format") != str(FORMAT_VERSION):
        raise CheckpointError(f"{path}: unsupported format version {header.get('format')!r}")
    cfg = loads(config_text, f"{path}[config]")
    model = build_model(cfg, Alphabet(header["alphabet"]))
    params = model.parameters()
    state = AdadeltaState(rho=float(header["optimizer.rho"]), eps=float(header["optimizer.eps"]))
    state.step = int(header["optimizer.step"])
    average = WeightAverage(float(header["average.decay"])) if "average.decay" in header else None
    offset = 16 + mlen
    seen = set()
    for name, shape in tensors:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(buf):
            raise CheckpointError(f"{path}: payload truncated at {name}")
        arr = np.frombuffer(buf, dtype=_LE_F64, count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
        if name.startswith("opt.sq_grad/"):
            state.sq_grad[name.split("/", 1)[1]] = arr
        elif name.startswith("opt.sq_delta/"):
            state.sq_delta[name.split("/", 1)[1]] = arr
        elif name.startswith("avg/"):
            if average is None:
                raise CheckpointError(f"{path}: {name!r} present without average.decay")
            average.values[name.split("/", 1)[1]] = arr
        else:
            if name not in params:
                raise CheckpointError(f"{path}: tensor {name!r} does not belong to the configured model")
            if params[name].shape != shape:
                raise CheckpointError(f"{path}: tensor {name!r} has shape {shape}, model expects "
                                      f"{params[name].shape}")
            params[name].data = arr
            seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)[:5]}")
    if offset != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - offset} trailing bytes")
    return Checkpoint(cfg, model, state, int(header["step"]), average)
