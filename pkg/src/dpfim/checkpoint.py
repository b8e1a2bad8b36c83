"""Versioned binary checkpoint container.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
header, then the raw C-order little-endian bytes of every array in
header order. The byte stream is a pure function of the stored state
(no timestamps), so identical states produce identical files and
float64 weights round-trip bit-exactly.

Header schema (JSON):
    format: 1
    kind: "pretrain" | "baseline" | "dp" | "base"
    model_config / lora_config: constructor kwargs
    meta: step, epoch, opt_t, and kind-specific extras (accountant state,
          seed, kernel backend)
    arrays: [{name, dtype, shape}, ...]
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dp_optimizer import OptimizerState, PretrainState, TrainState
from .errors import ConfigError, MissingInputError
from .model import LoraConfig, ModelConfig, ParameterSet, adapter_keys, base_keys

MAGIC = b"DPFIMCK1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    model_config: ModelConfig
    lora_config: LoraConfig
    arrays: dict[str, np.ndarray]
    meta: dict


def write_checkpoint(
    path: str | Path,
    kind: str,
    model_config: ModelConfig,
    lora_config: LoraConfig,
    arrays: dict[str, np.ndarray],
    meta: dict,
) -> None:
    names = sorted(arrays)
    header = {
        "format": FORMAT_VERSION,
        "kind": kind,
        "model_config": asdict(model_config),
        "lora_config": asdict(lora_config),
        "meta": meta,
        "arrays": [
            {"name": n, "dtype": arrays[n].dtype.str, "shape": list(arrays[n].shape)}
            for n in names
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for n in names:
            arr = np.ascontiguousarray(arrays[n])
            if arr.dtype.byteorder == ">":
                arr = arr.astype(arr.dtype.newbyteorder("<"))
            fh.write(arr.tobytes())


def read_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ConfigError(f"{path} is not a dpfim checkpoint")
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size).decode("utf-8"))
        if header["format"] != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format {header['format']}")
        arrays = {}
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            data = fh.read(count * dtype.itemsize)
            arrays[spec["name"]] = np.frombuffer(data, dtype=dtype).reshape(spec["shape"]).copy()
    return Checkpoint(
        kind=header["kind"],
        model_config=ModelConfig(**header["model_config"]),
        lora_config=LoraConfig(**header["lora_config"]),
        arrays=arrays,
        meta=header["meta"],
    )


def _params_arrays(params: ParameterSet) -> dict[str, np.ndarray]:
    out = {f"base/{k}": params.base[k] for k in base_keys(params.cfg)}
    out.update({f"adapters/{k}": params.adapters[k] for k in adapter_keys(params.cfg)})
    return out


def params_from_checkpoint(ck: Checkpoint) -> ParameterSet:
    base = {k: ck.arrays[f"base/{k}"] for k in base_keys(ck.model_config)}
    adapters = {k: ck.arrays[f"adapters/{k}"] for k in adapter_keys(ck.model_config)}
    return ParameterSet(cfg=ck.model_config, lora=ck.lora_config, base=base, adapters=adapters)


def save_model(path, params: ParameterSet, kind: str, meta: dict | None = None) -> None:
    write_checkpoint(path, kind, params.cfg, params.lora, _params_arrays(params), meta or {})


def load_model(path) -> tuple[ParameterSet, Checkpoint]:
    ck = read_checkpoint(path)
    return params_from_checkpoint(ck), ck


def save_train_state(path, kind: str, state, meta: dict | None = None) -> None:
    """Persist a TrainState/PretrainState with optimizer moments."""
    arrays = _params_arrays(state.params)
    arrays["opt/m"] = state.opt.m
    arrays["opt/v"] = state.opt.v
    meta = dict(meta or {})
    meta.update({"step": state.step, "opt_t": state.opt.t})
    write_checkpoint(path, kind, state.params.cfg, state.params.lora, arrays, meta)


def load_train_state(path, pretrain: bool = False):
    ck = read_checkpoint(path)
    params = params_from_checkpoint(ck)
    opt = OptimizerState(m=ck.arrays["opt/m"], v=ck.arrays["opt/v"], t=ck.meta["opt_t"])
    cls = PretrainState if pretrain else TrainState
    state = cls(params=params, opt=opt, step=ck.meta["step"])
    return state, ck
