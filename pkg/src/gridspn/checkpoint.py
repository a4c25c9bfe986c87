"""Model persistence.

Container layout (little-endian): magic "SPNC", u32 version, u64 seed,
u8 mode tag, u32 H, u32 W, length-prefixed structure text, then one
length-prefixed block per parameter array (name, shape header, float64
payload).  Reload re-derives sum weights with the same deterministic
normalization, so forward outputs reproduce bit-exactly."""

import struct
from dataclasses import dataclass

import numpy as np

from .graph import ExecutionPlan, compile_network
from .leaves import GaussianLeafParams
from .params import ModelParams, SumParams
from .structure import NetworkSpec, parse_structure, render_structure

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint"]

MAGIC = b"SPNC"
VERSION = 1
_MODES = {"hard_em": 0, "hard_em_usi": 1, "adam": 2}
_MODES_BACK = {v: k for k, v in _MODES.items()}


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: ModelParams
    seed: int
    mode: str

    def plan(self) -> ExecutionPlan:
        return compile_network(self.spec)


def _write_array(f, name: str, array: np.ndarray):
    tag = name.encode("ascii")
    f.write(struct.pack("<I", len(tag)))
    f.write(tag)
    array = np.asarray(array, dtype=np.float64)
    f.write(struct.pack("<I", array.ndim))
    f.write(struct.pack(f"<{array.ndim}I", *array.shape))
    f.write(array.astype("<f8").tobytes())


def _read_array(f):
    (tag_len,) = struct.unpack("<I", f.read(4))
    name = f.read(tag_len).decode("ascii")
    (ndim,) = struct.unpack("<I", f.read(4))
    shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
    return name, data.astype(np.float64)


def save_checkpoint(path, spec: NetworkSpec, params: ModelParams, seed: int):
    text = render_structure(spec)
    arrays = [(f"sum{i}", s.accumulators) for i, s in enumerate(params.sums)]
    if params.leaf is not None:
        arrays.append(("leaf_means", params.leaf.means))
        arrays.append(("leaf_variances", params.leaf.variances))
        if params.leaf_rho is not None:
            arrays.append(("leaf_rho", params.leaf_rho))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQB", VERSION, seed, _MODES[params.mode]))
        f.write(struct.pack("<II", spec.height, spec.width))
        blob = text.encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(arrays)))
        for name, array in arrays:
            _write_array(f, name, array)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, seed, mode_tag = struct.unpack("<IQB", f.read(13))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        h, w = struct.unpack("<II", f.read(8))
        (text_len,) = struct.unpack("<I", f.read(4))
        text = f.read(text_len).decode("utf-8")
        (n_arrays,) = struct.unpack("<I", f.read(4))
        arrays = dict(_read_array(f) for _ in range(n_arrays))
    mode = _MODES_BACK[mode_tag]
    spec = parse_structure(text, height=h, width=w)

    sums = []
    i = 0
    while f"sum{i}" in arrays:
        sums.append(SumParams(arrays[f"sum{i}"], log_space=(mode == "adam")))
        i += 1
    leaf = None
    leaf_rho = None
    if "leaf_means" in arrays:
        leaf = GaussianLeafParams(means=arrays["leaf_means"],
                                  variances=arrays["leaf_variances"])
        if "leaf_rho" in arrays:
            leaf_rho = arrays["leaf_rho"]
    params = ModelParams(mode=mode, sums=sums, leaf=leaf, leaf_rho=leaf_rho)
    return Checkpoint(spec=spec, params=params, seed=seed, mode=mode)
