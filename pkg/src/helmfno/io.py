"""On-disk formats for datasets, checkpoints and reports.

Dataset: a directory holding ``manifest.json`` (human-readable header) and
``data.bin`` (little-endian float32, row-major, arrays back to back). Complex
labels are stored as separate real and imaginary planes.

Checkpoint: a single file ``HFNOCKPT`` magic, an 8-byte little-endian header
length, a JSON header, then the raw little-endian parameter blobs.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .dataset import WaveDataset, build_dataset
from .fdtd import AbsorbingBoundary, SourceSpec, TimeGrid
from .operators import WIDTH_BANDS, ModelHandle, Normalization, build_model
from .velocity import FamilySpec, Grid

DATASET_FORMAT = "helmfno-dataset"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"HFNOCKPT"
CHECKPOINT_VERSION = 1
_F32 = np.dtype("<f4")


class FormatError(ValueError):
    """Malformed, truncated or incompatible file."""


def _sha256(buf: bytes) -> str:
    return hashlib.sha256(buf).hexdigest()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# -- datasets --------------------------------------------------------------

_DATASET_ARRAYS = ("velocities", "labels", "spectra")
_LAYOUTS = {
    "velocities": "[model, z, x] m/s",
    "labels": "[model, source, frequency, (real, imag), z, x]",
    "spectra": "[model, source, bin] mean |U| per non-negative frequency bin",
}


def write_dataset(ds: WaveDataset, out_dir: str | os.PathLike) -> Path:
    """Write ``manifest.json`` + ``data.bin`` into ``out_dir`` (created if needed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays, blobs, offset = {}, [], 0
    for name in _DATASET_ARRAYS:
        a = getattr(ds, name)
        if a is None:
            continue
        buf = np.ascontiguousarray(a, dtype=_F32).tobytes()
        arrays[name] = {"offset": offset, "shape": list(a.shape), "nbytes": len(buf),
                        "sha256": _sha256(buf), "layout": _LAYOUTS[name]}
        blobs.append(buf)
        offset += len(buf)
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "dtype": "float32",
        "byte_order": "little",
        "count": ds.n_models,
        "n_sources": len(ds.sources),
        "n_freqs": len(ds.freqs),
        "n_samples": len(ds),
        "recipe": ds.recipe(),
        "arrays": arrays,
        "meta": ds.meta,
    }
    with open(out / "data.bin", "wb") as fh:
        for b in blobs:
            fh.write(b)
    (out / "manifest.json").write_text(_dump_json(manifest) + "\n")
    return out


def read_manifest(path: str | os.PathLike) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    try:
        manifest = json.loads(p.read_text())
    except FileNotFoundError:
        raise FormatError(f"no manifest at {p}") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"unreadable manifest {p}: {e}") from None
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"{p} is not a dataset manifest")
    if manifest.get("version") != DATASET_VERSION:
        raise FormatError(f"unknown dataset format version {manifest.get('version')!r}")
    return manifest


def _check_layout(arrays: dict, size: int):
    spans = []
    for name, a in arrays.items():
        n = int(np.prod(a["shape"], dtype=np.int64)) * _F32.itemsize
        if n != a["nbytes"]:
            raise FormatError(f"array {name!r}: shape {a['shape']} needs {n} bytes, "
                              f"manifest declares {a['nbytes']}")
        spans.append((a["offset"], a["offset"] + a["nbytes"], name))
    spans.sort()
    for (s0, e0, n0), (s1, _, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise FormatError(f"arrays {n0!r} and {n1!r} overlap")
    need = max((e for _, e, _ in spans), default=0)
    if size != need:
        raise FormatError(f"data.bin holds {size} bytes, manifest describes {need}")


def _recipe_objects(recipe: dict):
    grid = Grid(**recipe["grid"])
    tg = TimeGrid(**recipe["time"])
    boundary = AbsorbingBoundary(**recipe["boundary"])
    family = FamilySpec.from_dict(recipe["family"]) if recipe.get("family") else None
    sources = [SourceSpec(**s) for s in recipe["sources"]]
    return grid, tg, boundary, family, sources


def read_dataset(path: str | os.PathLike, verify: bool = True) -> WaveDataset:
    """Load a dataset directory, checking byte counts, layout and checksums."""
    root = Path(path)
    manifest = read_manifest(root)
    data_path = root / "data.bin"
    if not data_path.exists():
        raise FormatError(f"missing {data_path}")
    raw = data_path.read_bytes()
    _check_layout(manifest["arrays"], len(raw))
    arrays = {}
    for name, a in manifest["arrays"].items():
        buf = raw[a["offset"]:a["offset"] + a["nbytes"]]
        if verify and _sha256(buf) != a["sha256"]:
            raise FormatError(f"checksum mismatch in array {name!r}")
        arrays[name] = np.frombuffer(buf, dtype=_F32).reshape(a["shape"]).astype(np.float32)
    recipe = manifest["recipe"]
    grid, tg, boundary, family, sources = _recipe_objects(recipe)
    return WaveDataset(grid, tg, boundary, family, recipe.get("seed"), list(recipe["model_seeds"]),
                       arrays["velocities"], sources, list(recipe["freqs"]), arrays["labels"],
                       arrays.get("spectra"), meta=manifest.get("meta", {}))


def regenerate_dataset(path: str | os.PathLike, out_dir: str | os.PathLike,
                       backend: str | None = None) -> Path:
    """Rebuild a dataset from its manifest alone and write it to ``out_dir``."""
    manifest = read_manifest(path)
    recipe = manifest["recipe"]
    grid, tg, boundary, family, sources = _recipe_objects(recipe)
    if family is None:
        raise FormatError("manifest has no family recipe; models were supplied explicitly")
    ds = build_dataset(family, manifest["count"], recipe["seed"], grid, sources, recipe["freqs"],
                       tg, boundary, backend=backend, model_seeds=recipe["model_seeds"],
                       fractional=bool(manifest.get("meta", {}).get("fractional", False)))
    noise = manifest.get("meta", {}).get("label_noise")
    if noise:
        ds = ds.with_label_noise(noise["sigma"], noise["seed"])
    return write_dataset(ds, out_dir)


# -- checkpoints -----------------------------------------------------------

def _bn_arrays(handle: ModelHandle) -> dict[str, np.ndarray]:
    out = {}
    for name, st in getattr(handle.net, "bn", {}).items():
        out[f"{name}.running_mean"] = st.mean
        out[f"{name}.running_var"] = st.var
    return out


def save_checkpoint(handle: ModelHandle, path: str | os.PathLike, history: dict | None = None,
                    optimizer=None, seed: int | None = None) -> Path:
    """Serialize architecture, config, parameters, normalization and provenance."""
    blobs, table, offset = [], {}, 0

    def put(group, name, arr):
        nonlocal offset
        a = np.ascontiguousarray(arr)
        dt = a.dtype.newbyteorder("<")
        buf = a.astype(dt, copy=False).tobytes()
        table.setdefault(group, {})[name] = {"offset": offset, "shape": list(a.shape),
                                             "dtype": dt.str, "nbytes": len(buf)}
        blobs.append(buf)
        offset += len(buf)

    for name, p in handle.parameters().items():
        put("params", name, p.data)
    for name, a in _bn_arrays(handle).items():
        put("buffers", name, a)
    opt_meta = None
    if optimizer is not None:
        st = optimizer.state
        for name in sorted(st.m):
            put("adam_m", name, st.m[name])
            put("adam_v", name, st.v[name])
        opt_meta = {"lr": st.lr, "betas": [st.beta1, st.beta2], "eps": st.eps,
                    "weight_decay": st.weight_decay, "step": st.step}
    history = history or {}
    header = {
        "version": CHECKPOINT_VERSION,
        "arch": handle.arch,
        "config": handle.config_dict(),
        "width_rule": [list(b) for b in WIDTH_BANDS],
        "normalization": handle.norm.to_dict(),
        "meta": handle.meta,
        "seed": seed,
        "history": history,
        "history_sha256": _sha256(json.dumps(history, sort_keys=True).encode()),
        "optimizer": opt_meta,
        "tables": table,
    }
    head = json.dumps(header, sort_keys=True).encode()
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for b in blobs:
            fh.write(b)
    return p


def read_checkpoint_header(path: str | os.PathLike) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path} is not a checkpoint")
    (n,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + n])
    except json.JSONDecodeError as e:
        raise FormatError(f"corrupt checkpoint header: {e}") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unknown checkpoint version {header.get('version')!r}")
    return header, raw[16 + n:]


def _blob(body: bytes, entry: dict, what: str) -> np.ndarray:
    end = entry["offset"] + entry["nbytes"]
    if end > len(body):
        raise FormatError(f"checkpoint truncated inside {what}")
    a = np.frombuffer(body[entry["offset"]:end], dtype=np.dtype(entry["dtype"]))
    return a.reshape(entry["shape"]).astype(a.dtype.newbyteorder("="))


def load_checkpoint(path: str | os.PathLike, with_header: bool = False):
    """Rebuild the model and fill every parameter, naming any that is missing."""
    header, body = read_checkpoint_header(path)
    net = build_model(header["arch"], header["config"])
    stored = header["tables"].get("params", {})
    for name, p in net.parameters().items():
        if name not in stored:
            raise FormatError(f"checkpoint is missing parameter {name!r}")
        a = _blob(body, stored[name], name)
        if a.shape != p.data.shape:
            raise FormatError(f"parameter {name!r}: stored shape {a.shape}, "
                              f"config expects {p.data.shape}")
        p.data = a.astype(p.data.dtype)
    extra = set(stored) - set(net.parameters())
    if extra:
        raise FormatError(f"checkpoint has parameters the config does not declare: {sorted(extra)}")
    buffers = header["tables"].get("buffers", {})
    for name, st in getattr(net, "bn", {}).items():
        for attr, key in (("mean", f"{name}.running_mean"), ("var", f"{name}.running_var")):
            if key not in buffers:
                raise FormatError(f"checkpoint is missing buffer {key!r}")
            setattr(st, attr, _blob(body, buffers[key], key).astype(getattr(st, attr).dtype))
    handle = ModelHandle(header["arch"], net, Normalization(**header["normalization"]),
                         meta=header.get("meta", {}))
    return (handle, header) if with_header else handle


def load_optimizer_state(path: str | os.PathLike):
    """Optimizer moments stored alongside a checkpoint, or ``None``."""
    from .autodiff.optim import OptimizerState

    header, body = read_checkpoint_header(path)
    meta = header.get("optimizer")
    if meta is None:
        return None
    tables = header["tables"]
    m = {k: _blob(body, e, k) for k, e in tables.get("adam_m", {}).items()}
    v = {k: _blob(body, e, k) for k, e in tables.get("adam_v", {}).items()}
    return OptimizerState(lr=meta["lr"], beta1=meta["betas"][0], beta2=meta["betas"][1], eps=meta["eps"],
                          weight_decay=meta["weight_decay"], step=meta["step"], m=m, v=v)


# -- reports ---------------------------------------------------------------

def config_hash(config: dict) -> str:
    return _sha256(json.dumps(config, sort_keys=True, default=str).encode())[:12]


def write_report(report: dict, out_dir: str | os.PathLike, name: str = "report") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / f"{name}.json"
    p.write_text(_dump_json(_jsonable(report)) + "\n")
    return p


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_array(a: np.ndarray, path: str | os.PathLike) -> Path:
    """Raw little-endian float32 array with a ``.json`` shape sidecar (misfit maps)."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(np.ascontiguousarray(a, dtype=_F32).tobytes())
    p.with_suffix(p.suffix + ".json").write_text(json.dumps({"shape": list(a.shape), "dtype": "<f4"}))
    return p
