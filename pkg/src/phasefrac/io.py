"""Sample files, force-displacement curves and field resampling.

Sample layout (HDF5, or flat binary plus a JSON sidecar with the same
logical names)::

    /fields/phase/step_0000 ... step_NNNN   nodal phi, (ny + 1, nx + 1)
    /fields/ux/step_....                    nodal u_x (mm)
    /fields/uy/step_....                    nodal u_y (mm)
    /curves/displacement                    applied boundary displacement (mm)
    /curves/force                           boundary reaction (N)
    /initial/phase                          phi before the first load step (optional)

Root attributes carry the seed, boundary condition, decomposition, crack
table ``(cx, cy, theta, l)``, material constants, schedule, grid shape, the
PRNG identifier, the full scenario as JSON and ``format_version``.  Arrays are
little-endian float64.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

FORMAT_VERSION = 1
FIELD_NAMES = ("phase", "ux", "uy")
_F8 = np.dtype("<f8")


class SampleFileError(Exception):
    """Base class for unreadable sample files."""


class MalformedSampleError(SampleFileError):
    pass


class VersionMismatchError(SampleFileError):
    pass


class TruncatedSampleError(SampleFileError):
    pass


@dataclass
class SampleFile:
    fields: dict[str, np.ndarray]  # name -> (steps, rows, cols)
    displacement: np.ndarray
    force: np.ndarray
    attrs: dict = field(default_factory=dict)
    initial_phase: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.displacement)


def _step_name(k: int) -> str:
    return f"step_{k:04d}"


def records_to_arrays(records, node_shape: tuple[int, int]) -> dict[str, np.ndarray]:
    if not records:
        raise ValueError("no step records to write")
    out = {
        "phase": np.stack([np.asarray(r.phi, dtype=_F8).reshape(node_shape) for r in records]),
        "ux": np.stack([np.asarray(r.ux, dtype=_F8).reshape(node_shape) for r in records]),
        "uy": np.stack([np.asarray(r.uy, dtype=_F8).reshape(node_shape) for r in records]),
    }
    return out


def _attr_value(v):
    if isinstance(v, (dict, list, tuple)) and not _is_numeric_seq(v):
        return json.dumps(v, sort_keys=True)
    if v is None:
        return "null"
    return v


def _is_numeric_seq(v) -> bool:
    if isinstance(v, dict):
        return False
    try:
        arr = np.asarray(v)
    except (ValueError, TypeError):
        return False
    return arr.dtype.kind in "biuf" and arr.size > 0


def _plain(v):
    if isinstance(v, bytes):
        v = v.decode()
    if isinstance(v, np.ndarray):
        return v.tolist() if v.ndim else v.item()
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_sample(path, records, metadata: Mapping, node_shape: tuple[int, int],
                 initial_phase: np.ndarray | None = None) -> Path:
    """Write a sample; the format follows the suffix (``.h5``/``.hdf5`` or ``.bin``)."""
    path = Path(path)
    arrays = records_to_arrays(records, node_shape)
    disp = np.array([r.displacement for r in records], dtype=_F8)
    force = np.array([r.force for r in records], dtype=_F8)
    attrs = dict(metadata)
    attrs["format_version"] = FORMAT_VERSION
    attrs["grid_shape"] = list(node_shape)
    extra = {
        "steps/iterations": np.array([r.iterations for r in records], dtype="<i8"),
        "steps/converged": np.array([r.converged for r in records], dtype="<i8"),
    }
    if initial_phase is not None:
        extra["initial/phase"] = np.asarray(initial_phase, dtype=_F8).reshape(node_shape)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".bin":
        _write_raw(path, arrays, disp, force, attrs, extra)
    else:
        _write_h5(path, arrays, disp, force, attrs, extra)
    return path


def _write_h5(path, arrays, disp, force, attrs, extra):
    import h5py

    with h5py.File(path, "w", libver="earliest", track_order=False) as f:
        for name, stack in arrays.items():
            grp = f.create_group(f"fields/{name}")
            for k, frame in enumerate(stack):
                grp.create_dataset(_step_name(k), data=frame, dtype=_F8, track_times=False)
        f.create_dataset("curves/displacement", data=disp, dtype=_F8, track_times=False)
        f.create_dataset("curves/force", data=force, dtype=_F8, track_times=False)
        for name, arr in extra.items():
            f.create_dataset(name, data=arr, track_times=False)
        for key in sorted(attrs):
            f.attrs[key] = _attr_value(attrs[key])


def _write_raw(path: Path, arrays, disp, force, attrs, extra):
    entries, offset = [], 0
    blobs = []

    def add(name, arr):
        nonlocal offset
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        data = arr.astype(dtype.str.replace("=", "<").replace("|", "<"), copy=False).tobytes()
        entries.append(dict(name=name, dtype=arr.dtype.str.replace("=", "<"), shape=list(arr.shape), offset=offset,
                            nbytes=len(data)))
        blobs.append(data)
        offset += len(data)

    for name, stack in arrays.items():
        for k, frame in enumerate(stack):
            add(f"fields/{name}/{_step_name(k)}", frame)
    add("curves/displacement", disp)
    add("curves/force", force)
    for name, arr in extra.items():
        add(name, arr)
    with open(path, "wb") as fh:
        for b in blobs:
            fh.write(b)
    meta = dict(attrs={k: _plain(v) if not isinstance(v, (list, dict)) else v for k, v in attrs.items()},
                datasets=entries)
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True, default=_plain)


def read_sample(path) -> SampleFile:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix == ".bin":
        attrs, data = _read_raw(path)
    else:
        attrs, data = _read_h5(path)
    return _assemble(attrs, data)


def _read_h5(path):
    import h5py

    try:
        f = h5py.File(path, "r")
    except OSError as exc:
        raise MalformedSampleError(f"{path}: not a readable HDF5 file ({exc})") from exc
    with f:
        attrs = {k: _plain(v) for k, v in f.attrs.items()}
        data = {}

        def visit(name, obj):
            if isinstance(obj, h5py.Dataset):
                data[name] = obj[()]

        f.visititems(visit)
    return attrs, data


def _read_raw(path: Path):
    side = path.with_suffix(".json")
    try:
        with open(side) as fh:
            meta = json.load(fh)
        blob = path.read_bytes()
        data = {}
        for e in meta["datasets"]:
            if e["offset"] + e["nbytes"] > len(blob):
                raise TruncatedSampleError(f"{path}: dataset {e['name']} runs past the end of the file")
            arr = np.frombuffer(blob, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=int)),
                                offset=e["offset"])
            data[e["name"]] = arr.reshape(e["shape"]).copy()
        return meta["attrs"], data
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise MalformedSampleError(f"{path}: unreadable flat sample ({exc})") from exc


def _assemble(attrs: dict, data: dict) -> SampleFile:
    version = attrs.get("format_version")
    if version is None:
        raise MalformedSampleError("missing format_version attribute")
    if int(version) != FORMAT_VERSION:
        raise VersionMismatchError(f"format_version {version} is not supported (expected {FORMAT_VERSION})")
    for name in ("curves/displacement", "curves/force"):
        if name not in data:
            raise MalformedSampleError(f"missing dataset /{name}")
    disp = np.asarray(data["curves/displacement"], dtype=_F8)
    force = np.asarray(data["curves/force"], dtype=_F8)
    if disp.shape != force.shape:
        raise TruncatedSampleError("displacement and force curves differ in length")
    n = len(disp)
    fields = {}
    for fname in FIELD_NAMES:
        prefix = f"fields/{fname}/"
        names = sorted(k for k in data if k.startswith(prefix))
        if not names and not any(k.startswith(f"fields/{fname}") for k in data):
            raise MalformedSampleError(f"missing group /fields/{fname}")
        expected = [prefix + _step_name(k) for k in range(n)]
        if names != expected:
            raise TruncatedSampleError(f"/fields/{fname} holds {len(names)} steps, curves hold {n}")
        fields[fname] = np.stack([np.asarray(data[k], dtype=_F8) for k in expected])
    initial = data.get("initial/phase")
    return SampleFile(fields=fields, displacement=disp, force=force, attrs=attrs,
                      initial_phase=None if initial is None else np.asarray(initial, dtype=_F8))


def sample_path(out_dir, bc: str, decomposition: str, seed: int, suffix: str = ".h5") -> Path:
    return Path(out_dir) / f"{bc}-{decomposition}" / f"{seed}{suffix}"


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def resample(field, shape: tuple[int, int], Lx: float = 1.0, Ly: float = 1.0) -> np.ndarray:
    """Bilinear interpolation of a nodal field onto cell centres of a
    ``shape = (rows, cols)`` grid covering the same domain."""
    field = np.asarray(field, dtype=float)
    if field.ndim != 2 or min(field.shape) < 2:
        raise ValueError(f"expected a 2D nodal field, got shape {field.shape}")
    rows, cols = shape
    src_r, src_c = field.shape
    # target cell centres in source index space
    y = (np.arange(rows) + 0.5) / rows * (src_r - 1)
    x = (np.arange(cols) + 0.5) / cols * (src_c - 1)
    iy = np.minimum(np.floor(y).astype(int), src_r - 2)
    ix = np.minimum(np.floor(x).astype(int), src_c - 2)
    ty = (y - iy)[:, None]
    tx = (x - ix)[None, :]
    f00 = field[np.ix_(iy, ix)]
    f01 = field[np.ix_(iy, ix + 1)]
    f10 = field[np.ix_(iy + 1, ix)]
    f11 = field[np.ix_(iy + 1, ix + 1)]
    return (1 - ty) * ((1 - tx) * f00 + tx * f01) + ty * ((1 - tx) * f10 + tx * f11)


def downsample(field, target: tuple[int, int] = (128, 128)) -> np.ndarray:
    field = np.asarray(field)
    if target[0] > field.shape[0] or target[1] > field.shape[1]:
        raise ValueError(f"target {target} is larger than the source field {field.shape}")
    return resample(field, target)


# ---------------------------------------------------------------------------
# Curves and reports
# ---------------------------------------------------------------------------

CURVE_HEADER = ("displacement_mm", "force_N")


def export_curve(records, path) -> Path:
    """Two-column CSV of applied displacement and reaction force."""
    if not records:
        raise ValueError("no step records to export")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for r in records:
            w.writerow([repr(float(r.displacement)), repr(float(r.force))])
    return path


def read_curve(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CURVE_HEADER:
        raise ValueError(f"{path}: not a force-displacement CSV")
    body = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
    return body[:, 0], body[:, 1]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")
    os.replace(tmp, path)
    return path
