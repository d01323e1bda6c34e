"""3D volume and mask containers with physical geometry.

Conventions used throughout the package:

* arrays are indexed ``data[ix, iy, iz]``;
* axis semantics: x = lateral, y = beam/depth (the "up-down" axis pointing
  away from the probe), z = elevational;
* world position of a voxel: ``origin + orientation @ (index * spacing)``;
* physical extent of an axis is the span between the outer voxel centers,
  ``(n - 1) * spacing`` (0 for singleton axes).

On disk a volume is a JSON header next to a raw little-endian payload in
x-fastest order (Fortran order for the ``(nx, ny, nz)`` array).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

AXIS_SEMANTICS = ("x:lateral", "y:beam_depth", "z:elevational")

_ORTHO_TOL = 1e-6


def _check_geometry(data, spacing, origin, orientation):
    if data.ndim != 3:
        raise ValueError(f"expected 3D data, got shape {data.shape}")
    spacing = np.asarray(spacing, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    orientation = np.asarray(orientation, dtype=np.float64)
    if spacing.shape != (3,) or np.any(spacing <= 0):
        raise ValueError(f"spacing must be 3 positive reals, got {spacing}")
    if origin.shape != (3,):
        raise ValueError(f"origin must be a 3-vector, got {origin}")
    if orientation.shape != (3, 3):
        raise ValueError("orientation must be a 3x3 matrix")
    if not np.allclose(orientation @ orientation.T, np.eye(3), atol=_ORTHO_TOL):
        raise ValueError("orientation matrix is not orthonormal")
    return spacing, origin, orientation


@dataclass
class Volume3D:
    """Scalar 3D image (intensities or probabilities) on a regular grid."""

    data: np.ndarray
    spacing: np.ndarray = field(default_factory=lambda: np.ones(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    kind: str = "intensity"  # "intensity" or "probability"

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.spacing, self.origin, self.orientation = _check_geometry(
            self.data, self.spacing, self.origin, self.orientation
        )
        if self.kind not in ("intensity", "probability"):
            raise ValueError(f"unknown volume kind {self.kind!r}")
        if self.kind == "probability":
            lo, hi = float(self.data.min(initial=0.0)), float(self.data.max(initial=0.0))
            if lo < -1e-6 or hi > 1 + 1e-6:
                raise ValueError(f"probability volume outside [0,1]: [{lo}, {hi}]")

    @property
    def dims(self):
        return self.data.shape

    def extent_mm(self):
        """Span between outer voxel centers per axis."""
        return (np.asarray(self.dims) - 1) * self.spacing

    def voxel_volume_mm3(self) -> float:
        return float(np.prod(self.spacing))

    def index_to_world(self, idx):
        idx = np.atleast_2d(np.asarray(idx, dtype=np.float64))
        return (self.orientation @ (idx * self.spacing).T).T + self.origin

    def world_to_index(self, pos):
        pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
        return (self.orientation.T @ (pos - self.origin).T).T / self.spacing

    def same_grid(self, other, tol=1e-6) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.origin, other.origin, atol=tol)
            and np.allclose(self.orientation, other.orientation, atol=tol)
        )

    def with_data(self, data, kind=None) -> "Volume3D":
        return replace(self, data=data, kind=kind or self.kind)


@dataclass
class Mask3D:
    """Binary segmentation on the same kind of grid as Volume3D."""

    data: np.ndarray
    spacing: np.ndarray = field(default_factory=lambda: np.ones(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        uniques = np.unique(arr)
        if not np.all(np.isin(uniques, (0, 1))):
            raise ValueError(f"mask values must be 0/1, found {uniques[:10]}")
        self.data = arr.astype(np.uint8)
        self.spacing, self.origin, self.orientation = _check_geometry(
            self.data, self.spacing, self.origin, self.orientation
        )

    @property
    def dims(self):
        return self.data.shape

    def extent_mm(self):
        return (np.asarray(self.dims) - 1) * self.spacing

    def voxel_volume_mm3(self) -> float:
        return float(np.prod(self.spacing))

    def index_to_world(self, idx):
        return Volume3D.index_to_world(self, idx)

    def world_to_index(self, pos):
        return Volume3D.world_to_index(self, pos)

    def same_grid(self, other, tol=1e-6) -> bool:
        return Volume3D.same_grid(self, other, tol=tol)

    def foreground_count(self) -> int:
        return int(self.data.sum())

    def is_empty(self) -> bool:
        return not bool(self.data.any())

    def with_data(self, data) -> "Mask3D":
        return replace(self, data=data)

    def geometry_like(self) -> dict:
        return dict(spacing=self.spacing, origin=self.origin, orientation=self.orientation)


def _header(obj, dtype: str) -> dict:
    return {
        "dims": list(int(d) for d in obj.dims),
        "spacing_mm": [float(s) for s in obj.spacing],
        "origin_mm": [float(o) for o in obj.origin],
        "orientation": [float(v) for v in obj.orientation.reshape(-1)],
        "dtype": dtype,
        "axis_semantics": list(AXIS_SEMANTICS),
    }


def write_container(obj, path) -> Path:
    """Write a Volume3D/Mask3D as <path>.json + <path>.raw (x-fastest payload)."""
    path = Path(path)
    if path.suffix in (".json", ".raw"):
        path = path.with_suffix("")
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, Mask3D):
        dtype, payload = "u8", obj.data.astype("<u1")
    elif isinstance(obj, Volume3D):
        dtype, payload = "f32", obj.data.astype("<f4")
    else:
        raise TypeError(f"cannot serialize {type(obj)}")
    header = _header(obj, dtype)
    if isinstance(obj, Volume3D):
        header["kind"] = obj.kind
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
    path.with_suffix(".raw").write_bytes(payload.tobytes(order="F"))
    return path


def read_container(path):
    """Read a container written by write_container; returns Volume3D or Mask3D."""
    path = Path(path)
    if path.suffix in (".json", ".raw"):
        path = path.with_suffix("")
    header = json.loads(path.with_suffix(".json").read_text())
    dims = tuple(header["dims"])
    raw = path.with_suffix(".raw").read_bytes()
    geom = dict(
        spacing=np.array(header["spacing_mm"]),
        origin=np.array(header["origin_mm"]),
        orientation=np.array(header["orientation"]).reshape(3, 3),
    )
    if header["dtype"] == "u8":
        data = np.frombuffer(raw, dtype="<u1").reshape(dims, order="F")
        return Mask3D(data=data, **geom)
    if header["dtype"] == "f32":
        data = np.frombuffer(raw, dtype="<f4").reshape(dims, order="F")
        return Volume3D(data=data, kind=header.get("kind", "intensity"), **geom)
    raise ValueError(f"unknown container dtype {header['dtype']!r}")
