"""Resampling, rigid transform application and training augmentations.

Interpolation is align-corners trilinear: resampling an axis from n to m
samples places output sample j at input coordinate j * (n-1) / (m-1), so the
outer voxel centers coincide and the physical extent (n-1) * spacing is
preserved exactly. Masks always use nearest interpolation and stay binary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .containers import Mask3D, Volume3D
from .geometry import RigidTransform

_AXIS_INDEX = {"x": 0, "z": 2}


def _order_for(obj, mode: str) -> int:
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"unknown interpolation mode {mode!r}")
    if isinstance(obj, Mask3D) and mode != "nearest":
        raise ValueError("masks must be resampled with mode='nearest'")
    return 1 if mode == "trilinear" else 0


def _sample(data, coords, order: int):
    return map_coordinates(
        data.astype(np.float32), coords, order=order, mode="constant", cval=0.0, prefilter=False
    )


def _rebuild(obj, data, spacing=None, origin=None, orientation=None):
    spacing = obj.spacing if spacing is None else spacing
    origin = obj.origin if origin is None else origin
    orientation = obj.orientation if orientation is None else orientation
    if isinstance(obj, Mask3D):
        return Mask3D(
            data=(data >= 0.5).astype(np.uint8),
            spacing=spacing,
            origin=origin,
            orientation=orientation,
        )
    return Volume3D(
        data=data, spacing=spacing, origin=origin, orientation=orientation, kind=obj.kind
    )


def resample_volume(vol, target_dims, mode: str = "trilinear"):
    """Resample to target_dims preserving the physical extent.

    Spacing is rescaled by (n-1)/(m-1) per axis; singleton axes keep their
    spacing (their extent is 0 under the voxel-center convention).
    """
    target_dims = tuple(int(d) for d in target_dims)
    if len(target_dims) != 3 or any(d <= 0 for d in target_dims):
        raise ValueError(f"target_dims must be 3 positive integers, got {target_dims}")
    order = _order_for(vol, mode)

    src_dims = vol.dims
    axes_coords = []
    new_spacing = np.array(vol.spacing, dtype=np.float64)
    for k in range(3):
        n, m = src_dims[k], target_dims[k]
        if m > 1 and n > 1:
            scale = (n - 1) / (m - 1)
            axes_coords.append(np.arange(m) * scale)
            new_spacing[k] = vol.spacing[k] * scale
        elif n == 1:
            axes_coords.append(np.zeros(m))
        else:  # m == 1: sample the geometric center
            axes_coords.append(np.array([(n - 1) / 2.0]))
    grid = np.meshgrid(*axes_coords, indexing="ij")
    out = _sample(vol.data, np.stack(grid), order).reshape(target_dims)
    return _rebuild(vol, out, spacing=new_spacing)


def _target_grid(vol, target):
    if target is None:
        return vol.dims, vol.spacing, vol.origin, vol.orientation
    if isinstance(target, (Volume3D, Mask3D)):
        return target.dims, target.spacing, target.origin, target.orientation
    return (
        tuple(int(d) for d in target["dims"]),
        np.asarray(target.get("spacing", (1.0, 1.0, 1.0)), dtype=np.float64),
        np.asarray(target.get("origin", (0.0, 0.0, 0.0)), dtype=np.float64),
        np.asarray(target.get("orientation", np.eye(3)), dtype=np.float64),
    )


def apply_rigid_transform(vol, t: RigidTransform, target=None, mode: str = "trilinear",
                          return_valid: bool = False):
    """Resample vol onto a target grid through the rigid map t (source -> world).

    Each target voxel position is pulled back through t^-1 into the source
    grid; out-of-support voxels are 0. With return_valid=True also returns
    the u8 mask of voxels that landed inside the source grid.
    """
    dims, spacing, origin, orientation = _target_grid(vol, target)
    if any(d <= 0 for d in dims) or np.any(np.asarray(spacing) <= 0):
        raise ValueError("target grid must have positive dims and spacing")
    order = _order_for(vol, mode)

    idx = np.stack(
        np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    world = (orientation @ (idx * spacing).T).T + origin
    src_world = t.inverse().apply(world)
    src_idx = vol.world_to_index(src_world)

    eps = 1e-9
    hi = np.asarray(vol.dims, dtype=np.float64) - 1
    valid = np.all((src_idx >= -eps) & (src_idx <= hi + eps), axis=1)

    out = _sample(vol.data, src_idx.T, order).reshape(dims)
    out[~valid.reshape(dims)] = 0.0
    result = _rebuild(vol, out, spacing=spacing, origin=origin, orientation=orientation)
    if return_valid:
        vmask = Mask3D(
            data=valid.reshape(dims).astype(np.uint8),
            spacing=spacing, origin=origin, orientation=orientation,
        )
        return result, vmask
    return result


def flip_augment(vol, axes):
    """Mirror the volume along a subset of {x, z}.

    The beam/depth axis y is never flipped (an image must not be turned
    upside down relative to the probe).
    """
    axes = [axes] if isinstance(axes, str) else list(axes)
    idx = []
    for a in axes:
        if a not in _AXIS_INDEX:
            raise ValueError(f"flips allowed only on x and z, got {a!r}")
        idx.append(_AXIS_INDEX[a])
    data = vol.data
    for k in sorted(set(idx)):
        data = np.flip(data, axis=k)
    return _rebuild(vol, np.ascontiguousarray(data))


@dataclass
class AffineAugmentParams:
    """Affine augmentation parameters; identity when everything is zero.

    translation is a forward content shift in voxels, rotation in degrees per
    axis, scale in percent, shear as voxel displacement accumulated across
    the full extent of the driving axis (pairs x<-y, y<-z, z<-x).
    """

    translation: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (0.0, 0.0, 0.0)
    scale: float = 0.0
    shear: tuple = (0.0, 0.0, 0.0)
    rng_seed: int = 0

    MAX_TRANSLATION = 10.0
    MAX_ROTATION = 15.0
    MAX_SCALE = 10.0
    MAX_SHEAR = 15.0

    @staticmethod
    def sample(rng_seed: int) -> "AffineAugmentParams":
        rng = np.random.default_rng(rng_seed)
        p = AffineAugmentParams
        return AffineAugmentParams(
            translation=tuple(rng.uniform(-p.MAX_TRANSLATION, p.MAX_TRANSLATION, 3)),
            rotation=tuple(rng.uniform(-p.MAX_ROTATION, p.MAX_ROTATION, 3)),
            scale=float(rng.uniform(-p.MAX_SCALE, p.MAX_SCALE)),
            shear=tuple(rng.uniform(-p.MAX_SHEAR, p.MAX_SHEAR, 3)),
            rng_seed=rng_seed,
        )


def _rotation_matrix(degrees) -> np.ndarray:
    rx, ry, rz = np.deg2rad(np.asarray(degrees, dtype=np.float64))
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def affine_augment(vol, params: AffineAugmentParams):
    """Apply a centered affine (rotation, scale, shear) plus voxel translation."""
    dims = np.asarray(vol.dims, dtype=np.float64)
    center = (dims - 1) / 2.0

    rot = _rotation_matrix(params.rotation)
    s = 1.0 + params.scale / 100.0
    shear = np.eye(3)
    extent = np.maximum(dims - 1, 1.0)
    shear[0, 1] = params.shear[0] / extent[1]
    shear[1, 2] = params.shear[1] / extent[2]
    shear[2, 0] = params.shear[2] / extent[0]
    fwd = rot @ (s * np.eye(3)) @ shear
    inv = np.linalg.inv(fwd)

    order = 0 if isinstance(vol, Mask3D) else 1
    idx = np.stack(
        np.meshgrid(*(np.arange(d, dtype=np.float64) for d in vol.dims), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    src = (idx - center - np.asarray(params.translation, dtype=np.float64)) @ inv.T + center
    out = _sample(vol.data, src.T, order).reshape(vol.dims)
    return _rebuild(vol, out)
