"""Synthetic 3D ultrasound phantoms: frustum, placenta crescent, fetal
occluder with acoustic shadow, speckle, and simulated raters.

Anatomy model: a spherical uterine cavity centered on the beam axis, a
placenta modelled as a spherical-shell sector (crescent) hugging the inside
of the uterine wall, and a fetal sphere in the amniotic fluid. Anterior
placentas hug the near-field wall (concave down, towards the probe),
posterior ones the far-field wall behind the fetus, where the fetal shadow
attenuates them. The crescent has an analytic volume
(2*pi/3)*(r_out^3 - r_in^3)*(1 - cos(alpha)) used as volumetry ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .containers import Mask3D, Volume3D, write_container
from .errors import DegenerateSpecError
from .geometry import FrustumGeometry

CLASS_ANTERIOR, CLASS_NONE, CLASS_POSTERIOR = 0, 1, 2
CLASS_NAMES = {CLASS_ANTERIOR: "anterior", CLASS_NONE: "none", CLASS_POSTERIOR: "posterior"}

# tissue intensities before speckle (arbitrary units)
INTENSITY = {
    "background": 0.10,
    "fluid": 0.03,
    "placenta": 0.55,
    "fetus": 0.70,
    "wall": 0.40,
}


@dataclass
class PhantomSpec:
    """Knobs for one synthetic case."""

    class_label: int = CLASS_ANTERIOR
    dims: tuple = (64, 64, 64)
    spacing: tuple = (2.0, 2.0, 2.0)
    placenta_thickness_mm: float = 14.0
    fetus_radius_mm: float = 18.0
    shadow_strength: float = 0.6
    speckle_sigma: float = 0.25
    rng_seed: int = 0
    # optional per-case anatomy overrides (otherwise derived from extent + rng)
    uterus_radius_mm: float | None = None
    crescent_half_angle_deg: float | None = None
    jitter: float = 1.0  # 0 disables random anatomy variation

    def __post_init__(self):
        if self.class_label not in CLASS_NAMES:
            raise ValueError(f"class_label must be 0/1/2, got {self.class_label}")
        if not 0.0 <= self.shadow_strength <= 1.0:
            raise ValueError("shadow_strength must be in [0, 1]")
        if self.speckle_sigma < 0:
            raise ValueError("speckle_sigma must be >= 0")


@dataclass
class PhantomCase:
    """A generated case: image, reference mask and bookkeeping."""

    image: Volume3D
    mask: Mask3D
    class_label: int
    geometry: FrustumGeometry
    truth_volume_ml: float
    patient_id: str = ""


def default_frustum(dims, spacing) -> FrustumGeometry:
    extent = (np.asarray(dims) - 1) * np.asarray(spacing, dtype=np.float64)
    standoff = 0.10 * extent[1]
    apex = np.array([extent[0] / 2.0, -standoff, extent[2] / 2.0])
    max_depth = np.linalg.norm(extent) + standoff
    return FrustumGeometry(apex=apex, opening_angle=80.0, max_depth=max_depth)


def crescent_volume_ml(r_in_mm: float, r_out_mm: float, half_angle_deg: float) -> float:
    """Analytic volume of a spherical-shell sector, in mL."""
    cap = 1.0 - np.cos(np.deg2rad(half_angle_deg))
    return (2.0 * np.pi / 3.0) * (r_out_mm**3 - r_in_mm**3) * cap / 1000.0


def _voxel_world(dims, spacing):
    axes = [np.arange(d, dtype=np.float64) * s for d, s in zip(dims, spacing)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return gx, gy, gz


def _tilted_pole(base_pole, rng, max_tilt_deg):
    tilt = np.deg2rad(rng.uniform(0, max_tilt_deg))
    azim = rng.uniform(0, 2 * np.pi)
    # orthonormal frame around the base pole (+-y)
    u = np.array([1.0, 0.0, 0.0])
    w = np.cross(base_pole, u)
    w /= np.linalg.norm(w)
    v = np.cross(w, base_pole)
    d = (
        np.cos(tilt) * base_pole
        + np.sin(tilt) * (np.cos(azim) * v + np.sin(azim) * w)
    )
    return d / np.linalg.norm(d)


def generate_phantom(spec: PhantomSpec) -> PhantomCase:
    """Generate one deterministic phantom case from its spec."""
    rng = np.random.default_rng(spec.rng_seed)
    dims = tuple(int(d) for d in spec.dims)
    spacing = np.asarray(spec.spacing, dtype=np.float64)
    extent = (np.asarray(dims) - 1) * spacing
    geom = default_frustum(dims, spacing)

    j = spec.jitter
    center = np.array([extent[0] / 2.0, 0.55 * extent[1], extent[2] / 2.0])
    center[0] += j * rng.uniform(-0.03, 0.03) * extent[0]
    center[2] += j * rng.uniform(-0.03, 0.03) * extent[2]

    r_uterus = spec.uterus_radius_mm or 0.40 * extent[1] * (1 + j * rng.uniform(-0.05, 0.05))
    wall = 3.0
    r_out = r_uterus - wall
    thickness = spec.placenta_thickness_mm * (1 + j * rng.uniform(-0.15, 0.15))
    r_in = r_out - thickness
    if r_in <= 0:
        raise DegenerateSpecError("placenta thickness exceeds cavity radius")
    alpha = spec.crescent_half_angle_deg or (50.0 + j * rng.uniform(-8.0, 8.0))

    fetus_center = center + j * np.array(
        [rng.uniform(-0.06, 0.06) * extent[0], rng.uniform(-0.04, 0.04) * extent[1],
         rng.uniform(-0.06, 0.06) * extent[2]]
    )
    r_fetus = spec.fetus_radius_mm * (1 + j * rng.uniform(-0.1, 0.1))

    gx, gy, gz = _voxel_world(dims, spacing)
    dx, dy, dz = gx - center[0], gy - center[1], gz - center[2]
    r = np.sqrt(dx * dx + dy * dy + dz * dz)

    tissue = np.full(dims, INTENSITY["background"], dtype=np.float32)
    tissue[r <= r_uterus] = INTENSITY["wall"]
    tissue[r <= r_uterus - wall] = INTENSITY["fluid"]

    mask = np.zeros(dims, dtype=np.uint8)
    truth_ml = 0.0
    if spec.class_label != CLASS_NONE:
        base_pole = np.array([0.0, -1.0, 0.0]) if spec.class_label == CLASS_ANTERIOR else np.array([0.0, 1.0, 0.0])
        pole = _tilted_pole(base_pole, rng, max_tilt_deg=12.0 * j)
        cosang = np.full(dims, -1.0)
        nz = r > 0
        cosang[nz] = (dx * pole[0] + dy * pole[1] + dz * pole[2])[nz] / r[nz]
        in_crescent = (r >= r_in) & (r <= r_out) & (cosang >= np.cos(np.deg2rad(alpha)))
        if in_crescent.sum() < 10:
            raise DegenerateSpecError(
                f"placenta covers {int(in_crescent.sum())} voxels; refine spacing"
            )
        mask[in_crescent] = 1
        tissue[in_crescent] = INTENSITY["placenta"]
        truth_ml = crescent_volume_ml(r_in, r_out, alpha)

    fet = np.sqrt(
        (gx - fetus_center[0]) ** 2 + (gy - fetus_center[1]) ** 2 + (gz - fetus_center[2]) ** 2
    )
    occluder = (fet <= r_fetus).astype(np.uint8)
    tissue[occluder == 1] = INTENSITY["fetus"]

    # soften tissue interfaces below voxel scale
    img = gaussian_filter(tissue, sigma=0.7, mode="nearest")
    volume = Volume3D(data=img, spacing=spacing)

    if spec.shadow_strength > 0 and occluder.any():
        volume = cast_shadow(
            volume,
            Mask3D(data=occluder, spacing=spacing),
            geom,
            spec.shadow_strength,
        )

    img = volume.data
    if spec.speckle_sigma > 0:
        noise = rng.standard_normal(dims).astype(np.float32)
        img = img * np.exp(spec.speckle_sigma * noise - spec.speckle_sigma**2 / 2.0)

    pos = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    inside = geom.contains(pos).reshape(dims)
    img = np.where(inside, img, 0.0)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)

    return PhantomCase(
        image=Volume3D(data=img, spacing=spacing),
        mask=Mask3D(data=mask, spacing=spacing),
        class_label=spec.class_label,
        geometry=geom,
        truth_volume_ml=truth_ml,
    )


def cast_shadow(image: Volume3D, occluder: Mask3D, geom: FrustumGeometry, strength: float) -> Volume3D:
    """Attenuate voxels lying behind the occluder on rays from the apex.

    Rays are parametrized by the tangent of their lateral angles; the
    occluder is resampled onto that ray grid, a running maximum along depth
    marks everything strictly beyond the first hit, and the result is mapped
    back to the voxel grid. Attenuation multiplies shadowed voxels by
    (1 - strength).
    """
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must be in [0, 1]")
    if image.dims != occluder.dims or not np.allclose(image.spacing, occluder.spacing):
        raise ValueError("image and occluder geometry must match")
    if strength == 0.0 or not occluder.data.any():
        return image.with_data(image.data.copy())

    dims = image.dims
    spacing = image.spacing
    ax, ay, az = geom.apex

    gx, gy, gz = _voxel_world(dims, spacing)
    depth = gy - ay  # axial distance from apex; positive inside the volume
    if np.any(depth <= 0):
        raise ValueError("apex must lie above the volume along the beam axis")
    u = (gx - ax) / depth
    w = (gz - az) / depth

    nu, ny, nw = dims
    u_lo, u_hi = float(u.min()), float(u.max())
    w_lo, w_hi = float(w.min()), float(w.max())
    us = np.linspace(u_lo, u_hi, nu)
    ws = np.linspace(w_lo, w_hi, nw)
    ys = gy[0, :, 0]

    # occluder sampled on the (u, y, w) ray grid
    uu, yy, ww = np.meshgrid(us, ys, ws, indexing="ij")
    sx = (ax + uu * (yy - ay)) / spacing[0]
    sy = yy / spacing[1]
    sz = (az + ww * (yy - ay)) / spacing[2]
    occ_rays = map_coordinates(
        occluder.data.astype(np.float32),
        np.stack([sx, sy, sz]),
        order=1, mode="constant", cval=0.0, prefilter=False,
    )
    hit = np.maximum.accumulate(occ_rays, axis=1)
    behind = np.zeros_like(hit)
    behind[:, 1:, :] = hit[:, :-1, :]  # strictly beyond the first hit

    # back to the voxel grid
    iu = (u - u_lo) / (u_hi - u_lo + 1e-30) * (nu - 1)
    iy = np.broadcast_to(np.arange(ny, dtype=np.float64)[None, :, None], dims)
    iw = (w - w_lo) / (w_hi - w_lo + 1e-30) * (nw - 1)
    shadow = map_coordinates(
        behind, np.stack([iu, iy, iw]), order=1, mode="nearest", prefilter=False
    )
    shadow = np.clip(shadow, 0.0, 1.0)
    out = image.data * (1.0 - strength * shadow).astype(np.float32)
    return image.with_data(out)


def simulate_rater(mask: Mask3D, severity: float, rng_seed: int = 0) -> Mask3D:
    """Perturb a mask boundary with a smooth random displacement field.

    Displacement amplitude grows with severity (voxels RMS), so the expected
    overlap with the original decreases monotonically in severity.
    """
    if severity < 0:
        raise ValueError("severity must be >= 0")
    if severity == 0 or mask.is_empty():
        return mask.with_data(mask.data.copy())

    rng = np.random.default_rng(rng_seed)
    dims = mask.dims
    disp = []
    for _ in range(3):
        f = rng.standard_normal(dims)
        f = gaussian_filter(f, sigma=4.0, mode="nearest")
        f /= np.sqrt(np.mean(f**2)) + 1e-12
        disp.append(f * severity)

    idx = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    coords = [idx[k] + disp[k] for k in range(3)]
    warped = map_coordinates(
        mask.data.astype(np.float32), np.stack(coords), order=1, mode="constant", cval=0.0,
        prefilter=False,
    )
    return mask.with_data((warped >= 0.5).astype(np.uint8))


@dataclass
class DatasetConfig:
    """Controls `phantom gen`: how many patients per class, images each."""

    n_anterior_patients: int = 6
    n_posterior_patients: int = 6
    n_none_patients: int = 2
    images_per_patient: tuple = (5, 8)
    none_image_fraction: float = 0.2  # extra no-placenta views for A/P patients
    dims: tuple = (64, 64, 64)
    spacing: tuple = (2.0, 2.0, 2.0)
    shadow_strength: float = 0.6
    speckle_sigma: float = 0.25
    rng_seed: int = 0
    ga_weeks_range: tuple = (19.0, 33.0)


def generate_dataset(config: DatasetConfig, out_dir) -> dict:
    """Generate a dataset directory with containers and a manifest JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.rng_seed)
    cases = []
    patient_no = 0

    def patient_cases(primary_class, n_patients):
        nonlocal patient_no
        for _ in range(n_patients):
            patient_no += 1
            pid = f"pat{patient_no:03d}"
            n_img = int(rng.integers(config.images_per_patient[0], config.images_per_patient[1] + 1))
            ga = float(rng.uniform(*config.ga_weeks_range))
            # placenta size is a patient property: fix the crescent per patient
            uterus_r = None
            half_angle = None
            thickness = 14.0 * (1 + rng.uniform(-0.15, 0.15))
            if primary_class != CLASS_NONE:
                extent_y = (config.dims[1] - 1) * config.spacing[1]
                uterus_r = 0.40 * extent_y * (1 + rng.uniform(-0.05, 0.05))
                half_angle = 50.0 + rng.uniform(-8.0, 8.0)
            for i in range(n_img):
                if primary_class == CLASS_NONE:
                    label = CLASS_NONE
                else:
                    label = (
                        CLASS_NONE
                        if rng.uniform() < config.none_image_fraction
                        else primary_class
                    )
                seed = int(rng.integers(0, 2**31 - 1))
                spec = PhantomSpec(
                    class_label=label,
                    dims=config.dims,
                    spacing=config.spacing,
                    placenta_thickness_mm=thickness,
                    shadow_strength=config.shadow_strength,
                    speckle_sigma=config.speckle_sigma,
                    rng_seed=seed,
                    uterus_radius_mm=uterus_r,
                    crescent_half_angle_deg=half_angle,
                )
                case = generate_phantom(spec)
                case.patient_id = pid
                cases.append((pid, ga, case, spec))

    patient_cases(CLASS_ANTERIOR, config.n_anterior_patients)
    patient_cases(CLASS_POSTERIOR, config.n_posterior_patients)
    patient_cases(CLASS_NONE, config.n_none_patients)

    records = []
    for i, (pid, ga, case, spec) in enumerate(cases):
        cid = f"case{i:04d}"
        img_path = out_dir / f"{cid}_img"
        write_container(case.image, img_path)
        rec = {
            "case_id": cid,
            "patient_id": pid,
            "class_label": case.class_label,
            "class_name": CLASS_NAMES[case.class_label],
            "image": f"{cid}_img",
            "mask": None,
            "truth_volume_ml": case.truth_volume_ml,
            "ga_weeks": ga,
            "rng_seed": spec.rng_seed,
            "geometry": {
                "apex_mm": [float(v) for v in case.geometry.apex],
                "opening_angle_deg": case.geometry.opening_angle,
                "max_depth_mm": case.geometry.max_depth,
                "axis": [float(v) for v in case.geometry.axis],
            },
        }
        if case.class_label != CLASS_NONE:
            mask_path = out_dir / f"{cid}_mask"
            write_container(case.mask, mask_path)
            rec["mask"] = f"{cid}_mask"
        records.append(rec)

    manifest = {
        "config": {
            "dims": list(config.dims),
            "spacing": list(config.spacing),
            "rng_seed": config.rng_seed,
        },
        "cases": records,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
