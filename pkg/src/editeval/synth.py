"""Ray-cast synthetic scenes with analytic depth, normals and labels.

Geometry is expressed in a camera frame with x right, y down and z forward.
Returned normals use the normal-map frame instead: x right, y up, z toward
the camera, so a surface facing the viewer has normal ``(0, 0, 1)``.
Depth is the z coordinate of the nearest hit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from editeval.cityscapes import CLASSES19
from editeval.core import IGNORE_ID, LabelMap, NormalField, RasterImage, ScalarField, write_image
from editeval.datasets import PreparedSample, write_f32_plane, write_labels_png, write_manifest
from editeval.depth import encode_depth_gray
from editeval.normals import AxisConvention, apply_convention, encode_normals
from editeval.segmentation import PALETTE7, PALETTE19, group_to_categories, render_palette

# camera frame (y down, z forward) -> normal-map frame (y up, z backward)
_TO_MAP_FRAME = np.array([1.0, -1.0, -1.0])


@dataclass(frozen=True)
class Camera:
    width: int
    height: int
    fx: float
    fy: float
    cx: float | None = None
    cy: float | None = None

    def principal_point(self) -> tuple[float, float]:
        cx = self.width / 2.0 if self.cx is None else self.cx
        cy = self.height / 2.0 if self.cy is None else self.cy
        return cx, cy

    def rays(self) -> np.ndarray:
        """Unnormalized rays through pixel centers, ``d_z = 1``, shape (H, W, 3)."""
        cx, cy = self.principal_point()
        u = np.arange(self.width) + 0.5
        v = np.arange(self.height) + 0.5
        uu, vv = np.meshgrid(u, v)
        return np.stack([(uu - cx) / self.fx, (vv - cy) / self.fy, np.ones_like(uu)], axis=-1)


@dataclass(frozen=True)
class Plane:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    label: int | None = None
    color: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    label: int | None = None
    color: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class SceneSpec:
    camera: Camera
    surfaces: tuple[Plane | Sphere, ...]
    seed: int = 0
    light: tuple[float, float, float] = field(default=(-0.4, -0.6, -1.0))


@dataclass(frozen=True, eq=False)
class SynthScene:
    image: RasterImage
    depth: ScalarField
    normals: NormalField
    labels: LabelMap


def _hit_plane(rays: np.ndarray, plane: Plane) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(plane.normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    p0 = np.asarray(plane.point, dtype=np.float64)
    denom = rays @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(denom) > 1e-12, (p0 @ n) / denom, np.inf)
    t = np.where(t > 0, t, np.inf)
    # orient toward the camera
    sign = np.where(denom > 0, -1.0, 1.0)[..., None]
    return t, np.broadcast_to(n, rays.shape) * sign


def _hit_sphere(rays: np.ndarray, sphere: Sphere) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(sphere.center, dtype=np.float64)
    a = np.einsum("...k,...k->...", rays, rays)
    b = rays @ c
    disc = b * b - a * (c @ c - sphere.radius**2)
    with np.errstate(invalid="ignore"):
        root = np.sqrt(disc)
        t_near = (b - root) / a
        t_far = (b + root) / a
    t = np.where(t_near > 0, t_near, t_far)
    t = np.where((disc >= 0) & (t > 0), t, np.inf)
    pts = rays * np.where(np.isfinite(t), t, 0.0)[..., None]
    return t, (pts - c) / sphere.radius


def synth_scene(spec: SceneSpec) -> SynthScene:
    if not spec.surfaces:
        raise ValueError("scene needs at least one surface")
    cam = spec.camera
    rays = cam.rays()
    h, w = cam.height, cam.width
    best_t = np.full((h, w), np.inf)
    best_n = np.zeros((h, w, 3))
    best_idx = np.full((h, w), -1, dtype=np.int64)
    for idx, surf in enumerate(spec.surfaces):
        if isinstance(surf, Plane):
            t, n = _hit_plane(rays, surf)
        else:
            t, n = _hit_sphere(rays, surf)
        closer = t < best_t
        best_t[closer] = t[closer]
        best_n[closer] = n[closer]
        best_idx[closer] = idx

    valid = best_idx >= 0
    normals = np.zeros((h, w, 3))
    nv = best_n[valid]
    normals[valid] = (nv / np.linalg.norm(nv, axis=-1, keepdims=True)) * _TO_MAP_FRAME
    depth = np.where(valid, best_t, 0.0)  # d_z = 1, so t is the z depth

    surface_labels = [i if s.label is None else s.label for i, s in enumerate(spec.surfaces)]
    label_of = np.array(surface_labels + [IGNORE_ID], dtype=np.int64)
    labels = label_of[np.where(valid, best_idx, len(spec.surfaces))]

    rng = np.random.default_rng(spec.seed)
    colors = np.array([
        s.color if s.color is not None else tuple(rng.uniform(0.2, 0.9, size=3)) for s in spec.surfaces
    ])
    light = np.asarray(spec.light, dtype=np.float64)
    light = -light / np.linalg.norm(light)  # direction toward the light, camera frame
    shade = np.zeros((h, w))
    shade[valid] = 0.25 + 0.75 * np.clip(best_n[valid] @ light, 0.0, 1.0)
    rgb = np.zeros((h, w, 3))
    rgb[valid] = colors[best_idx[valid]] * shade[valid][:, None]
    rgb = np.clip(rgb + rng.normal(0.0, 0.01, size=rgb.shape) * valid[..., None], 0.0, 1.0)

    return SynthScene(
        RasterImage(rgb),
        ScalarField(depth, valid),
        NormalField(normals, valid),
        LabelMap(labels),
    )


def random_scene(
    seed: int,
    width: int = 64,
    height: int = 48,
    wall_label: int = 2,
    floor_label: int = 0,
    object_labels: tuple[int, ...] = (13, 11, 8),
) -> SceneSpec:
    """A back wall, a floor and one to three spheres, drawn from ``seed``.

    Default labels are the Cityscapes train ids for building, road, and
    car/person/vegetation for the spheres.
    """
    rng = np.random.default_rng(seed)
    f = width * rng.uniform(0.8, 1.1)
    cam = Camera(width, height, f, f)
    wall_z = rng.uniform(4.0, 6.0)
    tilt = rng.uniform(-0.25, 0.25, size=2)
    wall = Plane((0.0, 0.0, wall_z), (tilt[0], tilt[1], -1.0), wall_label)
    floor_y = rng.uniform(1.0, 1.6)
    floor = Plane((0.0, floor_y, 0.0), (0.0, -1.0, rng.uniform(-0.1, 0.1)), floor_label)
    surfaces: list[Plane | Sphere] = [wall, floor]
    for _ in range(int(rng.integers(1, 4))):
        r = rng.uniform(0.3, 0.8)
        z = rng.uniform(2.0, wall_z - r - 0.2)
        x = rng.uniform(-0.4, 0.4) * z
        y = min(rng.uniform(-0.3, 0.3) * z, floor_y - r)
        surfaces.append(Sphere((x, y, z), r, int(rng.choice(object_labels))))
    return SceneSpec(cam, tuple(surfaces), seed=seed)


def write_synthetic_suite(
    out: str | Path,
    count: int = 8,
    width: int = 64,
    height: int = 48,
    seed: int = 0,
    inject: AxisConvention | None = None,
) -> dict[str, Path]:
    """Write prepared depth/normals/segmentation datasets plus "generated"
    outputs that are the encoded ground truth, saved as 8-bit PNG.

    ``inject`` renders the generated normal maps in a different axis
    convention so that calibration has something to undo.
    Returns the directories keyed by ``depth``, ``normals``, ``seg`` and
    ``generated``.
    """
    out = Path(out)
    dirs = {
        "depth": out / "depth",
        "normals": out / "normals",
        "seg": out / "seg",
        "generated": out / "generated",
    }
    for d in ("depth", "normals", "seg"):
        (dirs[d] / "images").mkdir(parents=True, exist_ok=True)
        (dirs[d] / "gt").mkdir(parents=True, exist_ok=True)
    for task in ("depth", "normals", "seg19", "seg7"):
        (dirs["generated"] / task).mkdir(parents=True, exist_ok=True)

    manifests: dict[str, list[PreparedSample]] = {"depth": [], "normals": [], "seg": []}
    for i in range(count):
        sid = f"scene_{i:04d}"
        scene = synth_scene(random_scene(seed + i, width, height))
        labels = LabelMap(scene.labels.labels, CLASSES19)
        for d in ("depth", "normals", "seg"):
            write_image(scene.image, dirs[d] / "images" / f"{sid}.png")

        write_f32_plane(scene.depth.values, dirs["depth"] / "gt" / f"{sid}.f32")
        write_image(encode_normals(scene.normals), dirs["normals"] / "gt" / f"{sid}.png")
        write_labels_png(labels.labels, dirs["seg"] / "gt" / f"{sid}.png")
        for d, kind, ext in (("depth", "depth_raw_f32", "f32"), ("normals", "normals_png", "png"),
                             ("seg", "labels_png", "png")):
            manifests[d].append(
                PreparedSample(sid, f"synth_{d}", f"images/{sid}.png", f"gt/{sid}.{ext}", kind, width, height,
                               f"synthetic:seed={seed + i}")
            )

        gen = dirs["generated"]
        write_image(encode_depth_gray(scene.depth), gen / "depth" / f"{sid}.png")
        pred_normals = scene.normals if inject is None else apply_convention(scene.normals, inject)
        write_image(encode_normals(pred_normals), gen / "normals" / f"{sid}.png")
        write_image(render_palette(labels, PALETTE19), gen / "seg19" / f"{sid}.png")
        write_image(render_palette(group_to_categories(labels), PALETTE7), gen / "seg7" / f"{sid}.png")

    for d, samples in manifests.items():
        write_manifest(samples, dirs[d])
    return dirs
