"""Dataset I/O and the synthetic scene generator.

Calibration files follow the KITTI text convention (``key: 12 floats`` as a
row-major 3x4 [R|t]) and clouds are packed little-endian float32 records, so
real files in that ecosystem load unchanged.  The scene generator ray-casts
simple primitives to produce frames for desk-scale validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import LIDAR_CHANNELS, RADAR_CHANNELS, FrameSet, PointCloud
from .errors import (
    DegenerateSceneError,
    NonRigidError,
    ParseError,
    SizeMismatchError,
)
from .projection import ProjectionConfig, project_pinhole
from .transform import RigidTransform, compose, invert

__all__ = [
    "Box",
    "Cylinder",
    "GroundPlane",
    "SceneSpec",
    "default_sensor_poses",
    "generate_scene",
    "load_calib",
    "load_cloud",
    "load_frame",
    "random_scene_spec",
    "read_pgm",
    "save_calib",
    "save_cloud",
    "save_frame",
    "write_pgm",
]

_EPS = 1e-6


@dataclass(frozen=True)
class GroundPlane:
    z: float = -1.6
    intensity: float = 0.3
    rcs: float = 0.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        dz = np.where(np.abs(dirs[:, 2]) < 1e-12, 1e-12, dirs[:, 2])
        t = (self.z - origin[2]) / dz
        return np.where(t > _EPS, t, np.inf)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    intensity: float = 0.8
    rcs: float = 10.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.center) - 0.5 * np.asarray(self.size)
        hi = np.asarray(self.center) + 0.5 * np.asarray(self.size)
        d = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
        t1 = (lo - origin) / d
        t2 = (hi - origin) / d
        t_enter = np.max(np.minimum(t1, t2), axis=1)
        t_exit = np.min(np.maximum(t1, t2), axis=1)
        hit = (t_enter <= t_exit) & (t_enter > _EPS)
        return np.where(hit, t_enter, np.inf)


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder (side surface only) between z_min and z_max."""

    cx: float
    cy: float
    radius: float
    z_min: float
    z_max: float
    intensity: float = 0.6
    rcs: float = 6.0

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        ox = origin[0] - self.cx
        oy = origin[1] - self.cy
        a = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
        a = np.where(a < 1e-12, 1e-12, a)
        b = 2.0 * (ox * dirs[:, 0] + oy * dirs[:, 1])
        c = ox * ox + oy * oy - self.radius**2
        disc = b * b - 4.0 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        best = np.full(dirs.shape[0], np.inf)
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            z = origin[2] + t * dirs[:, 2]
            ok = (disc >= 0.0) & (t > _EPS) & (z >= self.z_min) & (z <= self.z_max)
            best = np.where(ok & (t < best), t, best)
        return best


Primitive = GroundPlane | Box | Cylinder


def _default_camera() -> ProjectionConfig:
    # 90 degree horizontal field of view looking along +z.
    return ProjectionConfig.pinhole(640, 320, fx=320.0, fy=320.0, cx=320.0, cy=160.0)


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic description of one synthetic scene."""

    seed: int = 0
    primitives: tuple[Primitive, ...] = ()
    lidar_density: int = 4000
    radar_density: int = 400
    lidar_noise: float = 0.0
    radar_noise: float = 0.0
    radar_dropout: float = 0.0
    rcs_noise: float = 1.0
    max_range: float = 80.0
    lidar_elevation: tuple[float, float] = (-0.45, 0.25)
    radar_elevation: tuple[float, float] = (-0.21, 0.09)
    camera: ProjectionConfig = field(default_factory=_default_camera)

    def __post_init__(self) -> None:
        if self.lidar_density < 0 or self.radar_density < 0:
            raise ValueError("densities must be >= 0")
        if self.lidar_noise < 0.0 or self.radar_noise < 0.0:
            raise ValueError("noise sigma must be >= 0")
        if not 0.0 <= self.radar_dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


def random_scene_spec(seed: int, n_boxes: int = 14, n_cylinders: int = 5, **kwargs) -> SceneSpec:
    """Scatter boxes and poles around the rig, enclosed by building walls.

    The walls close the scene like an urban canyon; their vertical faces are
    what makes horizontal translation observable from range alone.
    """
    rng = np.random.default_rng(seed)
    prims: list[Primitive] = [GroundPlane()]
    for axis in range(2):
        for side in (-1.0, 1.0):
            dist = rng.uniform(16.0, 26.0)
            center = [0.0, 0.0, 2.4]
            center[axis] = side * dist
            size = [80.0, 80.0, 8.0]
            size[axis] = 0.5
            prims.append(
                Box(
                    center=tuple(center),
                    size=tuple(size),
                    intensity=rng.uniform(0.3, 0.9),
                    rcs=rng.uniform(5.0, 15.0),
                )
            )
    for _ in range(n_boxes):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        dist = rng.uniform(3.5, 15.0)
        size = (rng.uniform(0.8, 3.5), rng.uniform(0.8, 3.5), rng.uniform(1.2, 3.5))
        center = (dist * math.cos(angle), dist * math.sin(angle), -1.6 + 0.5 * size[2])
        prims.append(
            Box(center=center, size=size, intensity=rng.uniform(0.2, 1.0), rcs=rng.uniform(0.0, 15.0))
        )
    for _ in range(n_cylinders):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        dist = rng.uniform(3.0, 12.0)
        height = rng.uniform(2.0, 5.0)
        prims.append(
            Cylinder(
                cx=dist * math.cos(angle),
                cy=dist * math.sin(angle),
                radius=rng.uniform(0.15, 0.45),
                z_min=-1.6,
                z_max=-1.6 + height,
                intensity=rng.uniform(0.2, 1.0),
                rcs=rng.uniform(0.0, 15.0),
            )
        )
    return SceneSpec(seed=seed, primitives=tuple(prims), **kwargs)


def default_sensor_poses() -> dict[str, RigidTransform]:
    """A plausible roof rig: lidar up top, radar at the bumper, camera behind.

    World axes are x-forward / y-left / z-up; the camera pose maps its
    z-forward / x-right / y-down optical frame into that world.
    """
    cam_r = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    cam = np.eye(4)
    cam[:3, :3] = cam_r
    cam[:3, 3] = (-0.15, 0.12, 0.05)
    lidar = np.eye(4)
    lidar[:3, 3] = (0.0, 0.0, 0.25)
    radar = np.eye(4)
    yaw = math.radians(2.0)
    radar[:3, :3] = np.array(
        [[math.cos(yaw), -math.sin(yaw), 0.0], [math.sin(yaw), math.cos(yaw), 0.0], [0.0, 0.0, 1.0]]
    )
    radar[:3, 3] = (0.6, -0.25, -0.15)
    return {
        "camera": RigidTransform.from_matrix(cam),
        "lidar": RigidTransform.from_matrix(lidar),
        "radar": RigidTransform.from_matrix(radar),
    }


def _cast(
    origin: np.ndarray,
    dirs: np.ndarray,
    primitives: tuple[Primitive, ...],
    max_range: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit distance and primitive index per ray (-1 where none)."""
    t_best = np.full(dirs.shape[0], np.inf)
    idx_best = np.full(dirs.shape[0], -1, dtype=np.int64)
    for i, prim in enumerate(primitives):
        t = prim.intersect(origin, dirs)
        closer = t < t_best
        t_best[closer] = t[closer]
        idx_best[closer] = i
    miss = ~np.isfinite(t_best) | (t_best > max_range)
    idx_best[miss] = -1
    return t_best, idx_best


def _lidar_grid(density: int, elevation: tuple[float, float]) -> np.ndarray:
    n_rows = 24
    n_cols = max(density // n_rows, 1)
    az = (np.arange(n_cols) + 0.5) / n_cols * 2.0 * math.pi - math.pi
    el = np.linspace(elevation[0], elevation[1], n_rows)
    az, el = np.meshgrid(az, el)
    az, el = az.ravel(), el.ravel()
    return np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1
    )


def _camera_rays(cfg: ProjectionConfig) -> np.ndarray:
    u, v = np.meshgrid(np.arange(cfg.width), np.arange(cfg.height))
    dx = (u.ravel() + 0.5 - cfg.cx) / cfg.fx
    dy = (v.ravel() + 0.5 - cfg.cy) / cfg.fy
    dirs = np.stack([dx, dy, np.ones_like(dx)], axis=1)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def generate_scene(
    spec: SceneSpec,
    sensor_poses: Mapping[str, RigidTransform],
    index: int = 0,
) -> FrameSet:
    """Ray-cast the scene from each sensor pose into a clean FrameSet.

    Clouds are expressed in their own sensor frames and the ground-truth
    pairwise calibrations are derived from the poses.  Everything is a pure
    function of (spec, sensor_poses), with spec.seed driving sampling noise.
    """
    if not spec.primitives:
        raise DegenerateSceneError("scene has no primitives")
    rng = np.random.default_rng(spec.seed)
    cam_pose = sensor_poses["camera"]
    lidar_pose = sensor_poses["lidar"]
    radar_pose = sensor_poses["radar"]

    def cast_from(pose: RigidTransform, dirs_sensor: np.ndarray):
        dirs_world = dirs_sensor @ pose.rotation_matrix().T
        t, idx = _cast(pose.t, dirs_world, spec.primitives, spec.max_range)
        hit = idx >= 0
        return t[hit], idx[hit], dirs_sensor[hit]

    # Lidar: dense angular grid, range noise, constant intensity per primitive.
    t, idx, dirs = cast_from(lidar_pose, _lidar_grid(spec.lidar_density, spec.lidar_elevation))
    t = t + rng.normal(0.0, 1.0, t.shape) * spec.lidar_noise
    lidar = PointCloud(
        xyz=dirs * t[:, None],
        channels=np.array([spec.primitives[i].intensity for i in idx]).reshape(-1, 1),
        schema=LIDAR_CHANNELS,
    )

    # Radar: sparse random directions, RCS noise, dropout, static scene.
    az = rng.uniform(-math.pi, math.pi, spec.radar_density)
    el = rng.uniform(spec.radar_elevation[0], spec.radar_elevation[1], spec.radar_density)
    radar_dirs = np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1
    )
    t, idx, dirs = cast_from(radar_pose, radar_dirs)
    t = t + rng.normal(0.0, 1.0, t.shape) * spec.radar_noise
    rcs = np.array([spec.primitives[i].rcs for i in idx]) + rng.normal(0.0, 1.0, t.shape) * spec.rcs_noise
    keep = rng.random(t.shape[0]) >= spec.radar_dropout
    radar = PointCloud(
        xyz=(dirs * t[:, None])[keep],
        channels=np.stack([rcs, np.zeros_like(t), np.zeros_like(t)], axis=1)[keep],
        schema=RADAR_CHANNELS,
    )

    # Camera: one ray per pixel, rendered through the pinhole projector.
    t, idx, dirs = cast_from(cam_pose, _camera_rays(spec.camera))
    camera_depth = project_pinhole(PointCloud.bare(dirs * t[:, None]), spec.camera)

    n_camera = int(np.count_nonzero(camera_depth[..., 0] > 0))
    for name, count in (("lidar", len(lidar)), ("radar", len(radar)), ("camera", n_camera)):
        if count < 10:
            raise DegenerateSceneError(f"{name} sees only {count} points")

    return FrameSet(
        index=index,
        camera_depth=camera_depth,
        camera_config=spec.camera,
        lidar=lidar,
        radar=radar,
        fixed_cam_lidar=compose(invert(cam_pose), lidar_pose),
        fixed_lidar_radar=compose(invert(lidar_pose), radar_pose),
        fixed_radar_cam=compose(invert(radar_pose), cam_pose),
    )


# --- calibration text files -------------------------------------------------


def save_calib(transforms: Mapping[str, RigidTransform], path) -> None:
    """Write ``key: 12 floats`` rows (row-major 3x4 [R|t]), full precision."""
    lines = []
    for key, tf in transforms.items():
        m = tf.matrix()[:3, :].reshape(12)
        lines.append(key + ": " + " ".join(f"{v:.17g}" for v in m))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_calib(path) -> dict[str, RigidTransform]:
    """Parse calibration rows into transforms, checking rotation rigidity."""
    out: dict[str, RigidTransform] = {}
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ParseError(f"missing ':' in line {line!r}")
        key, _, rest = line.partition(":")
        key = key.strip()
        try:
            values = [float(v) for v in rest.split()]
        except ValueError as exc:
            raise ParseError(f"non-numeric value in row {key!r}") from exc
        if len(values) != 12:
            raise ParseError(f"row {key!r} has {len(values)} values, expected 12")
        m = np.array(values).reshape(3, 4)
        r = m[:, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-3 or np.linalg.det(r) < 0.0:
            raise NonRigidError(f"row {key!r} rotation block is not orthonormal")
        out[key] = RigidTransform.from_matrix(m)
    return out


# --- packed binary clouds ---------------------------------------------------


def save_cloud(cloud: PointCloud, path) -> None:
    """Consecutive little-endian float32 records of (x, y, z, channels...)."""
    rec = np.concatenate([cloud.xyz, cloud.channels], axis=1).astype("<f4")
    rec.tofile(path)


def load_cloud(path, schema: tuple[str, ...]) -> PointCloud:
    raw = np.fromfile(path, dtype="<f4")
    width = 3 + len(schema)
    if raw.size % width != 0:
        raise SizeMismatchError(
            f"{path}: {raw.size} values is not a multiple of record size {width}"
        )
    rec = raw.reshape(-1, width)
    return PointCloud(xyz=rec[:, :3], channels=rec[:, 3:], schema=schema)


# --- PGM rasters ------------------------------------------------------------


def write_pgm(channel: np.ndarray, path, max_value: float) -> None:
    """16-bit binary PGM of one raster channel, linearly scaled to max_value."""
    channel = np.asarray(channel, dtype=float)
    if max_value <= 0.0:
        raise ValueError("max_value must be > 0")
    scaled = np.clip(channel / max_value, 0.0, 1.0)
    data = np.round(scaled * 65535.0).astype(">u2")
    header = f"P5\n{channel.shape[1]} {channel.shape[0]}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 16-bit PGM back into a float array scaled to [0, 1]."""
    blob = Path(path).read_bytes()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    data = np.frombuffer(parts[3], dtype=">u2" if maxval > 255 else "u1", count=width * height)
    return data.reshape(height, width).astype(float) / maxval


# --- frame directories --------------------------------------------------------


def save_frame(frame: FrameSet, out_dir, depth_scale: float = 80.0) -> None:
    """Write one frame as lidar.bin, radar.bin, camera_depth.pgm, calib.txt.

    A mis.txt with the applied miscalibration appears only for perturbed
    frames.  Camera intrinsics and the depth scale travel in the run
    manifest, not here.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_cloud(frame.lidar, out_dir / "lidar.bin")
    save_cloud(frame.radar, out_dir / "radar.bin")
    write_pgm(frame.camera_depth[..., 0], out_dir / "camera_depth.pgm", depth_scale)
    save_calib(
        {
            "cam_lidar": frame.fixed_cam_lidar,
            "lidar_radar": frame.fixed_lidar_radar,
            "radar_cam": frame.fixed_radar_cam,
        },
        out_dir / "calib.txt",
    )
    identity = RigidTransform.identity()
    perturbed = (
        np.max(np.abs(frame.lidar_mis.matrix() - identity.matrix())) > 1e-12
        or np.max(np.abs(frame.radar_mis.matrix() - identity.matrix())) > 1e-12
    )
    if perturbed:
        save_calib(
            {"lidar_mis": frame.lidar_mis, "radar_mis": frame.radar_mis},
            out_dir / "mis.txt",
        )


def load_frame(
    frame_dir,
    camera: ProjectionConfig,
    depth_scale: float = 80.0,
    index: int = 0,
    radar_accum_count: int = 1,
) -> FrameSet:
    """Inverse of save_frame given the camera config from the manifest."""
    frame_dir = Path(frame_dir)
    calib = load_calib(frame_dir / "calib.txt")
    depth = read_pgm(frame_dir / "camera_depth.pgm") * depth_scale
    identity = RigidTransform.identity()
    mis = {"lidar_mis": identity, "radar_mis": identity}
    if (frame_dir / "mis.txt").exists():
        mis.update(load_calib(frame_dir / "mis.txt"))
    return FrameSet(
        index=index,
        camera_depth=depth[..., None].astype(np.float32),
        camera_config=camera,
        lidar=load_cloud(frame_dir / "lidar.bin", LIDAR_CHANNELS),
        radar=load_cloud(frame_dir / "radar.bin", RADAR_CHANNELS),
        fixed_cam_lidar=calib["cam_lidar"],
        fixed_lidar_radar=calib["lidar_radar"],
        fixed_radar_cam=calib["radar_cam"],
        lidar_mis=mis["lidar_mis"],
        radar_mis=mis["radar_mis"],
        radar_accum_count=radar_accum_count,
    )
