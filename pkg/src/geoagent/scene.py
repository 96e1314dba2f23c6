"""Ground-truth synthetic scenes: boxy objects with semantic poses, pinhole
cameras, gravity, and a JSON file format (poses stored as 16-element
row-major homogeneous matrices; see docs/scene_format.md).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo


class SceneError(ValueError):
    """Scene specification violates its invariants."""


@dataclass(frozen=True)
class SceneObject:
    """A box-shaped object. The local frame is semantic: +z is the object's
    front, +y its down, origin at the centroid; extents are half-sizes in
    meters."""

    object_id: str
    class_label: str
    pose: geo.RigidTransform        # object -> world
    extents: np.ndarray             # (3,) half-sizes
    text_label: str | None = None
    static: bool = True

    def __post_init__(self):
        ext = geo.as_vec3(self.extents)
        if np.any(ext <= 0):
            raise SceneError(f"object {self.object_id!r} has non-positive extents")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "pose", self.pose.retag(
            src_frame=geo.object_frame(self.object_id), dst_frame=geo.WORLD))

    @property
    def centroid(self):
        return self.pose.translation

    def corners(self):
        """The 8 box corners in world coordinates."""
        signs = np.array(list(itertools.product((-1, 1), repeat=3)), dtype=float)
        return self.pose.apply(signs * self.extents)


@dataclass(frozen=True)
class Camera:
    intrinsics: geo.CameraIntrinsics
    extrinsic: geo.RigidTransform   # world -> camera

    @property
    def pose(self):
        return geo.invert_rigid(self.extrinsic)


@dataclass(frozen=True)
class SceneSpec:
    """One static snapshot of a scene. The world frame is anchored at
    camera 0 (its extrinsic must be the identity)."""

    objects: tuple
    cameras: tuple
    gravity_down: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    scene_scale: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "cameras", tuple(self.cameras))
        object.__setattr__(self, "gravity_down", geo.normalize(self.gravity_down))
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError("object ids must be unique")
        if not self.cameras:
            raise SceneError("a scene needs at least one camera")
        e0 = self.cameras[0].extrinsic
        if (np.max(np.abs(e0.rotation.matrix - np.eye(3))) > 1e-12
                or np.max(np.abs(e0.translation)) > 1e-12):
            raise SceneError("camera 0's extrinsic must be the identity "
                             "(it anchors the world frame)")
        if self.scene_scale <= 0:
            raise SceneError("scene_scale must be positive")

    def object_by_id(self, object_id):
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise SceneError(f"no object with id {object_id!r}")

    def entity_names(self):
        return [o.object_id for o in self.objects]

    def class_labels(self):
        return sorted({o.class_label for o in self.objects})


@dataclass(frozen=True)
class NoiseConfig:
    """Perturbation levels for the synthetic tool backend. All draws derive
    from (seed, api name, per-api call index), so results do not depend on
    call concurrency."""

    pose_rotation_sigma: float = 0.0   # radians
    centroid_sigma_rel: float = 0.0    # fraction of scene_scale
    depth_noise_rel: float = 0.0       # fraction of depth
    detection_dropout: float = 0.0     # probability per detection
    seed: int = 0

    def __post_init__(self):
        for name in ("pose_rotation_sigma", "centroid_sigma_rel", "depth_noise_rel"):
            if getattr(self, name) < 0:
                raise SceneError(f"{name} must be >= 0")
        if not (0.0 <= self.detection_dropout <= 1.0):
            raise SceneError("detection_dropout must be in [0, 1]")

    @property
    def enabled(self):
        return (self.pose_rotation_sigma > 0 or self.centroid_sigma_rel > 0
                or self.depth_noise_rel > 0 or self.detection_dropout > 0)

    def to_json(self):
        return {"pose_rotation_sigma": self.pose_rotation_sigma,
                "centroid_sigma_rel": self.centroid_sigma_rel,
                "depth_noise_rel": self.depth_noise_rel,
                "detection_dropout": self.detection_dropout,
                "seed": self.seed}

    @staticmethod
    def from_json(data):
        return NoiseConfig(**data)


# ---------------------------------------------------------------------------
# JSON serialization

def _matrix16(T):
    return [float(x) for x in T.matrix().reshape(-1)]


def scene_to_json(scene):
    return {
        "scene_scale": scene.scene_scale,
        "gravity_down": [float(x) for x in scene.gravity_down],
        "objects": [
            {
                "id": o.object_id,
                "class_label": o.class_label,
                "pose": _matrix16(o.pose),
                "extents": [float(x) for x in o.extents],
                "text_label": o.text_label,
                "static": o.static,
            }
            for o in scene.objects
        ],
        "cameras": [
            {
                "intrinsics": {
                    "fx": c.intrinsics.fx, "fy": c.intrinsics.fy,
                    "cx": c.intrinsics.cx, "cy": c.intrinsics.cy,
                    "width": c.intrinsics.width, "height": c.intrinsics.height,
                },
                "extrinsic": _matrix16(c.extrinsic),
            }
            for c in scene.cameras
        ],
    }


def scene_from_json(data):
    try:
        objects = [
            SceneObject(
                object_id=o["id"],
                class_label=o["class_label"],
                pose=geo.RigidTransform.from_matrix(np.reshape(o["pose"], (4, 4))),
                extents=o["extents"],
                text_label=o.get("text_label"),
                static=o.get("static", True),
            )
            for o in data["objects"]
        ]
        cameras = [
            Camera(
                intrinsics=geo.CameraIntrinsics(**c["intrinsics"]),
                extrinsic=geo.RigidTransform.from_matrix(
                    np.reshape(c["extrinsic"], (4, 4)),
                    src_frame=geo.WORLD, dst_frame=geo.camera_frame(i)),
            )
            for i, c in enumerate(data["cameras"])
        ]
        return SceneSpec(
            objects=objects,
            cameras=cameras,
            gravity_down=data.get("gravity_down", [0.0, 1.0, 0.0]),
            scene_scale=data.get("scene_scale", 8.0),
        )
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, SceneError):
            raise
        raise SceneError(f"malformed scene document: {err}") from err


def save_scene(scene, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_json(scene), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(path):
    with open(path, encoding="utf-8") as fh:
        return scene_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# camera references ("cam0", "ep1:cam2")

def parse_camera_ref(ref):
    """Normalize a camera reference to (episode, camera) indices."""
    if isinstance(ref, int):
        return (0, ref)
    if isinstance(ref, (tuple, list)) and len(ref) == 2:
        return (int(ref[0]), int(ref[1]))
    if isinstance(ref, str):
        text = ref.strip().lower()
        episode = 0
        if ":" in text:
            ep_part, text = text.split(":", 1)
            if not ep_part.startswith("ep"):
                raise SceneError(f"bad camera reference {ref!r}")
            episode = int(ep_part[2:])
        if text.startswith("cam"):
            return (episode, int(text[3:]))
        if text.isdigit():
            return (episode, int(text))
    raise SceneError(f"bad camera reference {ref!r}")


def format_camera_ref(episode, camera):
    return f"cam{camera}" if episode == 0 else f"ep{episode}:cam{camera}"
