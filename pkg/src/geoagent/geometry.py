"""Deterministic geometric kernel: rigid transforms, rotation analysis,
reference frames, cardinal directions, projection, and point-cloud helpers.

Conventions used throughout:

* Column vectors. Applying a transform means ``R @ p + t``. Row-vector
  formulas of the form ``P_homo @ M.T`` are algebraically identical and the
  test suite asserts the equivalence.
* Frames follow the OpenCV convention: +z forward, +y down, +x completes a
  right-handed basis.
* An extrinsic maps world -> camera; a pose is its inverse (camera -> world).
* Rotation-direction labels (pan/tilt/roll) are assigned from the axis-angle
  vector of a relative rotation between poses. Note the signs are exact when
  the base pose is world-aligned (camera 0 defines the world); for an
  arbitrary base pose the axis-angle vector lives in world axes, and an
  extrinsic-delta reading of the same labels would flip them. This module
  implements the relative-pose reading.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

ORTHO_TOL = 1e-9
ANGLE_EPSILON = 0.01           # below this rotation angle (rad), motion is "negligible"
DEPTH_EPSILON = 1e-9           # minimum positive depth for projection
CARDINAL_MARGIN = math.sin(math.pi / 8)  # relative margin giving standard 8-wind sectors

WORLD = "world"
REFERENCE = "reference"


def camera_frame(index):
    return f"camera:{index}"


def object_frame(object_id):
    return f"object:{object_id}"


class GeometryError(ValueError):
    """Base class for geometric contract violations."""


class FrameMismatch(GeometryError):
    """A value was supplied in the wrong coordinate frame."""


class DegenerateInput(GeometryError):
    """Input configuration admits no well-defined result."""


class EmptySelection(GeometryError):
    """A selection operation matched nothing."""


class GimbalLockWarning(UserWarning):
    """Euler decomposition hit a gimbal-lock configuration; third angle fixed to 0."""


# ---------------------------------------------------------------------------
# small vector helpers (also the delegation targets for the expression language)

def as_vec3(v):
    """Coerce to a finite float64 vector of shape (3,)."""
    a = np.asarray(v, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise GeometryError(f"expected a 3-vector, got shape {np.asarray(v).shape}")
    if not np.all(np.isfinite(a)):
        raise GeometryError("vector has non-finite components")
    return a


def vec3(x, y, z):
    return as_vec3((x, y, z))


def normalize(v):
    a = as_vec3(v)
    n = float(np.linalg.norm(a))
    if n < 1e-15:
        raise DegenerateInput("cannot normalize a zero vector")
    return a / n


def vdot(a, b):
    return float(np.dot(as_vec3(a), as_vec3(b)))


def vcross(a, b):
    return np.cross(as_vec3(a), as_vec3(b))


def vnorm(v):
    return float(np.linalg.norm(as_vec3(v)))


def distance(a, b):
    return vnorm(as_vec3(a) - as_vec3(b))


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# core value types

class Rotation:
    """A proper rotation. The matrix is validated on construction:
    orthonormal within 1e-9 and det = +1 within 1e-9."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise GeometryError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise GeometryError("rotation matrix has non-finite entries")
        if np.max(np.abs(m.T @ m - np.eye(3))) > ORTHO_TOL:
            raise GeometryError("rotation matrix is not orthonormal within 1e-9")
        if abs(float(np.linalg.det(m)) - 1.0) > ORTHO_TOL:
            raise GeometryError("rotation matrix determinant is not +1 within 1e-9")
        object.__setattr__(self, "matrix", _readonly(m))

    def __setattr__(self, name, value):
        raise AttributeError("Rotation is immutable")

    @staticmethod
    def identity():
        return Rotation(np.eye(3))

    @staticmethod
    def from_axis_angle(axis, angle):
        axis = normalize(axis)
        return Rotation(_ScipyRotation.from_rotvec(axis * float(angle)).as_matrix())

    @staticmethod
    def from_rotvec(rv):
        return Rotation(_ScipyRotation.from_rotvec(as_vec3(rv)).as_matrix())

    def apply(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.matrix.T

    def inverse(self):
        return Rotation(self.matrix.T)

    def __matmul__(self, other):
        if isinstance(other, Rotation):
            return Rotation(self.matrix @ other.matrix)
        return NotImplemented

    def axis(self, name):
        """Column of the matrix: the rotated frame's x/y/z axis in the parent frame."""
        i = {"x": 0, "y": 1, "z": 2}[name.lower()]
        return self.matrix[:, i].copy()

    def angle_to(self, other):
        """Geodesic distance to another rotation, radians."""
        return vnorm(rotation_to_rotvec(Rotation(self.matrix.T @ other.matrix)))

    def __repr__(self):
        return f"Rotation({np.array2string(self.matrix, precision=6)})"

    def __eq__(self, other):
        return isinstance(other, Rotation) and np.array_equal(self.matrix, other.matrix)


class RigidTransform:
    """Rotation plus translation; the 4x4 homogeneous matrix has last row
    exactly (0,0,0,1) by construction.

    Optional frame tags (``src_frame``/``dst_frame``) enable mismatch checks;
    untagged transforms skip them.
    """

    __slots__ = ("rotation", "translation", "src_frame", "dst_frame")

    def __init__(self, rotation, translation, src_frame=None, dst_frame=None):
        if not isinstance(rotation, Rotation):
            rotation = Rotation(rotation)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", _readonly(as_vec3(translation)))
        object.__setattr__(self, "src_frame", src_frame)
        object.__setattr__(self, "dst_frame", dst_frame)

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    @staticmethod
    def identity(src_frame=None, dst_frame=None):
        return RigidTransform(Rotation.identity(), np.zeros(3), src_frame, dst_frame)

    @staticmethod
    def from_matrix(m, src_frame=None, dst_frame=None):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise GeometryError(f"homogeneous transform must be 4x4, got {m.shape}")
        if not np.array_equal(m[3], np.array([0.0, 0.0, 0.0, 1.0])):
            raise GeometryError("last homogeneous row must be exactly (0,0,0,1)")
        return RigidTransform(Rotation(m[:3, :3]), m[:3, 3], src_frame, dst_frame)

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m

    def apply(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.matrix.T + self.translation

    def __matmul__(self, other):
        """Composition: (self @ other) applies ``other`` first."""
        if isinstance(other, RigidTransform):
            if (self.src_frame is not None and other.dst_frame is not None
                    and self.src_frame != other.dst_frame):
                raise FrameMismatch(
                    f"cannot compose: {other.dst_frame!r} feeds {self.src_frame!r}")
            return RigidTransform(
                self.rotation @ other.rotation,
                self.rotation.apply(other.translation) + self.translation,
                src_frame=other.src_frame,
                dst_frame=self.dst_frame,
            )
        return NotImplemented

    def retag(self, src_frame=None, dst_frame=None):
        return RigidTransform(self.rotation, self.translation, src_frame, dst_frame)

    def __repr__(self):
        return (f"RigidTransform(t={np.array2string(self.translation, precision=6)}, "
                f"src={self.src_frame!r}, dst={self.dst_frame!r})")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside image bounds")


class PointCloud:
    """Ordered 3D points with an immutable frame tag."""

    __slots__ = ("points", "frame")

    def __init__(self, points, frame):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise GeometryError(f"point cloud must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point cloud has non-finite values")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "frame", str(frame))

    def __setattr__(self, name, value):
        raise AttributeError("PointCloud is immutable")

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"PointCloud(n={len(self)}, frame={self.frame!r})"


class PointMap:
    """Per-pixel world points (H, W, 3) plus a validity grid (H, W)."""

    __slots__ = ("points", "valid")

    def __init__(self, points, valid):
        pts = np.asarray(points, dtype=np.float64)
        val = np.asarray(valid, dtype=bool)
        if pts.ndim != 3 or pts.shape[2] != 3:
            raise GeometryError(f"point map must have shape (H, W, 3), got {pts.shape}")
        if val.shape != pts.shape[:2]:
            raise GeometryError("validity grid does not match point grid")
        object.__setattr__(self, "points", _readonly(pts))
        val = np.ascontiguousarray(val)
        val.setflags(write=False)
        object.__setattr__(self, "valid", val)

    def __setattr__(self, name, value):
        raise AttributeError("PointMap is immutable")

    @property
    def shape(self):
        return self.valid.shape


class DepthMap:
    """Per-pixel depths with validity; scale is 'relative' or 'metric'."""

    __slots__ = ("depth", "valid", "scale")

    def __init__(self, depth, valid, scale):
        d = np.asarray(depth, dtype=np.float64)
        v = np.asarray(valid, dtype=bool)
        if d.shape != v.shape or d.ndim != 2:
            raise GeometryError("depth and validity grids must share a 2D shape")
        if scale not in ("relative", "metric"):
            raise GeometryError(f"unknown depth scale {scale!r}")
        if np.any(d[v] <= 0):
            raise GeometryError("valid depths must be positive")
        object.__setattr__(self, "depth", _readonly(d))
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "valid", v)
        object.__setattr__(self, "scale", scale)

    def __setattr__(self, name, value):
        raise AttributeError("DepthMap is immutable")


class ReferenceFrame:
    """Origin plus a right-handed orthonormal basis, all in world coordinates.
    +z is forward, +y is down, +x completes the right-hand rule."""

    __slots__ = ("origin", "x_axis", "y_axis", "z_axis")

    def __init__(self, origin, x_axis, y_axis, z_axis):
        origin = as_vec3(origin)
        x, y, z = as_vec3(x_axis), as_vec3(y_axis), as_vec3(z_axis)
        for name, a in (("x", x), ("y", y), ("z", z)):
            if abs(float(np.linalg.norm(a)) - 1.0) > ORTHO_TOL:
                raise GeometryError(f"{name}_axis is not unit length within 1e-9")
        if (abs(float(np.dot(x, y))) > ORTHO_TOL or abs(float(np.dot(y, z))) > ORTHO_TOL
                or abs(float(np.dot(x, z))) > ORTHO_TOL):
            raise GeometryError("frame axes are not pairwise orthogonal within 1e-9")
        if np.max(np.abs(np.cross(x, y) - z)) > ORTHO_TOL:
            raise GeometryError("frame is not right-handed (cross(x, y) != z)")
        object.__setattr__(self, "origin", _readonly(origin))
        object.__setattr__(self, "x_axis", _readonly(x))
        object.__setattr__(self, "y_axis", _readonly(y))
        object.__setattr__(self, "z_axis", _readonly(z))

    def __setattr__(self, name, value):
        raise AttributeError("ReferenceFrame is immutable")

    def basis(self):
        """Rows are the x/y/z axes."""
        return np.stack([self.x_axis, self.y_axis, self.z_axis])

    def __repr__(self):
        return (f"ReferenceFrame(origin={np.array2string(self.origin, precision=4)}, "
                f"z={np.array2string(self.z_axis, precision=4)})")


class CardinalMap:
    """World-space unit vectors for the four cardinal directions."""

    __slots__ = ("north", "east", "south", "west")

    def __init__(self, north, east, south, west):
        n, e, s, w = (as_vec3(v) for v in (north, east, south, west))
        for name, a in (("north", n), ("east", e), ("south", s), ("west", w)):
            if abs(float(np.linalg.norm(a)) - 1.0) > ORTHO_TOL:
                raise GeometryError(f"{name} axis is not unit length within 1e-9")
        if np.max(np.abs(s + n)) > ORTHO_TOL or np.max(np.abs(w + e)) > ORTHO_TOL:
            raise GeometryError("south/west must oppose north/east within 1e-9")
        if abs(float(np.dot(n, e))) > ORTHO_TOL:
            raise GeometryError("north and east must be orthogonal within 1e-9")
        object.__setattr__(self, "north", _readonly(n))
        object.__setattr__(self, "east", _readonly(e))
        object.__setattr__(self, "south", _readonly(s))
        object.__setattr__(self, "west", _readonly(w))

    def __setattr__(self, name, value):
        raise AttributeError("CardinalMap is immutable")

    def axis(self, label):
        return {"N": self.north, "E": self.east, "S": self.south, "W": self.west}[label]


@dataclass(frozen=True)
class BBox2D:
    """Pixel-space box, always stored as [x1, y1, x2, y2] with x1 < x2, y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.x1 >= self.x2 or self.y1 >= self.y2:
            raise GeometryError(
                f"degenerate box [{self.x1}, {self.y1}, {self.x2}, {self.y2}]")

    @staticmethod
    def normalized(xa, ya, xb, yb):
        return BBox2D(min(xa, xb), min(ya, yb), max(xa, xb), max(ya, yb))

    def as_list(self):
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def center(self):
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def contains(self, u, v):
        return (self.x1 <= u <= self.x2) and (self.y1 <= v <= self.y2)


@dataclass(frozen=True)
class RelationLabels:
    """Qualitative placement of a point in a reference frame, one label per axis."""

    lateral: str    # left | right | centered
    vertical: str   # above | below | centered
    depth: str      # front | behind | centered
    local: tuple = field(repr=False, default=())


MOTION_LABELS = (
    "pan_right", "pan_left", "tilt_up", "tilt_down",
    "roll_clockwise", "roll_counterclockwise", "negligible",
)

CARDINAL_LABELS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")


# ---------------------------------------------------------------------------
# transforms

def transform_points(T, pts):
    """Map every point through ``R @ p + t``; the output carries T's destination
    frame tag when T is tagged."""
    if not isinstance(pts, PointCloud):
        raise GeometryError("transform_points expects a PointCloud")
    if T.src_frame is not None and pts.frame != T.src_frame:
        raise FrameMismatch(
            f"points are in frame {pts.frame!r}, transform expects {T.src_frame!r}")
    out_frame = T.dst_frame if T.dst_frame is not None else pts.frame
    return PointCloud(T.apply(pts.points), out_frame)


def invert_rigid(T):
    """Inverse transform: composition with the original is the identity."""
    rt = T.rotation.inverse()
    return RigidTransform(rt, -rt.apply(T.translation),
                          src_frame=T.dst_frame, dst_frame=T.src_frame)


def world_to_camera(E, pts):
    """Apply an extrinsic (world -> camera) to world points."""
    if pts.frame != WORLD:
        raise FrameMismatch(f"world_to_camera expects world points, got {pts.frame!r}")
    out_frame = E.dst_frame if E.dst_frame is not None else "camera"
    return PointCloud(E.apply(pts.points), out_frame)


def object_to_world(T_obj2world, pts_local):
    """Map object-local points into the world frame."""
    if T_obj2world.src_frame is not None and pts_local.frame != T_obj2world.src_frame:
        raise FrameMismatch(
            f"points are in frame {pts_local.frame!r}, "
            f"pose expects {T_obj2world.src_frame!r}")
    return PointCloud(T_obj2world.apply(pts_local.points), WORLD)


def relative_rotation(pose_i, pose_j):
    """Rotation taking pose_i's orientation to pose_j's: R_j @ R_i^T.

    Both arguments are camera poses (camera -> world). The result is a
    world-frame operator; see the module docstring for sign semantics.
    """
    ri = pose_i.rotation if isinstance(pose_i, RigidTransform) else pose_i
    rj = pose_j.rotation if isinstance(pose_j, RigidTransform) else pose_j
    return Rotation(rj.matrix @ ri.matrix.T)


# ---------------------------------------------------------------------------
# rotation analysis

def rotation_to_rotvec(R):
    """Axis-angle vector of a rotation; magnitude is the angle in [0, pi].

    At exactly pi the axis sign is ambiguous; it is fixed so that the first
    non-zero component is positive.
    """
    rv = _ScipyRotation.from_matrix(R.matrix).as_rotvec()
    angle = float(np.linalg.norm(rv))
    if abs(angle - math.pi) < 1e-12 and angle > 0:
        axis = rv / angle
        for c in axis:
            if abs(c) > 1e-12:
                if c < 0:
                    rv = -rv
                break
    return rv


def classify_primary_rotation(rv):
    """Label the dominant rotation component of an axis-angle vector.

    ry > 0 is a pan to the right, rx > 0 a tilt upward, rz > 0 a clockwise
    roll; negative signs give the opposite labels. Magnitudes below
    ANGLE_EPSILON are "negligible". Components equal within 1e-12 break ties
    with priority y > x > z.
    """
    rv = as_vec3(rv)
    if float(np.linalg.norm(rv)) <= ANGLE_EPSILON:
        return "negligible"
    mags = np.abs(rv)
    # tie-break priority y, then x, then z when magnitudes match within 1e-12
    best = None
    for ax in ("y", "x", "z"):
        m = mags["xyz".index(ax)]
        if best is None or m > mags["xyz".index(best)] + 1e-12:
            best = ax
    value = rv["xyz".index(best)]
    if best == "y":
        return "pan_right" if value > 0 else "pan_left"
    if best == "x":
        return "tilt_up" if value > 0 else "tilt_down"
    return "roll_clockwise" if value > 0 else "roll_counterclockwise"


def rotation_to_euler(R, order):
    """Decompose into three intrinsic elemental rotations along ``order``
    (a permutation of "xyz"). Gimbal lock is reported via GimbalLockWarning
    and the third angle is fixed to 0 (scipy's convention)."""
    order = order.lower()
    if sorted(order) != ["x", "y", "z"]:
        raise GeometryError(f"euler order must be a permutation of xyz, got {order!r}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        angles = _ScipyRotation.from_matrix(R.matrix).as_euler(order.upper())
    for w in caught:
        if "Gimbal lock" in str(w.message):
            warnings.warn("gimbal lock: third angle fixed to 0", GimbalLockWarning,
                          stacklevel=2)
    return np.asarray(angles, dtype=np.float64)


# ---------------------------------------------------------------------------
# cardinal directions

_CARDINAL_NEXT = {"S": "W", "W": "N", "N": "E", "E": "S"}


def derive_cardinal_axes(known_label, known_axis, y_ref):
    """Complete a cardinal map from one known cardinal axis and the down
    direction, via the cross-product chain S->W->N->E->S.

    The known axis is re-orthogonalized against y_ref first; an axis parallel
    to y_ref is rejected.
    """
    if known_label not in ("N", "E", "S", "W"):
        raise GeometryError(f"unknown cardinal label {known_label!r}")
    y = normalize(y_ref)
    k = as_vec3(known_axis)
    if float(np.linalg.norm(k)) < 1e-15:
        raise DegenerateInput("known cardinal axis is zero")
    horizontal = k - np.dot(k, y) * y
    if float(np.linalg.norm(horizontal)) < 1e-9 * float(np.linalg.norm(k)):
        raise DegenerateInput("known cardinal axis is parallel to the down direction")
    axes = {known_label: normalize(horizontal)}
    label = known_label
    for _ in range(3):
        nxt = _CARDINAL_NEXT[label]
        axes[nxt] = normalize(np.cross(y, axes[label]))
        label = nxt
    return CardinalMap(axes["N"], axes["E"], axes["S"], axes["W"])


def classify_cardinal(disp, cmap, margin_rel=CARDINAL_MARGIN):
    """Eight-wind label for a displacement, from the signs of its projections
    onto north and east.

    A projection smaller than ``margin_rel`` times the horizontal magnitude
    collapses to the pure axis label; with the default margin the sectors are
    the standard 45-degree winds. A displacement with no horizontal component
    is "indeterminate".
    """
    d = as_vec3(disp)
    pn = float(np.dot(d, cmap.north))
    pe = float(np.dot(d, cmap.east))
    h = math.hypot(pn, pe)
    if h < 1e-12:
        return "indeterminate"
    if abs(pe) <= margin_rel * h:
        return "N" if pn > 0 else "S"
    if abs(pn) <= margin_rel * h:
        return "E" if pe > 0 else "W"
    if pn > 0:
        return "NE" if pe > 0 else "NW"
    return "SE" if pe > 0 else "SW"


# ---------------------------------------------------------------------------
# aggregation and registration

def centroid(pts):
    """Arithmetic mean of a non-empty point cloud (or (N,3) array)."""
    arr = pts.points if isinstance(pts, PointCloud) else np.asarray(pts, dtype=np.float64)
    if arr.size == 0:
        raise EmptySelection("centroid of an empty point cloud")
    return arr.mean(axis=0)


def umeyama_align(src, dst, with_scale=True):
    """Least-squares similarity transform: minimizes sum ||dst - s*R*src - t||^2.

    Returns (RigidTransform, scale). Requires >= 3 index-corresponded,
    non-collinear point pairs; the rotation always has det +1.
    """
    a = src.points if isinstance(src, PointCloud) else np.asarray(src, dtype=np.float64)
    b = dst.points if isinstance(dst, PointCloud) else np.asarray(dst, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError("source and destination clouds must correspond 1:1")
    n = a.shape[0]
    if n < 3:
        raise DegenerateInput(f"need at least 3 point pairs, got {n}")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    da = a - mu_a
    db = b - mu_b
    var_a = float((da ** 2).sum()) / n
    if var_a < 1e-24:
        raise DegenerateInput("source points are coincident")
    cov = db.T @ da / n
    u, d, vt = np.linalg.svd(cov)
    if d[1] < 1e-12 * max(d[0], 1e-300):
        raise DegenerateInput("point configuration is collinear or degenerate")
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    r = Rotation(u @ s @ vt)
    scale = float((d * np.diag(s)).sum() / var_a) if with_scale else 1.0
    if scale <= 0:
        raise DegenerateInput("recovered a non-positive scale")
    t = mu_b - scale * r.apply(mu_a)
    return RigidTransform(r, t), scale


def estimate_scale_factor(metric, relative, mask=None):
    """Robust single scale factor converting a relative-depth map to meters:
    the median of per-pixel metric/relative ratios over jointly valid pixels."""
    joint = metric.valid & relative.valid
    if mask is not None:
        joint = joint & np.asarray(mask, dtype=bool)
    joint = joint & (relative.depth > DEPTH_EPSILON)
    if not np.any(joint):
        raise EmptySelection("no jointly valid pixels for scale estimation")
    ratio = float(np.median(metric.depth[joint] / relative.depth[joint]))
    if ratio <= 0:
        raise DegenerateInput("scale factor must be positive")
    return ratio


# ---------------------------------------------------------------------------
# reference frames

def build_reference_frame(origin, forward, down):
    """Construct an OpenCV-convention frame: z along ``forward``, y along the
    part of ``down`` orthogonal to z, x = cross(y, z)."""
    z = normalize(forward)
    d = as_vec3(down)
    residual = d - np.dot(d, z) * z
    if float(np.linalg.norm(residual)) < 1e-9 * max(float(np.linalg.norm(d)), 1e-300):
        raise DegenerateInput("forward direction is parallel to the down direction")
    y = normalize(residual)
    x = np.cross(y, z)
    return ReferenceFrame(as_vec3(origin), x, y, z)


def express_in_frame(frame, v, kind="point"):
    """Coordinates of a world-frame point or direction in a reference frame."""
    v = as_vec3(v)
    if kind == "point":
        v = v - frame.origin
    elif kind != "direction":
        raise GeometryError(f"kind must be 'point' or 'direction', got {kind!r}")
    return frame.basis() @ v


def qualitative_relation(frame, target, eps=0.0):
    """Sign-based placement labels for a world point relative to a frame.

    x > +eps is right, z > +eps is front, and with +y pointing down,
    y < -eps is above. Coordinates within eps of zero are "centered".
    """
    local = express_in_frame(frame, target, "point")
    x, y, z = (float(c) for c in local)
    lateral = "right" if x > eps else ("left" if x < -eps else "centered")
    vertical = "above" if y < -eps else ("below" if y > eps else "centered")
    depth = "front" if z > eps else ("behind" if z < -eps else "centered")
    return RelationLabels(lateral, vertical, depth, local=tuple(local))


# ---------------------------------------------------------------------------
# projection

def pinhole_project(K, E, pts):
    """Project world points through an extrinsic + pinhole intrinsics.

    Returns (pixels (N,2), depths (N,), in_frustum (N,)). Points at or behind
    the camera get NaN pixels and an unset flag.
    """
    cloud = pts.points if isinstance(pts, PointCloud) else np.asarray(pts, dtype=np.float64)
    cam = E.apply(cloud)
    z = cam[:, 2]
    ok = z > DEPTH_EPSILON
    pixels = np.full((cloud.shape[0], 2), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * cam[:, 0] / z + K.cx
        v = K.fy * cam[:, 1] / z + K.cy
    pixels[ok, 0] = u[ok]
    pixels[ok, 1] = v[ok]
    in_frustum = ok & (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)
    return pixels, z, in_frustum


def points_in_box(pm, box):
    """All valid point-map cells whose pixel coordinates fall inside the box."""
    h, w = pm.shape
    if box.x2 < 0 or box.y2 < 0 or box.x1 > w - 1 or box.y1 > h - 1:
        raise EmptySelection("box does not intersect the image")
    vv, uu = np.mgrid[0:h, 0:w]
    sel = pm.valid & (uu >= box.x1) & (uu <= box.x2) & (vv >= box.y1) & (vv <= box.y2)
    if not np.any(sel):
        raise EmptySelection("no valid points inside the box")
    return PointCloud(pm.points[sel], WORLD)


# ---------------------------------------------------------------------------
# counting

def dedup_count(centroids, tau=0.25):
    """Number of connected components under single-linkage with radius tau."""
    if tau <= 0:
        raise GeometryError("tau must be positive")
    pts = [as_vec3(c) for c in centroids]
    n = len(pts)
    if n == 0:
        return 0
    arr = np.stack(pts)
    d = np.linalg.norm(arr[:, None, :] - arr[None, :, :], axis=2)
    adj = d <= tau
    seen = np.zeros(n, dtype=bool)
    count = 0
    for start in range(n):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            for j in np.nonzero(adj[i] & ~seen)[0]:
                seen[j] = True
                stack.append(int(j))
    return count
