"""Ground-truth scene oracle behind the tool APIs.

Reconstruction rasterizes box-face surface samples into per-pixel point maps.
Samples are generated in centrally-symmetric pairs and each pair is kept or
dropped atomically, so the surviving samples of every object always average
to its exact centroid; this is what makes noise-free tool outputs mutually
consistent to floating-point precision.

Noise draws derive from (seed, api name, per-api call index), so a fixed call
sequence reproduces exactly regardless of thread interleaving elsewhere.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass

import numpy as np

from . import geocalc, geometry as geo
from .scene import NoiseConfig, SceneSpec, format_camera_ref, parse_camera_ref
from .toolbox import ReconstructionContext, ToolError

DEFAULT_FACE_SAMPLES = 32
MOTION_FACE_SAMPLES = 8
STATIC_FLOW_EPS = 0.5  # px

FAULTS = ("corrupt_reconstruction", "corrupt_pose", "drop_detections",
          "break_formalizer", "break_coder")


def box_face_sample_pairs(extents, k):
    """Surface samples on all six faces of a box, plus an index array pairing
    each sample with its mirror through the center."""
    e = geo.as_vec3(extents)
    offsets = [(2 * i + 1) / k - 1.0 for i in range(k)]  # symmetric in (-1, 1)
    samples = []
    pairs = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        base = len(samples)
        for sign in (1.0, -1.0):
            for i in range(k):
                for j in range(k):
                    p = np.zeros(3)
                    p[axis] = sign * e[axis]
                    p[others[0]] = offsets[i] * e[others[0]]
                    p[others[1]] = offsets[j] * e[others[1]]
                    samples.append(p)
        # sample (i, j) on the +face mirrors (k-1-i, k-1-j) on the -face
        for i in range(k):
            for j in range(k):
                plus = base + i * k + j
                minus = base + k * k + (k - 1 - i) * k + (k - 1 - j)
                pairs.append((plus, minus))
    return np.asarray(samples), np.asarray(pairs, dtype=int)


@dataclass(frozen=True)
class RenderedView:
    """Noise-free rasterization of a scene into one camera."""

    points: np.ndarray   # (H, W, 3) scene-world coordinates
    valid: np.ndarray    # (H, W) bool
    ids: np.ndarray      # (H, W) object index in scene order, -1 where empty
    depth: np.ndarray    # (H, W) camera-frame z


def _segment_hits_box(p0, p1, pose, extents):
    """True where the open segment p0->p1[i] crosses the oriented box."""
    inv = geo.invert_rigid(pose)
    q0 = inv.apply(p0)
    q1 = inv.apply(p1)
    d = q1 - q0
    eps = 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-extents - q0) / d
        t2 = (extents - q0) / d
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    # parallel-axis handling: if d ~ 0 on an axis outside the slab, no hit
    parallel = np.abs(d) < 1e-15
    outside = parallel & ((q0 < -extents) | (q0 > extents))
    lo = np.where(parallel, -np.inf, lo)
    hi = np.where(parallel, np.inf, hi)
    tmin = lo.max(axis=-1)
    tmax = hi.min(axis=-1)
    hit = (tmax >= tmin) & (tmax > eps) & (tmin < 1.0 - 1e-6)
    return hit & ~outside.any(axis=-1)


def render_view(spec, camera_index, face_samples=DEFAULT_FACE_SAMPLES,
                occlusion=False):
    """Rasterize every object's paired surface samples into the camera grid.

    Cells already occupied reject the whole pair; with occlusion enabled a
    pair also needs both samples unoccluded along their camera rays.
    """
    if not (0 <= camera_index < len(spec.cameras)):
        raise ToolError(f"unknown camera {camera_index}", api="reconstruct")
    cam = spec.cameras[camera_index]
    K, E = cam.intrinsics, cam.extrinsic
    h, w = K.height, K.width
    points = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)
    ids = np.full((h, w), -1, dtype=np.int32)
    depth = np.zeros((h, w))
    cam_center = cam.pose.translation

    for oi, obj in enumerate(spec.objects):
        local, pairs = box_face_sample_pairs(obj.extents, face_samples)
        world = obj.pose.apply(local)
        pix, z, in_frustum = geo.pinhole_project(K, E, world)
        u = np.full(len(world), -1, dtype=int)
        v = np.full(len(world), -1, dtype=int)
        u[in_frustum] = np.rint(pix[in_frustum, 0]).astype(int)
        v[in_frustum] = np.rint(pix[in_frustum, 1]).astype(int)
        ok = in_frustum & (u >= 0) & (u < w) & (v >= 0) & (v < h)
        if occlusion:
            blocked = np.zeros(len(world), dtype=bool)
            for oj, other in enumerate(spec.objects):
                if oj == oi:
                    continue
                blocked |= _segment_hits_box(cam_center, world, other.pose,
                                             other.extents)
            ok &= ~blocked
        for a, b in pairs:
            if not (ok[a] and ok[b]):
                continue
            ca, cb = (v[a], u[a]), (v[b], u[b])
            if ca == cb or valid[ca] or valid[cb]:
                continue
            for idx, cell in ((a, ca), (b, cb)):
                points[cell] = world[idx]
                valid[cell] = True
                ids[cell] = oi
                depth[cell] = z[idx]
    return RenderedView(points, valid, ids, depth)


@dataclass(frozen=True)
class _Similarity:
    """Maps one episode's world into context coordinates: p -> a*R@p + tau."""

    alpha: float
    rot: geo.Rotation
    tau: np.ndarray

    def apply(self, pts):
        return self.alpha * (np.asarray(pts) @ self.rot.matrix.T) + self.tau


class SyntheticBackend:
    """The eight tool APIs computed exactly from one or more SceneSpec
    episodes, with optional seeded noise and a single optional fault."""

    def __init__(self, scenes, noise=None, occlusion=False,
                 reconstruction_scale=1.0, face_samples=DEFAULT_FACE_SAMPLES,
                 fault=None):
        if isinstance(scenes, SceneSpec):
            scenes = [scenes]
        if not scenes:
            raise ToolError("backend needs at least one scene episode")
        if fault is not None and fault not in FAULTS:
            raise ToolError(f"unknown fault {fault!r}")
        if reconstruction_scale <= 0:
            raise ToolError("reconstruction_scale must be positive")
        self.scenes = list(scenes)
        self.noise = noise or NoiseConfig()
        self.occlusion = occlusion
        self.reconstruction_scale = reconstruction_scale
        self.face_samples = face_samples
        self.fault = fault
        self._render_cache = {}
        self._counters = {}
        self._lock = threading.Lock()

    # -- deterministic per-call randomness --------------------------------

    def _rng(self, api):
        with self._lock:
            index = self._counters.get(api, 0)
            self._counters[api] = index + 1
        material = f"{self.noise.seed}:{api}:{index}".encode()
        seed = int.from_bytes(hashlib.sha256(material).digest()[:8], "big")
        return np.random.default_rng(seed)

    # -- scene access ------------------------------------------------------

    def _scene(self, episode):
        if not (0 <= episode < len(self.scenes)):
            raise ToolError(f"unknown episode {episode}")
        return self.scenes[episode]

    def _camera(self, ref):
        episode, cam = parse_camera_ref(ref)
        spec = self._scene(episode)
        if not (0 <= cam < len(spec.cameras)):
            raise ToolError(f"unknown camera {format_camera_ref(episode, cam)!r}")
        return episode, cam, spec

    def _view(self, episode, cam):
        key = (episode, cam, self.face_samples, self.occlusion)
        with self._lock:
            view = self._render_cache.get(key)
        if view is None:
            view = render_view(self._scene(episode), cam, self.face_samples,
                               self.occlusion)
            with self._lock:
                self._render_cache[key] = view
        return view

    def entity_names(self):
        names = []
        for spec in self.scenes:
            for obj in spec.objects:
                if obj.object_id not in names:
                    names.append(obj.object_id)
        return names

    def n_cameras(self):
        return max(len(s.cameras) for s in self.scenes)

    # -- the eight tool APIs ------------------------------------------------

    def reconstruct(self, image_refs):
        if not image_refs:
            raise ToolError("reconstruct needs at least one image", api="reconstruct")
        refs = [parse_camera_ref(r) for r in image_refs]
        for ep, cam in refs:
            self._camera((ep, cam))
        base_ep = refs[0][0]
        sims = self._episode_similarities(refs, base_ep)

        rng = self._rng("reconstruct")
        perturbed = False
        faulted = False
        point_maps, extrinsics, intrinsics = [], [], []
        for ep, cam_i in refs:
            spec = self._scene(ep)
            cam = spec.cameras[cam_i]
            view = self._view(ep, cam_i)
            sim = sims[ep]
            pts = sim.apply(view.points.reshape(-1, 3)).reshape(view.points.shape)
            rot_ctx = cam.extrinsic.rotation @ sim.rot.inverse()
            t_ctx = sim.alpha * cam.extrinsic.translation - rot_ctx.apply(sim.tau)
            e_ctx = geo.RigidTransform(rot_ctx, t_ctx)
            center_ctx = geo.invert_rigid(e_ctx).translation
            if self.fault == "corrupt_reconstruction":
                spin = geo.Rotation.from_axis_angle(
                    [0, 1, 0], rng.uniform(math.pi / 2, math.pi))
                flat = pts.reshape(-1, 3) - center_ctx
                pts = (spin.apply(flat) + center_ctx).reshape(pts.shape)
                faulted = True
            if self.noise.depth_noise_rel > 0:
                gains = 1.0 + self.noise.depth_noise_rel * rng.standard_normal(
                    view.valid.shape)
                flat = pts.reshape(-1, 3) - center_ctx
                pts = (flat * gains.reshape(-1, 1) + center_ctx).reshape(pts.shape)
                perturbed = True
            safe = np.where(view.valid[..., None], pts, 0.0)
            point_maps.append(geo.PointMap(safe, view.valid))
            extrinsics.append(e_ctx)
            intrinsics.append(cam.intrinsics)

        ctx = ReconstructionContext(
            point_maps=tuple(point_maps),
            extrinsics=tuple(extrinsics),
            intrinsics=tuple(intrinsics),
            scale="relative",
            meta={
                "refs": [format_camera_ref(ep, c) for ep, c in refs],
                "sims": sims,
                "base_episode": base_ep,
                "backend": "synthetic",
            },
        )
        return ctx, {"perturbed": perturbed, "faulted": faulted}

    def _episode_similarities(self, refs, base_ep):
        anchor = self._scene(base_ep).cameras[refs[0][1]].extrinsic
        s = self.reconstruction_scale
        base = _Similarity(1.0 / s, anchor.rotation, anchor.translation / s)
        sims = {base_ep: base}
        base_scene = self._scene(base_ep)
        base_ids = {o.object_id: o for o in base_scene.objects if o.static}
        for ep, _ in refs:
            if ep in sims:
                continue
            spec = self._scene(ep)
            shared = [o for o in spec.objects if o.static and o.object_id in base_ids]
            if len(shared) < 3:
                raise ToolError(
                    f"cross-episode alignment needs at least 3 shared static "
                    f"objects, found {len(shared)}", api="reconstruct")
            src = np.stack([o.centroid for o in shared])
            dst = np.stack([base_ids[o.object_id].centroid for o in shared])
            try:
                T, s_k = geo.umeyama_align(src, dst)
            except geo.GeometryError as err:
                raise ToolError(f"cross-episode alignment failed: {err}",
                                api="reconstruct") from err
            sims[ep] = _Similarity(
                base.alpha * s_k,
                base.rot @ T.rotation,
                base.alpha * base.rot.apply(T.translation) + base.tau,
            )
        return sims

    def detect(self, camera_ref, prompt):
        episode, cam_i, spec = self._camera(camera_ref)
        cam = spec.cameras[cam_i]
        rng = self._rng("detect")
        wanted = str(prompt).strip().lower()
        faulted = False
        perturbed = False
        detections = []
        for oi, obj in enumerate(spec.objects):
            if obj.class_label.lower() != wanted:
                continue
            box = self._project_bbox(cam, obj)
            if box is None:
                continue
            if self.occlusion and not np.any(self._view(episode, cam_i).ids == oi):
                continue
            if self.fault == "drop_detections":
                faulted = True
                continue
            if self.noise.detection_dropout > 0:
                if rng.random() < self.noise.detection_dropout:
                    perturbed = True
                    continue
            detections.append((box, obj.class_label))
        return detections, {"perturbed": perturbed, "faulted": faulted}

    def _project_bbox(self, cam, obj):
        pix, z, in_frustum = geo.pinhole_project(cam.intrinsics, cam.extrinsic,
                                                 obj.corners())
        if not np.any(in_frustum):
            return None
        front = z > geo.DEPTH_EPSILON
        u = pix[front, 0]
        v = pix[front, 1]
        x1 = float(np.clip(u.min(), 0, cam.intrinsics.width - 1))
        x2 = float(np.clip(u.max(), 0, cam.intrinsics.width - 1))
        y1 = float(np.clip(v.min(), 0, cam.intrinsics.height - 1))
        y2 = float(np.clip(v.max(), 0, cam.intrinsics.height - 1))
        if x1 >= x2 or y1 >= y2:
            return None
        return geo.BBox2D(x1, y1, x2, y2)

    def project_box(self, ctx, camera_ref, box):
        idx = ctx.ref_index(camera_ref)
        cloud = geo.points_in_box(ctx.point_maps[idx], box)
        perturbed = False
        if self.noise.centroid_sigma_rel > 0:
            base_ep = ctx.meta.get("base_episode", 0)
            sim = ctx.meta["sims"][base_ep]
            sigma = (self.noise.centroid_sigma_rel
                     * self._scene(base_ep).scene_scale * sim.alpha)
            offset = self._rng("project_box_to_3d_points").normal(0.0, sigma, 3)
            cloud = geo.PointCloud(cloud.points + offset, cloud.frame)
            perturbed = True
        return cloud, {"perturbed": perturbed, "faulted": False}

    def predict_obj_pose(self, ctx, camera_ref, box=None, object_ref=None):
        episode, cam_i, spec = self._camera(camera_ref)
        if "sims" not in ctx.meta or episode not in ctx.meta["sims"]:
            raise ToolError("context does not cover this camera's episode",
                            api="predict_obj_pose")
        if object_ref is not None:
            obj = spec.object_by_id(object_ref)
        elif box is not None:
            obj = self._majority_object(episode, cam_i, spec, box)
        else:
            raise ToolError("predict_obj_pose needs a box or an object id",
                            api="predict_obj_pose")
        sim = ctx.meta["sims"][episode]
        rot = sim.rot @ obj.pose.rotation
        t = sim.apply(obj.pose.translation[None, :])[0]
        rng = self._rng("predict_obj_pose")
        perturbed = False
        faulted = False
        if self.fault == "corrupt_pose":
            axis = rng.standard_normal(3)
            spin = geo.Rotation.from_axis_angle(axis, rng.uniform(math.pi / 2, math.pi))
            rot = spin @ rot
            faulted = True
        if self.noise.pose_rotation_sigma > 0:
            axis = rng.standard_normal(3)
            angle = rng.normal(0.0, self.noise.pose_rotation_sigma)
            if abs(angle) > 0:
                rot = geo.Rotation.from_axis_angle(axis, angle) @ rot
            perturbed = True
        if self.noise.centroid_sigma_rel > 0:
            sigma = self.noise.centroid_sigma_rel * spec.scene_scale * sim.alpha
            t = t + rng.normal(0.0, sigma, 3)
            perturbed = True
        pose = geo.RigidTransform(rot, t, src_frame=geo.object_frame(obj.object_id),
                                  dst_frame=geo.WORLD)
        return pose, {"perturbed": perturbed, "faulted": faulted,
                      "object_id": obj.object_id}

    def _majority_object(self, episode, cam_i, spec, box):
        view = self._view(episode, cam_i)
        h, w = view.valid.shape
        if box.x2 < 0 or box.y2 < 0 or box.x1 > w - 1 or box.y1 > h - 1:
            raise ToolError("box does not intersect the image", api="predict_obj_pose")
        vv, uu = np.mgrid[0:h, 0:w]
        sel = (view.valid & (uu >= box.x1) & (uu <= box.x2)
               & (vv >= box.y1) & (vv <= box.y2))
        ids = view.ids[sel]
        ids = ids[ids >= 0]
        if ids.size == 0:
            raise ToolError("box selects no object", api="predict_obj_pose")
        counts = np.bincount(ids, minlength=len(spec.objects))
        order = np.argsort(-counts)
        if len(order) > 1 and counts[order[0]] == counts[order[1]]:
            raise ToolError("ambiguous box: two objects tie for majority",
                            api="predict_obj_pose")
        return spec.objects[int(order[0])]

    def estimate_scale(self, ctx, camera_ref):
        episode, cam_i, _ = self._camera(camera_ref)
        idx = ctx.ref_index(camera_ref)
        view = self._view(episode, cam_i)
        pm = ctx.point_maps[idx]
        e_ctx = ctx.extrinsics[idx]
        cam_pts = e_ctx.apply(pm.points.reshape(-1, 3)).reshape(pm.points.shape)
        rel_depth = cam_pts[..., 2]
        rel_valid = pm.valid & (rel_depth > geo.DEPTH_EPSILON)
        relative = geo.DepthMap(np.where(rel_valid, rel_depth, 1.0), rel_valid,
                                "relative")
        met_valid = view.valid & (view.depth > geo.DEPTH_EPSILON)
        metric = geo.DepthMap(np.where(met_valid, view.depth, 1.0), met_valid,
                              "metric")
        try:
            factor = geo.estimate_scale_factor(metric, relative)
        except geo.GeometryError as err:
            raise ToolError(f"estimate_scale: {err}", api="estimate_scale") from err
        return factor, {"perturbed": self.noise.depth_noise_rel > 0, "faulted": False}

    def ocr(self, camera_ref):
        episode, cam_i, spec = self._camera(camera_ref)
        cam = spec.cameras[cam_i]
        found = []
        for oi, obj in enumerate(spec.objects):
            if not obj.text_label:
                continue
            box = self._project_bbox(cam, obj)
            if box is None:
                continue
            if self.occlusion and not np.any(self._view(episode, cam_i).ids == oi):
                continue
            found.append((obj.text_label, box))
        found.sort(key=lambda item: item[1].x1)
        return found, {"perturbed": False, "faulted": False}

    def analyze_motion(self, camera_ref_a, camera_ref_b):
        ep_a, cam_a, spec_a = self._camera(camera_ref_a)
        ep_b, cam_b, spec_b = self._camera(camera_ref_b)
        ids_b = {o.object_id: o for o in spec_b.objects}
        flows = []
        for obj_a in spec_a.objects:
            obj_b = ids_b.get(obj_a.object_id)
            if obj_b is None:
                continue
            local, _ = box_face_sample_pairs(obj_a.extents, MOTION_FACE_SAMPLES)
            world_a = obj_a.pose.apply(local)
            world_b = obj_b.pose.apply(local)
            cam_spec_a = spec_a.cameras[cam_a]
            cam_spec_b = spec_b.cameras[cam_b]
            pa, _, ok_a = geo.pinhole_project(cam_spec_a.intrinsics,
                                              cam_spec_a.extrinsic, world_a)
            pb, _, ok_b = geo.pinhole_project(cam_spec_b.intrinsics,
                                              cam_spec_b.extrinsic, world_b)
            ok = ok_a & ok_b
            if np.any(ok):
                flows.append(pb[ok] - pa[ok])
        if not flows:
            raise ToolError("no shared visible geometry between the two views",
                            api="analyze_motion")
        flow = np.vstack(flows)
        mean = flow.mean(axis=0)
        du, dv = float(mean[0]), float(mean[1])
        if math.hypot(du, dv) < STATIC_FLOW_EPS:
            label = "static"
        elif abs(du) >= abs(dv):
            label = "right" if du > 0 else "left"
        else:
            label = "down" if dv > 0 else "up"
        payload = {"mean_du": du, "mean_dv": dv, "label": label}
        return payload, {"perturbed": False, "faulted": False}

    def code(self, program, context, tags):
        docs = geocalc.retrieve_knowledge(tags)
        try:
            parsed = geocalc.parse_program(program)
            value = geocalc.evaluate(parsed, context)
        except geocalc.GeocalcError as err:
            raise ToolError(f"Geocalc: {err}", api="code") from err
        return value, {"perturbed": False, "faulted": False,
                       "knowledge": [d.name for d in docs]}
