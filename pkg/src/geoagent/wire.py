"""Wire protocol for remote tool execution.

Requests POST to ``/v1/tool`` as ``{"api", "args", "request_id"}``; responses
are ``{"status": "ok"|"error", "payload", "message"}``. Tool payloads are
``{"value": <encoded result>, "meta": <flags>}``; every geometric value is a
tagged JSON object (see docs/wire_protocol.md for the bit-exact schemas).

Reconstruction contexts are held server-side and referenced by id in later
calls, so point maps cross the wire once.
"""

from __future__ import annotations

import uuid

import numpy as np

from . import geometry as geo
from .toolbox import ReconstructionContext, ToolError, dispatch_backend


class WireError(ValueError):
    """Payload violates the wire schema."""


class ContextRef:
    """Client-side handle to a context held by the server."""

    def __init__(self, context_id):
        self.context_id = context_id


# ---------------------------------------------------------------------------
# value encoding

def encode_value(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, ContextRef):
        return {"_type": "context_ref", "id": v.context_id}
    if isinstance(v, float):
        if v != v or v in (float("inf"), float("-inf")):
            raise WireError("non-finite scalar cannot cross the wire")
        return v
    if isinstance(v, np.ndarray) and v.shape == (3,):
        return {"_type": "vec3", "data": [float(x) for x in v]}
    if isinstance(v, geo.Rotation):
        return {"_type": "rotation", "matrix": [float(x) for x in v.matrix.reshape(-1)]}
    if isinstance(v, geo.RigidTransform):
        return {"_type": "transform",
                "matrix": [float(x) for x in v.matrix().reshape(-1)],
                "src": v.src_frame, "dst": v.dst_frame}
    if isinstance(v, geo.CameraIntrinsics):
        return {"_type": "intrinsics", "fx": v.fx, "fy": v.fy, "cx": v.cx,
                "cy": v.cy, "width": v.width, "height": v.height}
    if isinstance(v, geo.PointCloud):
        return {"_type": "point_cloud", "frame": v.frame,
                "points": [[float(c) for c in p] for p in v.points]}
    if isinstance(v, geo.PointMap):
        h, w = v.shape
        return {"_type": "point_map", "height": h, "width": w,
                "points": [float(x) for x in v.points.reshape(-1)],
                "valid": [int(x) for x in v.valid.reshape(-1)]}
    if isinstance(v, geo.BBox2D):
        return {"_type": "bbox", "data": v.as_list()}
    if isinstance(v, geo.CardinalMap):
        return {"_type": "cardinal_map",
                **{k: [float(x) for x in getattr(v, name)]
                   for k, name in (("north", "north"), ("east", "east"),
                                   ("south", "south"), ("west", "west"))}}
    if isinstance(v, geo.ReferenceFrame):
        return {"_type": "frame",
                "origin": [float(x) for x in v.origin],
                "x_axis": [float(x) for x in v.x_axis],
                "y_axis": [float(x) for x in v.y_axis],
                "z_axis": [float(x) for x in v.z_axis]}
    if isinstance(v, ReconstructionContext):
        return {"_type": "reconstruction",
                "point_maps": [encode_value(pm) for pm in v.point_maps],
                "extrinsics": [encode_value(e) for e in v.extrinsics],
                "intrinsics": [encode_value(k) for k in v.intrinsics],
                "scale": v.scale,
                "refs": list(v.meta.get("refs", [])),
                "context_id": v.meta.get("context_id")}
    if isinstance(v, (list, tuple)):
        return {"_type": "list", "items": [encode_value(x) for x in v]}
    if isinstance(v, dict):
        return {"_type": "record",
                "fields": {str(k): encode_value(x) for k, x in v.items()}}
    raise WireError(f"cannot encode {type(v).__name__} for the wire")


def decode_value(v, context_store=None):
    if v is None or isinstance(v, (bool, int, float, str)):
        return v
    if isinstance(v, list):
        raise WireError("bare JSON arrays are not valid wire values; use a list tag")
    if not isinstance(v, dict) or "_type" not in v:
        raise WireError(f"malformed wire value: {v!r}")
    t = v["_type"]
    try:
        if t == "vec3":
            return geo.as_vec3(v["data"])
        if t == "rotation":
            return geo.Rotation(np.reshape(v["matrix"], (3, 3)))
        if t == "transform":
            return geo.RigidTransform.from_matrix(
                np.reshape(v["matrix"], (4, 4)), src_frame=v.get("src"),
                dst_frame=v.get("dst"))
        if t == "intrinsics":
            return geo.CameraIntrinsics(v["fx"], v["fy"], v["cx"], v["cy"],
                                        v["width"], v["height"])
        if t == "point_cloud":
            return geo.PointCloud(np.asarray(v["points"], float).reshape(-1, 3),
                                  v["frame"])
        if t == "point_map":
            h, w = v["height"], v["width"]
            return geo.PointMap(np.reshape(v["points"], (h, w, 3)),
                                np.reshape(v["valid"], (h, w)).astype(bool))
        if t == "bbox":
            return geo.BBox2D(*v["data"])
        if t == "cardinal_map":
            return geo.CardinalMap(v["north"], v["east"], v["south"], v["west"])
        if t == "frame":
            return geo.ReferenceFrame(v["origin"], v["x_axis"], v["y_axis"],
                                      v["z_axis"])
        if t == "reconstruction":
            return ReconstructionContext(
                point_maps=tuple(decode_value(pm) for pm in v["point_maps"]),
                extrinsics=tuple(decode_value(e) for e in v["extrinsics"]),
                intrinsics=tuple(decode_value(k) for k in v["intrinsics"]),
                scale=v["scale"],
                meta={"refs": list(v.get("refs", [])),
                      "context_id": v.get("context_id")})
        if t == "context_ref":
            if context_store is None or v["id"] not in context_store:
                raise WireError(f"unknown context id {v.get('id')!r}")
            return context_store[v["id"]]
        if t == "list":
            return [decode_value(x, context_store) for x in v["items"]]
        if t == "record":
            return {k: decode_value(x, context_store)
                    for k, x in v["fields"].items()}
    except (KeyError, TypeError, geo.GeometryError) as err:
        raise WireError(f"malformed {t} value: {err}") from err
    raise WireError(f"unknown wire type {t!r}")


# ---------------------------------------------------------------------------
# server side

class RemoteToolServer:
    """Reference handler for the wire protocol, wrapping any backend that
    implements the tool methods. Used by tests and by anyone hosting real
    models behind the same schema."""

    def __init__(self, backend):
        self.backend = backend
        self._contexts = {}

    def handle(self, request):
        try:
            api = request["api"]
            raw_args = request["args"]
            request.get("request_id")
        except (TypeError, KeyError):
            return {"status": "error", "payload": None,
                    "message": "request must carry api, args, request_id"}
        try:
            args = {k: decode_value(v, self._contexts) for k, v in raw_args.items()}
            payload, meta = dispatch_backend(self.backend, api, args)
            if isinstance(payload, ReconstructionContext):
                context_id = uuid.uuid4().hex
                self._contexts[context_id] = payload
                payload.meta["context_id"] = context_id
            return {"status": "ok",
                    "payload": {"value": encode_value(payload), "meta": meta},
                    "message": ""}
        except (ToolError, WireError, geo.GeometryError) as err:
            return {"status": "error", "payload": None, "message": str(err)}


# ---------------------------------------------------------------------------
# client side

def http_transport(url, payload, timeout):
    import requests

    response = requests.post(url, json=payload, timeout=timeout)
    response.raise_for_status()
    return response.json()


class RemoteBackend:
    """Tool backend that forwards every call over the wire protocol. The
    transport is injectable; the default posts JSON over HTTP."""

    def __init__(self, endpoint, transport=None, timeout=30.0):
        self.endpoint = endpoint.rstrip("/")
        self.transport = transport or http_transport
        self.timeout = timeout

    def _call(self, api, args):
        request = {"api": api,
                   "args": {k: encode_value(v) for k, v in args.items()},
                   "request_id": uuid.uuid4().hex}
        response = self.transport(self.endpoint + "/v1/tool", request, self.timeout)
        if not isinstance(response, dict) or "status" not in response:
            raise ToolError(f"{api}: malformed wire response", api=api)
        if response["status"] != "ok":
            raise ToolError(f"{api}: {response.get('message', 'remote error')}",
                            api=api)
        body = response["payload"]
        return decode_value(body["value"]), body.get("meta", {})

    @staticmethod
    def _ctx_ref(ctx):
        context_id = ctx.meta.get("context_id")
        if not context_id:
            raise ToolError("context has no remote id")
        return ContextRef(context_id)

    def reconstruct(self, image_refs):
        return self._call("reconstruct", {"images": list(image_refs)})

    def detect(self, camera_ref, prompt):
        payload, meta = self._call("detect", {"camera": camera_ref, "prompt": prompt})
        return [tuple(item) for item in payload], meta

    def project_box(self, ctx, camera_ref, box):
        return self._call("project_box_to_3d_points",
                          {"ctx": self._ctx_ref(ctx), "camera": camera_ref,
                           "box": box})

    def predict_obj_pose(self, ctx, camera_ref, box=None, object_ref=None):
        args = {"ctx": self._ctx_ref(ctx), "camera": camera_ref}
        if box is not None:
            args["box"] = box
        if object_ref is not None:
            args["object"] = object_ref
        return self._call("predict_obj_pose", args)

    def estimate_scale(self, ctx, camera_ref):
        return self._call("estimate_scale",
                          {"ctx": self._ctx_ref(ctx), "camera": camera_ref})

    def ocr(self, camera_ref):
        payload, meta = self._call("ocr", {"camera": camera_ref})
        return [tuple(item) for item in payload], meta

    def analyze_motion(self, camera_ref_a, camera_ref_b):
        return self._call("analyze_motion",
                          {"camera_a": camera_ref_a, "camera_b": camera_ref_b})

    def code(self, program, context, tags):
        return self._call("code", {"program": program, "context_values": context,
                                   "tags": sorted(tags)})
