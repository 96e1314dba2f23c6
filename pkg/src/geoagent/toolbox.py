"""Tool-call surface: request/response records, the reconstruction context,
and the dispatching facade over a backend (synthetic oracle or remote).
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field

import numpy as np

from . import geocalc, geometry as geo

TOOL_APIS = frozenset({
    "reconstruct", "detect", "project_box_to_3d_points", "predict_obj_pose",
    "estimate_scale", "ocr", "analyze_motion", "code",
})

FINALIZE_API = "generate_final_answer"

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ToolError(RuntimeError):
    """A tool call failed; carries the api name for error attribution."""

    def __init__(self, message, api=None):
        super().__init__(message)
        self.api = api


@dataclass(frozen=True)
class ToolRequest:
    api: str
    args: dict
    output_variable: str
    uses: tuple = ()   # optional provenance hints: workspace names consumed

    def __post_init__(self):
        if self.api not in TOOL_APIS:
            raise ToolError(f"unknown api {self.api!r}", api=self.api)
        if not _IDENT.match(self.output_variable):
            raise ToolError(f"bad output variable {self.output_variable!r}",
                            api=self.api)


@dataclass(frozen=True)
class ToolResponse:
    status: str            # "ok" | "error"
    payload: object = None
    summary: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok"


@dataclass(frozen=True)
class ReconstructionContext:
    """Per-camera world point maps plus the cameras that produced them. The
    context world frame is anchored at the first requested camera and is
    relative-scaled (a VGGT-style reconstruction); `meta` carries opaque
    backend bookkeeping."""

    point_maps: tuple
    extrinsics: tuple
    intrinsics: tuple
    scale: str = "relative"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.point_maps) == len(self.extrinsics) == len(self.intrinsics)):
            raise ToolError("context lists must have equal lengths", api="reconstruct")
        e0 = self.extrinsics[0]
        if (np.max(np.abs(e0.rotation.matrix - np.eye(3))) > 1e-9
                or np.max(np.abs(e0.translation)) > 1e-9):
            raise ToolError("extrinsic[0] must be the identity", api="reconstruct")

    def record(self):
        """Field view used by the expression language."""
        return {
            "extrinsics": list(self.extrinsics),
            "intrinsics": [
                {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                 "width": k.width, "height": k.height}
                for k in self.intrinsics
            ],
            "scale": self.scale,
        }

    def ref_index(self, ref):
        from .scene import format_camera_ref, parse_camera_ref
        wanted = format_camera_ref(*parse_camera_ref(ref))
        refs = self.meta.get("refs", [])
        if wanted not in refs:
            raise ToolError(f"context does not cover camera {wanted!r}")
        return refs.index(wanted)


# type tags attached to workspace bindings, by producing api; these drive
# formula retrieval for the code tool
BINDING_TAGS = {
    "reconstruct": frozenset({"reconstruction", "extrinsic", "rotation"}),
    "predict_obj_pose": frozenset({"object_pose", "rotation"}),
    "detect": frozenset({"bbox"}),
    "project_box_to_3d_points": frozenset({"point_cloud"}),
    "estimate_scale": frozenset({"scalar", "scale_factor"}),
    "ocr": frozenset({"text"}),
    "analyze_motion": frozenset({"motion"}),
}


def binding_tags(api, value):
    if api in BINDING_TAGS:
        return BINDING_TAGS[api]
    return frozenset({geocalc.type_name(value).lower()})


def _summarize(api, payload):
    if api == "reconstruct":
        return f"reconstructed {len(payload.point_maps)} view(s), anchored at the first"
    if api == "detect":
        return f"{len(payload)} detection(s)"
    if api == "project_box_to_3d_points":
        return f"point cloud with {len(payload)} points"
    if api == "predict_obj_pose":
        return "object-to-world pose"
    if api == "estimate_scale":
        return f"scale factor {payload:.6g}"
    if api == "ocr":
        return f"{len(payload)} text region(s)"
    if api == "analyze_motion":
        return (f"mean flow ({payload['mean_du']:.2f}, {payload['mean_dv']:.2f}) px, "
                f"{payload['label']}")
    if api == "code":
        return f"computed {geocalc.type_name(payload)}"
    return ""


class Toolbox:
    """Dispatches tool requests to the active backend and normalizes results.

    Workspace references in args ("$name") are resolved before dispatch; the
    code api additionally receives the values and type tags of its declared
    context variables.
    """

    def __init__(self, backend):
        self.backend = backend
        self.calls_made = 0

    def execute(self, request, workspace=None):
        self.calls_made += 1
        try:
            payload, meta = self._dispatch(request, workspace)
        except ToolError as err:
            return ToolResponse("error", payload=None, summary=str(err),
                                meta={"api": err.api or request.api})
        except (geo.GeometryError, geocalc.GeocalcError) as err:
            return ToolResponse("error", payload=None, summary=str(err),
                                meta={"api": request.api})
        return ToolResponse("ok", payload=payload,
                            summary=_summarize(request.api, payload), meta=meta)

    def _dispatch(self, request, workspace):
        args = {k: self._resolve(v, workspace) for k, v in request.args.items()}
        if request.api == "code":
            context, tags = self._code_context(args, workspace)
            args = {"program": args.get("program", ""), "context_values": context,
                    "tags": tags}
        try:
            return dispatch_backend(self.backend, request.api, args)
        except KeyError as err:
            raise ToolError(f"{request.api}: missing argument {err}",
                            api=request.api) from err

    def _resolve(self, value, workspace):
        if isinstance(value, str) and value.startswith("$"):
            name = value[1:]
            if workspace is None or name not in workspace:
                raise ToolError(f"workspace has no binding {name!r}")
            return workspace[name]
        return value

    def _code_context(self, args, workspace):
        names = args.get("context", [])
        context = {}
        tags = set()
        for name in names:
            if workspace is None or name not in workspace:
                raise ToolError(f"code: workspace has no binding {name!r}", api="code")
            context[name] = workspace[name]
            getter = getattr(workspace, "tags_of", None)
            if getter is not None:
                tags |= set(getter(name))
        if args.get("uses_cardinal"):
            tags.add("cardinal")
        return context, tags


def dispatch_backend(backend, api, args):
    """Shared api-name -> typed-method mapping used by the local toolbox and
    the wire server; args are already decoded/resolved."""
    if api == "reconstruct":
        return backend.reconstruct(args["images"])
    if api == "detect":
        return backend.detect(args["camera"], args["prompt"])
    if api == "project_box_to_3d_points":
        return backend.project_box(args["ctx"], args["camera"], _as_box(args["box"]))
    if api == "predict_obj_pose":
        box = args.get("box")
        return backend.predict_obj_pose(args["ctx"], args["camera"],
                                        box=_as_box(box) if box is not None else None,
                                        object_ref=args.get("object"))
    if api == "estimate_scale":
        return backend.estimate_scale(args["ctx"], args["camera"])
    if api == "ocr":
        return backend.ocr(args["camera"])
    if api == "analyze_motion":
        return backend.analyze_motion(args["camera_a"], args["camera_b"])
    if api == "code":
        return backend.code(args["program"], args.get("context_values", {}),
                            set(args.get("tags", [])))
    raise ToolError(f"unknown api {api!r}", api=api)


def _as_box(value):
    if isinstance(value, geo.BBox2D):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 4:
        return geo.BBox2D.normalized(*[float(v) for v in value])
    raise ToolError(f"bad box argument {value!r}")


def new_request_id():
    return uuid.uuid4().hex
