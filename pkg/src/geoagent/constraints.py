"""Task-constraint language: the machine-parsable reference-frame spec, the
objective statement, and validation of both against a scene.

The frame grammar (whitespace-insensitive, LaTeX decoration tolerated):

    frame_spec  := axis_ref "=" rhs [ "=" cardinal ]
    axis_ref    := sign axis "_ref"
    rhs         := sign axis "_" anchor | vector_expr
    anchor      := "cam" integer | identifier
    vector_expr := "Centroid(" ident ")" "-" "Centroid(" ident ")"
                 | "normalize(" vector_expr ")"
    sign        := "+" | "-"        axis := "X" | "Y" | "Z"
    cardinal    := "North" | "South" | "East" | "West"

Canonical rendering is plain (no math decoration), the reference axis is
always +Z, and parse(render(spec)) is the identity.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

OBJECT_BASED = "object_based"
CAMERA_BASED = "camera_based"
DIRECTION_BASED = "direction_based"

CARDINALS = {"NORTH": "N", "SOUTH": "S", "EAST": "E", "WEST": "W",
             "N": "N", "S": "S", "E": "E", "W": "W"}
CARDINAL_WORDS = {"N": "North", "S": "South", "E": "East", "W": "West"}
_OPPOSITE_CARDINAL = {"N": "S", "S": "N", "E": "W", "W": "E"}

# objective kinds
RELATIVE_DIRECTION = "RelativeDirection"
CARDINAL_DIRECTION = "CardinalDirection"
ROTATION_ANALYSIS = "RotationAnalysis"
MOTION_ANALYSIS = "MotionAnalysis"
METRIC_MEASURE = "MetricMeasure"
COUNT = "Count"
ORDERING = "Ordering"
CUSTOM = "Custom"

ABSTRACT_REGION_WORDS = frozenset({
    "room", "kitchen", "area", "region", "hallway", "corridor", "bathroom",
    "bedroom", "living_room", "livingroom", "office", "yard", "garden",
    "space", "zone", "background", "foreground",
})

_CAMERA_NAME = re.compile(r"^cam(\d+)$", re.IGNORECASE)


class ConstraintError(ValueError):
    """Base error for the constraint language."""


class FrameSpecError(ConstraintError):
    """Frame-spec syntax error, with the offset into the normalized text."""

    def __init__(self, message, position, text=None):
        self.position = position
        self.text = text
        suffix = f" at position {position}" + (f" in {text!r}" if text else "")
        super().__init__(message + suffix)


class FormalizationError(ConstraintError):
    """The formalization document is missing or malformed."""


@dataclass(frozen=True)
class ObjectFrameSpec:
    """Frame anchored to an object's intrinsic axes; +Z_ref = sign*axis_object."""

    object_name: str
    sign: int = 1
    axis: str = "Z"
    cardinal: str | None = None
    variant = OBJECT_BASED

    def __post_init__(self):
        if not self.object_name:
            raise ConstraintError("object anchor name must be non-empty")


@dataclass(frozen=True)
class CameraFrameSpec:
    """Frame anchored to a camera's axes; +Z_ref = sign*axis_cam[i]."""

    camera_index: int
    sign: int = 1
    axis: str = "Z"
    cardinal: str | None = None
    variant = CAMERA_BASED

    def __post_init__(self):
        if self.camera_index < 0:
            raise ConstraintError("camera index must be >= 0")


@dataclass(frozen=True)
class DirectionFrameSpec:
    """Frame whose +Z is the vector from one entity's centroid to another's."""

    from_entity: str
    to_entity: str
    cardinal: str | None = None
    variant = DIRECTION_BASED

    def __post_init__(self):
        if self.from_entity == self.to_entity:
            raise ConstraintError("direction endpoints must be distinct")


@dataclass(frozen=True)
class ObjectiveSpec:
    """What to measure within the reference frame, as one plain sentence."""

    statement: str
    kind: str = CUSTOM
    subjects: tuple = ()

    def __post_init__(self):
        if not self.statement.strip():
            raise ConstraintError("objective statement must be non-empty")


@dataclass(frozen=True)
class TaskConstraint:
    """The immutable contract between formalization and computation."""

    reference: object
    objective: ObjectiveSpec
    reasoning: str = ""


@dataclass(frozen=True)
class FormalizationDoc:
    reasoning: str
    formalization: str


@dataclass(frozen=True)
class ValidationFlag:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    flags: tuple = ()

    @property
    def ok(self):
        return not self.flags

    def codes(self):
        return [f.code for f in self.flags]


# ---------------------------------------------------------------------------
# parsing

_TEX_COMMANDS = re.compile(r"\\(?:text|mathrm|mathbf|mathit|operatorname)\s*\{([^{}]*)\}")
_TEX_NOISE = re.compile(r"\\(?:left|right|,|;|!|vec)")


def _strip_decoration(text):
    """Normalize LaTeX-ish decoration down to the plain grammar."""
    s = text.replace("\u2212", "-").replace("$", " ")
    for _ in range(4):  # nested \text{} unlikely beyond a couple of levels
        new = _TEX_COMMANDS.sub(r"\1", s)
        if new == s:
            break
        s = new
    s = _TEX_NOISE.sub(" ", s)
    s = s.replace("{", "").replace("}", "")
    return s


class _Cursor:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def eof(self):
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, char):
        if self.peek() == char:
            self.pos += 1
            return True
        return False

    def expect(self, char, what):
        if not self.take(char):
            raise FrameSpecError(f"expected {what}", self.pos, self.text)

    def sign(self, default=None):
        c = self.peek()
        if c == "+":
            self.pos += 1
            return 1
        if c == "-":
            self.pos += 1
            return -1
        if default is None:
            raise FrameSpecError("expected '+' or '-'", self.pos, self.text)
        return default

    def word(self):
        self.skip_ws()
        m = re.match(r"[A-Za-z_][A-Za-z0-9_]*", self.text[self.pos:])
        if not m:
            raise FrameSpecError("expected an identifier", self.pos, self.text)
        self.pos += m.end()
        return m.group(0)

    def keyword(self, kw):
        """Case-insensitive match of a bare keyword."""
        self.skip_ws()
        if self.text[self.pos:self.pos + len(kw)].lower() == kw.lower():
            self.pos += len(kw)
            return True
        return False


def _parse_centroid(cur):
    if not cur.keyword("centroid"):
        raise FrameSpecError("expected 'Centroid('", cur.pos, cur.text)
    cur.expect("(", "'(' after Centroid")
    name = cur.word()
    cur.expect(")", "')' closing Centroid")
    return name


def _parse_vector_expr(cur):
    """Returns (from_entity, to_entity)."""
    if cur.keyword("normalize"):
        cur.expect("(", "'(' after normalize")
        inner = _parse_vector_expr(cur)
        cur.expect(")", "')' closing normalize")
        return inner
    to_entity = _parse_centroid(cur)
    cur.expect("-", "'-' between centroids")
    from_entity = _parse_centroid(cur)
    return from_entity, to_entity


def parse_frame_spec(text):
    """Parse a reference-frame constraint string into its spec.

    Accepts both decorated ("$+Z_\\text{ref} = -Z_\\text{toaster}$") and plain
    ("+Z_ref = -Z_toaster") forms. Raises FrameSpecError with a position on
    any syntax problem; never raises anything else on arbitrary input.
    """
    if not isinstance(text, str) or not text.strip():
        raise FrameSpecError("empty frame spec", 0, text if isinstance(text, str) else "")
    cur = _Cursor(_strip_decoration(text))

    lhs_sign = cur.sign(default=1)
    lhs = cur.word()
    m = re.match(r"([XYZxyz])_(ref)$", lhs, re.IGNORECASE)
    if not m:
        raise FrameSpecError(f"left side must be a reference axis like '+Z_ref', got {lhs!r}",
                             cur.pos, cur.text)
    if m.group(1).upper() != "Z":
        raise FrameSpecError("only the Z reference axis is supported", cur.pos, cur.text)
    cur.expect("=", "'=' after the reference axis")

    c = cur.peek()
    if c.lower() in "cn":
        # vector expression (Centroid/normalize) or an axis term starting with
        # a bare identifier; disambiguate by lookahead
        save = cur.pos
        try:
            from_entity, to_entity = _parse_vector_expr(cur)
            if from_entity == to_entity:
                raise FrameSpecError("direction endpoints must be distinct",
                                     save, cur.text)
            spec = DirectionFrameSpec(from_entity, to_entity)
        except FrameSpecError as err:
            if "distinct" in str(err):
                raise
            cur.pos = save
            spec = _parse_axis_term(cur)
    else:
        spec = _parse_axis_term(cur)

    cardinal = None
    if cur.take("="):
        word = cur.word()
        key = word.upper()
        if key not in CARDINALS:
            raise FrameSpecError(f"unknown cardinal {word!r}", cur.pos, cur.text)
        cardinal = CARDINALS[key]
    if not cur.eof():
        raise FrameSpecError("unexpected trailing input", cur.pos, cur.text)

    if lhs_sign < 0:
        spec = _negate(spec)
        cardinal = _OPPOSITE_CARDINAL[cardinal] if cardinal else None
    if cardinal:
        spec = _with_cardinal(spec, cardinal)
    return spec


def _parse_axis_term(cur):
    sign = cur.sign(default=1)
    word = cur.word()
    m = re.match(r"([XYZxyz])_(.+)$", word)
    if not m:
        raise FrameSpecError(
            f"expected an axis term like 'Z_toaster' or 'Z_cam0', got {word!r}",
            cur.pos, cur.text)
    axis = m.group(1).upper()
    anchor = m.group(2)
    cam = _CAMERA_NAME.match(anchor)
    if cam:
        return CameraFrameSpec(int(cam.group(1)), sign=sign, axis=axis)
    return ObjectFrameSpec(anchor, sign=sign, axis=axis)


def _negate(spec):
    if isinstance(spec, DirectionFrameSpec):
        return DirectionFrameSpec(spec.to_entity, spec.from_entity, spec.cardinal)
    if isinstance(spec, ObjectFrameSpec):
        return ObjectFrameSpec(spec.object_name, -spec.sign, spec.axis, spec.cardinal)
    return CameraFrameSpec(spec.camera_index, -spec.sign, spec.axis, spec.cardinal)


def _with_cardinal(spec, cardinal):
    if isinstance(spec, DirectionFrameSpec):
        return DirectionFrameSpec(spec.from_entity, spec.to_entity, cardinal)
    if isinstance(spec, ObjectFrameSpec):
        return ObjectFrameSpec(spec.object_name, spec.sign, spec.axis, cardinal)
    return CameraFrameSpec(spec.camera_index, spec.sign, spec.axis, cardinal)


def render_frame_spec(spec):
    """Canonical plain-text rendering; parse(render(spec)) == spec."""
    if isinstance(spec, ObjectFrameSpec):
        if _CAMERA_NAME.match(spec.object_name):
            raise ConstraintError(
                f"object name {spec.object_name!r} collides with the camera syntax")
        rhs = f"{'+' if spec.sign > 0 else '-'}{spec.axis}_{spec.object_name}"
    elif isinstance(spec, CameraFrameSpec):
        rhs = f"{'+' if spec.sign > 0 else '-'}{spec.axis}_cam{spec.camera_index}"
    elif isinstance(spec, DirectionFrameSpec):
        rhs = f"Centroid({spec.to_entity}) - Centroid({spec.from_entity})"
    else:
        raise ConstraintError(f"not a frame spec: {spec!r}")
    out = f"+Z_ref = {rhs}"
    if spec.cardinal:
        out += f" = {CARDINAL_WORDS[spec.cardinal]}"
    return out


# ---------------------------------------------------------------------------
# formalization documents

_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def parse_formalization_doc(raw):
    """Extract the {"reasoning", "formalization"} JSON object from a response.

    The object may sit inside a ```json fence (surrounding prose is ignored)
    or be the bare top level of the text.
    """
    candidates = [m.group(1) for m in _FENCE.finditer(raw)]
    if not candidates:
        brace = raw.find("{")
        if brace < 0:
            raise FormalizationError("no JSON object found in response")
        candidates = [raw[brace:]]
    doc = None
    for cand in candidates:
        try:
            obj, _ = json.JSONDecoder().raw_decode(cand.strip())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            doc = obj
            break
    if doc is None:
        raise FormalizationError("no parseable JSON object found in response")
    missing = [k for k in ("reasoning", "formalization") if k not in doc]
    if missing:
        raise FormalizationError(f"formalization document missing keys: {missing}")
    return FormalizationDoc(str(doc["reasoning"]), str(doc["formalization"]))


# ---------------------------------------------------------------------------
# objective kind inference

_KIND_RULES = (
    (COUNT, ("how many", "count", "number of")),
    (METRIC_MEASURE, ("meter", "metre", "distance", "far apart", "how far",
                      "centimeter", "feet")),
    (CARDINAL_DIRECTION, ("north", "south", "east", "west", "cardinal", "compass")),
    (ROTATION_ANALYSIS, ("rotat", "pan ", "panned", "tilt", "roll", "turned")),
    (MOTION_ANALYSIS, ("move", "motion", "shift", "drift", "travel", "flow")),
    (ORDERING, ("closest", "nearest", "farthest", "order of", "rank", "sequence")),
    (RELATIVE_DIRECTION, ("left", "right", "front", "behind", "relative",
                          "where is", "side", "above", "below")),
)


def infer_objective_kind(statement):
    """Keyword routing for the scripted planner; falls back to Custom and
    never blocks execution."""
    low = statement.lower()
    for kind, needles in _KIND_RULES:
        if any(n in low for n in needles):
            return kind
    return CUSTOM


def make_objective(statement, subjects=()):
    return ObjectiveSpec(statement=statement, kind=infer_objective_kind(statement),
                         subjects=tuple(subjects))


# ---------------------------------------------------------------------------
# validation

def validate_task_constraint(tc, scene_entities, n_cameras=None):
    """Report-based validation of a task constraint against scene entities.

    Flags (never raises): unknown or abstract anchors, identical direction
    endpoints, unknown direction endpoints, unknown objective subjects, and
    out-of-range camera indices.
    """
    entities = set(scene_entities)
    flags = []
    ref = tc.reference

    def is_abstract(name):
        return name.lower().strip("_ ") in ABSTRACT_REGION_WORDS

    if isinstance(ref, ObjectFrameSpec):
        if is_abstract(ref.object_name):
            flags.append(ValidationFlag(
                "abstract_anchor",
                f"anchor {ref.object_name!r} is an abstract region; use a detectable "
                f"object or a camera axis as proxy"))
        elif ref.object_name not in entities:
            flags.append(ValidationFlag(
                "unknown_anchor", f"anchor {ref.object_name!r} is not in the scene"))
    elif isinstance(ref, CameraFrameSpec):
        if n_cameras is not None and ref.camera_index >= n_cameras:
            flags.append(ValidationFlag(
                "unknown_camera", f"camera {ref.camera_index} is not in the scene"))
    elif isinstance(ref, DirectionFrameSpec):
        if ref.from_entity == ref.to_entity:
            flags.append(ValidationFlag(
                "identical_endpoints", "direction endpoints are identical"))
        for name in (ref.from_entity, ref.to_entity):
            if is_abstract(name):
                flags.append(ValidationFlag(
                    "abstract_anchor",
                    f"direction endpoint {name!r} is an abstract region"))
            elif name not in entities:
                flags.append(ValidationFlag(
                    "unknown_endpoint", f"direction endpoint {name!r} is not in the scene"))
    else:
        flags.append(ValidationFlag("bad_reference", f"not a frame spec: {ref!r}"))

    for subject in tc.objective.subjects:
        if subject not in entities and not _CAMERA_NAME.match(subject):
            flags.append(ValidationFlag(
                "unknown_subject", f"objective subject {subject!r} is not in the scene"))
    return ValidationReport(tuple(flags))
