import random
import string

import pytest

from geoagent import constraints as cl


# ---------------------------------------------------------------------------
# the three exemplar forms

def test_parse_object_based_exemplar():
    spec = cl.parse_frame_spec(r"$+Z_\text{ref} = -Z_\text{toaster}$")
    assert isinstance(spec, cl.ObjectFrameSpec)
    assert spec.object_name == "toaster" and spec.sign == -1 and spec.axis == "Z"
    assert cl.parse_frame_spec("+Z_ref = -Z_toaster") == spec


def test_parse_camera_based_exemplar():
    spec = cl.parse_frame_spec("+Z_ref = +Z_cam0")
    assert isinstance(spec, cl.CameraFrameSpec)
    assert spec.camera_index == 0 and spec.sign == 1


def test_parse_direction_based_exemplar():
    spec = cl.parse_frame_spec("+Z_ref = Centroid(owen) - Centroid(sink) = North")
    assert isinstance(spec, cl.DirectionFrameSpec)
    assert spec.from_entity == "sink" and spec.to_entity == "owen"
    assert spec.cardinal == "N"


def test_parse_normalize_wrapper_and_decoration():
    spec = cl.parse_frame_spec(
        r"$+Z_\text{ref} = \text{normalize}(\text{Centroid(owen)}-\text{Centroid(sink)})"
        r" = \text{North}$")
    assert spec == cl.DirectionFrameSpec("sink", "owen", "N")


def test_parse_whitespace_insensitive():
    a = cl.parse_frame_spec("+Z_ref=-Z_toaster")
    b = cl.parse_frame_spec("  + Z_ref   =   - Z_toaster  ")
    assert a == b


def test_lhs_sign_folds():
    assert cl.parse_frame_spec("-Z_ref = +Z_cam2") == cl.parse_frame_spec("+Z_ref = -Z_cam2")
    flipped = cl.parse_frame_spec("-Z_ref = Centroid(a) - Centroid(b) = North")
    assert flipped == cl.DirectionFrameSpec("a", "b", "S")


def test_parse_errors_are_positioned():
    for bad in ("", "Z_ref", "+Z_ref = ", "+Z_ref = Z", "+X_ref = +Z_cam0",
                "+Z_ref = Centroid(a) - Centroid(a) extra",
                "+Z_ref = +Z_cam0 = Upward", "+Z_ref = Centroid(a)"):
        with pytest.raises(cl.FrameSpecError) as err:
            cl.parse_frame_spec(bad)
        assert hasattr(err.value, "position")


def test_identical_endpoints_rejected_by_type():
    with pytest.raises(cl.ConstraintError):
        cl.DirectionFrameSpec("sink", "sink")


# ---------------------------------------------------------------------------
# rendering round trip

def _random_identifier(rng):
    name = "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(3, 8)))
    if rng.random() < 0.3:
        name += f"_{rng.randint(1, 9)}"
    return name


def _random_spec(rng):
    cardinal = rng.choice([None, "N", "E", "S", "W"])
    kind = rng.randrange(3)
    if kind == 0:
        return cl.ObjectFrameSpec(_random_identifier(rng), rng.choice([1, -1]),
                                  rng.choice("XYZ"), cardinal)
    if kind == 1:
        return cl.CameraFrameSpec(rng.randint(0, 9), rng.choice([1, -1]),
                                  rng.choice("XYZ"), cardinal)
    a = _random_identifier(rng)
    b = _random_identifier(rng)
    while b == a:
        b = _random_identifier(rng)
    return cl.DirectionFrameSpec(a, b, cardinal)


def test_render_canonical_forms():
    assert cl.render_frame_spec(cl.ObjectFrameSpec("toaster", -1)) == "+Z_ref = -Z_toaster"
    assert cl.render_frame_spec(cl.CameraFrameSpec(2)) == "+Z_ref = +Z_cam2"
    assert cl.render_frame_spec(cl.DirectionFrameSpec("sink", "owen", "N")) == \
        "+Z_ref = Centroid(owen) - Centroid(sink) = North"


def test_round_trip_on_generated_specs():
    rng = random.Random(123)
    for _ in range(1000):
        spec = _random_spec(rng)
        assert cl.parse_frame_spec(cl.render_frame_spec(spec)) == spec


def test_parse_then_render_is_stable():
    for text in ("+Z_ref = -Z_toaster", "+Z_ref = +Z_cam0",
                 "+Z_ref = Centroid(owen) - Centroid(sink) = North"):
        assert cl.render_frame_spec(cl.parse_frame_spec(text)) == text


def test_render_rejects_camera_like_object_name():
    with pytest.raises(cl.ConstraintError):
        cl.render_frame_spec(cl.ObjectFrameSpec("cam3"))


# ---------------------------------------------------------------------------
# parser totality (fuzz)

def test_parser_never_crashes_on_random_bytes():
    rng = random.Random(99)
    for _ in range(2000):
        raw = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 60)))
        text = raw.decode("utf-8", errors="replace")
        try:
            cl.parse_frame_spec(text)
        except cl.ConstraintError:
            pass


# ---------------------------------------------------------------------------
# formalization documents

def test_parse_formalization_doc_fenced():
    raw = ('Here you go:\n```json\n{"reasoning": "r", "formalization": '
           '"+Z_ref = -Z_toaster"}\n```\nHope that helps!')
    doc = cl.parse_formalization_doc(raw)
    assert doc.reasoning == "r"
    assert doc.formalization == "+Z_ref = -Z_toaster"


def test_parse_formalization_doc_bare_json():
    doc = cl.parse_formalization_doc('{"reasoning": "a", "formalization": "b"}')
    assert doc.formalization == "b"


def test_parse_formalization_doc_missing_key():
    with pytest.raises(cl.FormalizationError):
        cl.parse_formalization_doc('```json\n{"reasoning": "only"}\n```')


def test_parse_formalization_doc_malformed_corpus():
    # assorted malformed responses must either parse from a valid fence or fail cleanly
    good = '{"reasoning": "x", "formalization": "+Z_ref = +Z_cam0"}'
    corpus = [
        f"```json\n{good}\n```和 trailing commentary outside the fence",
        f"prose first\n```json\n{good}\n```",
        f"```\n{good}\n```",
        good + " trailing words",
        "no json here at all",
        "```json\n{broken\n```",
        '{"formalization": "only"}',
        "```json\n[1, 2, 3]\n```" + good,
        f"```json\n{good}\n```\n```json\n{{\"reasoning\": \"second\", "
        f"\"formalization\": \"other\"}}\n```",
    ]
    parsed = 0
    for raw in corpus:
        try:
            doc = cl.parse_formalization_doc(raw)
            parsed += 1
            assert doc.formalization in ("+Z_ref = +Z_cam0", "only", "other")
        except cl.FormalizationError:
            pass
    assert parsed >= 5
    # the first fence wins when several are present
    two = (f"```json\n{good}\n```\n```json\n" +
           '{"reasoning": "b", "formalization": "second"}\n```')
    assert cl.parse_formalization_doc(two).formalization == "+Z_ref = +Z_cam0"


# ---------------------------------------------------------------------------
# objective kinds

def test_infer_objective_kind_routing():
    cases = {
        "The number of distinct chairs visible across all images.": cl.COUNT,
        "The distance between the mug and the lamp in meters.": cl.METRIC_MEASURE,
        "The cardinal direction from the table to the chair.": cl.CARDINAL_DIRECTION,
        "The direction the camera rotated between the two views.": cl.ROTATION_ANALYSIS,
        "The direction the ball moved across the view.": cl.MOTION_ANALYSIS,
        "The object closest to the sofa.": cl.ORDERING,
        "The position of the chair relative to the toaster.": cl.RELATIVE_DIRECTION,
        "Some otherwise uncategorizable request.": cl.CUSTOM,
    }
    for statement, kind in cases.items():
        assert cl.infer_objective_kind(statement) == kind, statement


def test_objective_requires_statement():
    with pytest.raises(cl.ConstraintError):
        cl.ObjectiveSpec("   ")


# ---------------------------------------------------------------------------
# validation

ENTITIES = ["toaster", "sink", "chair", "table"]


def _tc(reference, statement="Where is the chair relative to the toaster?",
        subjects=("chair", "toaster")):
    return cl.TaskConstraint(reference, cl.make_objective(statement, subjects))


def test_validate_known_anchor_ok():
    report = cl.validate_task_constraint(_tc(cl.ObjectFrameSpec("toaster")), ENTITIES)
    assert report.ok


def test_validate_abstract_anchor_flagged():
    report = cl.validate_task_constraint(_tc(cl.ObjectFrameSpec("kitchen")), ENTITIES)
    assert "abstract_anchor" in report.codes()


def test_validate_unknown_anchor_flagged():
    report = cl.validate_task_constraint(_tc(cl.ObjectFrameSpec("zebra")), ENTITIES)
    assert "unknown_subject" not in report.codes()
    assert "unknown_anchor" in report.codes()


def test_validate_direction_endpoints():
    spec = cl.DirectionFrameSpec("sink", "owen")
    report = cl.validate_task_constraint(_tc(spec), ENTITIES)
    assert "unknown_endpoint" in report.codes()


def test_validate_camera_index():
    report = cl.validate_task_constraint(_tc(cl.CameraFrameSpec(5)), ENTITIES, n_cameras=2)
    assert "unknown_camera" in report.codes()
    assert cl.validate_task_constraint(_tc(cl.CameraFrameSpec(1)), ENTITIES,
                                       n_cameras=2).ok


def test_validate_unknown_subject():
    tc = _tc(cl.ObjectFrameSpec("toaster"), subjects=("chair", "ghost"))
    report = cl.validate_task_constraint(tc, ENTITIES)
    assert report.codes() == ["unknown_subject"]
