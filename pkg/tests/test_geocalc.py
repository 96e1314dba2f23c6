import math

import numpy as np
import pytest

from geoagent import geocalc as gc
from geoagent import geometry as geo


def run(text, **ctx):
    return gc.evaluate(gc.parse_program(text), ctx)


# ---------------------------------------------------------------------------
# parsing

def test_parse_counts_statements():
    p = gc.parse_program("return dot(a, b)")
    assert len(p.bindings) == 0 and p.result[0] == "call"
    p = gc.parse_program("x = cross(a,b)\nreturn normalize(x)")
    assert len(p.bindings) == 1
    assert p.free_names == {"a", "b"}


def test_parse_positioned_errors():
    with pytest.raises(gc.GeocalcParseError) as err:
        gc.parse_program("return dot(a, b")
    assert err.value.line == 1
    with pytest.raises(gc.GeocalcParseError):
        gc.parse_program("x = 1")  # no return
    with pytest.raises(gc.GeocalcParseError):
        gc.parse_program("return 1\nreturn 2")
    with pytest.raises(gc.GeocalcParseError):
        gc.parse_program("return frobnicate(1)")  # unknown built-in
    with pytest.raises(gc.GeocalcParseError):
        gc.parse_program("dot = 3\nreturn dot")  # shadowing a built-in
    with pytest.raises(gc.GeocalcParseError):
        gc.parse_program("return 1 @ 2")


def test_free_names_defer_to_evaluation():
    p = gc.parse_program("return unknown_var")
    with pytest.raises(gc.UnboundName):
        gc.evaluate(p, {})


def test_comments_and_blank_lines():
    assert run("# setup\n\nx = 2  # two\nreturn x * 3") == 6


# ---------------------------------------------------------------------------
# evaluation basics

def test_vector_builtins():
    a = geo.vec3(1, 0, 0)
    b = geo.vec3(0, 1, 0)
    assert np.allclose(run("return cross(a,b)", a=a, b=b), [0, 0, 1])
    assert run("return dot(a,a)", a=geo.vec3(3, 4, 0)) == 25
    assert run("return norm(a)", a=geo.vec3(3, 4, 0)) == 5
    assert np.allclose(run("return normalize(vec3(0, 0, 9))"), [0, 0, 1])
    assert run("return distance(a, b)", a=a, b=b) == pytest.approx(math.sqrt(2))
    assert np.allclose(run("return scale_by(a, -2)", a=a), [-2, 0, 0])


def test_arithmetic_and_comparisons():
    assert run("return 2 + 3 * 4") == 14
    assert run("return (2 + 3) * 4") == 20
    assert run("return -2 < 1 and not (3 == 4)") is True
    assert run('return "left" == "left"') is True
    v = run("return a + b - a", a=geo.vec3(1, 2, 3), b=geo.vec3(4, 5, 6))
    assert np.allclose(v, [4, 5, 6])
    with pytest.raises(gc.GeocalcError):
        run("return cross(1, 2)")
    with pytest.raises(gc.GeocalcError):
        run("return 1 / 0")


def test_field_and_index_access():
    assert run("return r.lateral", r={"lateral": "left"}) == "left"
    assert run("return v.y", v=geo.vec3(1, 2, 3)) == 2
    assert run("return item(xs, 1)", xs=[10, 20, 30]) == 20
    assert run("return xs[2]", xs=[10, 20, 30]) == 30
    assert run("return len(xs)", xs=[1, 2]) == 2
    with pytest.raises(gc.GeocalcError):
        run("return v.w", v=geo.vec3(1, 2, 3))


def test_record_literal_mcq_pattern():
    out = run("x = 2\nreturn {A: x > 1, B: x > 5, C: x == 2 and x < 3, D: false}")
    assert out == {"A": True, "B": False, "C": True, "D": False}


def test_scalar_helpers():
    assert run("return argmax([1, 9, 4])") == 1
    assert run("return argmin([1, 9, 4])") == 0
    assert run("return max([1, 9, 4])") == 9
    assert run("return min(3, 5)") == 3
    assert run("return abs(-2)") == 2
    assert run("return sign(-0.5)") == -1


# ---------------------------------------------------------------------------
# delegation to the geometry kernel (exact agreement)

def rand_rotation(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return geo.Rotation.from_axis_angle(axis, rng.uniform(0.05, 3.0))


def test_delegation_matches_kernel_exactly():
    rng = np.random.default_rng(77)
    for _ in range(200):
        R = rand_rotation(rng)
        T = geo.RigidTransform(rand_rotation(rng), rng.uniform(-3, 3, 3))
        v = rng.uniform(-2, 2, 3)
        w = rng.uniform(-2, 2, 3)

        assert run("return dot(a,b)", a=v, b=w) == geo.vdot(v, w)
        assert np.array_equal(run("return cross(a,b)", a=v, b=w), geo.vcross(v, w))
        assert np.array_equal(run("return rotvec(r)", r=R), geo.rotation_to_rotvec(R))
        assert np.array_equal(run("return apply(t, v)", t=T, v=v),
                              geo.as_vec3(T.apply(v)))
        inv_direct = geo.invert_rigid(T)
        inv_prog = run("return inv(t)", t=T)
        assert np.array_equal(inv_prog.matrix(), inv_direct.matrix())
        assert run("return classify_rotation(rotvec(r))", r=R) == \
            geo.classify_primary_rotation(geo.rotation_to_rotvec(R))


def test_frame_and_relation_builtins():
    pose = geo.RigidTransform(geo.Rotation.identity(), [0, 0, 0])
    out = run(
        'f = frame(origin(pose), axis(pose, "z"), axis(pose, "y"))\n'
        'local = express_in(f, vec3(1, 0, 2), "point")\n'
        "return {x: local.x, z: local.z}",
        pose=pose)
    assert out == {"x": 1.0, "z": 2.0}
    rel = run('f = frame(vec3(0,0,0), vec3(0,0,1), vec3(0,1,0))\n'
              "return relation(f, vec3(2, 0, 0), 0.1)")
    assert rel == {"lateral": "right", "vertical": "centered", "depth": "centered"}


def test_cardinal_builtins():
    out = run(
        'cmap = cardinal_axes("S", vec3(0,-1,0), vec3(0,0,-1))\n'
        "return classify_cardinal(vec3(1, 1, 0), cmap)")
    assert out == "NE"


def test_count_unique_builtin():
    pts = [geo.vec3(0, 0, 0), geo.vec3(0.01, 0, 0), geo.vec3(5, 0, 0)]
    assert run("return count_unique(pts, 0.25)", pts=pts) == 2


def test_relrot_matches_kernel():
    rng = np.random.default_rng(5)
    p1 = geo.RigidTransform(rand_rotation(rng), rng.uniform(-1, 1, 3))
    p2 = geo.RigidTransform(rand_rotation(rng), rng.uniform(-1, 1, 3))
    out = run("return relrot(a, b)", a=p1, b=p2)
    assert np.array_equal(out.matrix, geo.relative_rotation(p1, p2).matrix)


# ---------------------------------------------------------------------------
# totality / determinism / value checks

def test_determinism():
    rng = np.random.default_rng(123)
    ctx = {"a": rng.uniform(-1, 1, 3), "b": rng.uniform(-1, 1, 3)}
    prog = gc.parse_program("c = cross(a, b)\nreturn {n: norm(c), d: dot(a, b)}")
    first = gc.evaluate(prog, ctx)
    for _ in range(5):
        assert gc.evaluate(prog, ctx) == first


def test_context_never_mutated():
    ctx = {"a": geo.vec3(1, 2, 3)}
    run("a2 = a + a\nreturn a2", **ctx)
    assert list(ctx) == ["a"]


def test_depth_limit():
    inner = "1"
    for _ in range(20):
        inner = f"[{inner}]"
    with pytest.raises(gc.GeocalcError):
        run(f"return {inner}")


def test_rebinding_rejected():
    with pytest.raises(gc.GeocalcError):
        run("x = 1\nx = 2\nreturn x")


def test_non_finite_rejected():
    with pytest.raises(gc.GeocalcError):
        run("return 1e308 * 1e308")


# ---------------------------------------------------------------------------
# knowledge retrieval

def test_retrieve_by_single_tag():
    docs = gc.retrieve_knowledge({"extrinsic"})
    assert [d.name for d in docs] == ["extrinsic_transform"]
    docs = gc.retrieve_knowledge({"object_pose"})
    assert [d.name for d in docs] == ["object_pose_transform"]


def test_retrieve_empty_and_union():
    assert gc.retrieve_knowledge(set()) == []
    names = [d.name for d in gc.retrieve_knowledge(
        {"extrinsic", "object_pose", "rotation", "cardinal", "bbox"})]
    assert names == ["extrinsic_transform", "object_pose_transform",
                     "interpreting_rotation", "cardinal_direction", "bbox_format"]


def test_rotation_doc_retrieved_for_either_source():
    # pose and reconstruction bindings both carry the shared rotation tag
    assert any(d.name == "interpreting_rotation"
               for d in gc.retrieve_knowledge({"object_pose", "rotation"}))
    assert any(d.name == "interpreting_rotation"
               for d in gc.retrieve_knowledge({"extrinsic", "rotation"}))


def test_knowledge_bodies_contain_formulas():
    lib = {d.name: d.body for d in gc.knowledge_library()}
    assert "P_cam_homo = P_world_homo @ E_s.T" in lib["extrinsic_transform"]
    assert "Pose_s = np.linalg.inv(extrinsic[s])" in lib["extrinsic_transform"]
    assert "P_world_homo = P_local_homo @ Pose_obj.T" in lib["object_pose_transform"]
    assert "ry > 0 corresponds to a pan to the right" in lib["interpreting_rotation"]
    assert "West_axis = np.cross(Y_ref_axis, South_axis)" in lib["cardinal_direction"]
    assert "[x1, y1, x2, y2]" in lib["bbox_format"]
