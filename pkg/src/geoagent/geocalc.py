"""Small deterministic expression language for geometric computation.

Programs are line-oriented: zero or more bindings ``name = expr`` followed by
exactly one ``return expr``. There are no loops, no recursion, and no user
functions, so every parsed program terminates. Every geometric built-in
delegates to the corresponding kernel operation in :mod:`geoagent.geometry`.

Example (a multiple-choice evaluation returns one predicate per option)::

    local = express_in(f, centroid(pts), "point")
    x = local.x
    z = local.z
    return {A: x < 0 and abs(x) >= abs(z), B: x > 0 and abs(x) >= abs(z)}
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import geometry as geo

MAX_DEPTH = 16


class GeocalcError(ValueError):
    """Evaluation failure, annotated with the statement position."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + where)


class GeocalcParseError(GeocalcError):
    """Syntax failure with position."""


class UnboundName(GeocalcError):
    """A free name was not present in the evaluation context."""


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<op>==|!=|<=|>=|[+\-*/()\[\]{},:.<>=])
  | (?P<ws>\s+)
  | (?P<bad>.)
""", re.VERBOSE)

_KEYWORDS = {"and", "or", "not", "true", "false", "return"}


def _tokenize(line, line_no):
    tokens = []
    for m in _TOKEN_RE.finditer(line):
        kind = m.lastgroup
        col = m.start() + 1
        if kind == "ws":
            continue
        if kind == "bad":
            raise GeocalcParseError(f"unexpected character {m.group()!r}", line_no, col)
        tokens.append((kind, m.group(), line_no, col))
    tokens.append(("end", "", line_no, len(line) + 1))
    return tokens


# ---------------------------------------------------------------------------
# AST and parser

@dataclass(frozen=True)
class GeoProgram:
    bindings: tuple   # ((name, expr, (line, col)), ...)
    result: object    # expr
    source: str

    @property
    def free_names(self):
        bound = set()
        free = set()

        def walk(node):
            kind = node[0]
            if kind == "name":
                if node[1] not in bound:
                    free.add(node[1])
            elif kind == "call":
                for a in node[2]:
                    walk(a)
            elif kind in ("binop", "cmp"):
                walk(node[2])
                walk(node[3])
            elif kind == "unary":
                walk(node[2])
            elif kind in ("field", "index"):
                walk(node[1])
                if kind == "index":
                    walk(node[2])
            elif kind == "list":
                for a in node[1]:
                    walk(a)
            elif kind == "record":
                for _, a in node[1]:
                    walk(a)

        for name, expr, _ in self.bindings:
            walk(expr)
            bound.add(name)
        walk(self.result)
        return frozenset(free)


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, line, col = self.peek()
        if kind == "op" and val == op:
            return self.next()
        raise GeocalcParseError(f"expected {op!r}, found {val or 'end of line'!r}",
                                line, col)

    def at_op(self, *ops):
        kind, val, _, _ = self.peek()
        return kind == "op" and val in ops

    def at_name(self, word):
        kind, val, _, _ = self.peek()
        return kind == "name" and val == word

    def expression(self):
        return self.or_expr()

    def or_expr(self):
        left = self.and_expr()
        while self.at_name("or"):
            _, _, line, col = self.next()
            left = ("binop", "or", left, self.and_expr(), (line, col))
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at_name("and"):
            _, _, line, col = self.next()
            left = ("binop", "and", left, self.not_expr(), (line, col))
        return left

    def not_expr(self):
        if self.at_name("not"):
            _, _, line, col = self.next()
            return ("unary", "not", self.not_expr(), (line, col))
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.at_op("==", "!=", "<", ">", "<=", ">="):
            _, op, line, col = self.next()
            return ("cmp", op, left, self.additive(), (line, col))
        return left

    def additive(self):
        left = self.term()
        while self.at_op("+", "-"):
            _, op, line, col = self.next()
            left = ("binop", op, left, self.term(), (line, col))
        return left

    def term(self):
        left = self.unary()
        while self.at_op("*", "/"):
            _, op, line, col = self.next()
            left = ("binop", op, left, self.unary(), (line, col))
        return left

    def unary(self):
        if self.at_op("-"):
            _, _, line, col = self.next()
            return ("unary", "-", self.unary(), (line, col))
        return self.postfix()

    def postfix(self):
        node = self.primary()
        while True:
            if self.at_op("."):
                self.next()
                kind, val, line, col = self.next()
                if kind != "name":
                    raise GeocalcParseError("expected a field name after '.'", line, col)
                node = ("field", node, val, (line, col))
            elif self.at_op("["):
                _, _, line, col = self.next()
                idx = self.expression()
                self.expect_op("]")
                node = ("index", node, idx, (line, col))
            else:
                return node

    def primary(self):
        kind, val, line, col = self.next()
        if kind == "num":
            return ("num", float(val) if ("." in val or "e" in val or "E" in val)
                    else int(val))
        if kind == "str":
            return ("str", val[1:-1].replace('\\"', '"').replace("\\\\", "\\"))
        if kind == "name":
            if val in ("true", "false"):
                return ("bool", val == "true")
            if val in ("and", "or", "not", "return"):
                raise GeocalcParseError(f"unexpected keyword {val!r}", line, col)
            if self.at_op("("):
                self.next()
                args = []
                if not self.at_op(")"):
                    args.append(self.expression())
                    while self.at_op(","):
                        self.next()
                        args.append(self.expression())
                self.expect_op(")")
                if val not in BUILTINS:
                    raise GeocalcParseError(f"unknown function {val!r}", line, col)
                return ("call", val, tuple(args), (line, col))
            return ("name", val, (line, col))
        if kind == "op" and val == "(":
            inner = self.expression()
            self.expect_op(")")
            return inner
        if kind == "op" and val == "[":
            items = []
            if not self.at_op("]"):
                items.append(self.expression())
                while self.at_op(","):
                    self.next()
                    items.append(self.expression())
            self.expect_op("]")
            return ("list", tuple(items), (line, col))
        if kind == "op" and val == "{":
            entries = []
            if not self.at_op("}"):
                entries.append(self._record_entry())
                while self.at_op(","):
                    self.next()
                    entries.append(self._record_entry())
            self.expect_op("}")
            return ("record", tuple(entries), (line, col))
        raise GeocalcParseError(f"unexpected token {val or 'end of line'!r}", line, col)

    def _record_entry(self):
        kind, key, line, col = self.next()
        if kind != "name":
            raise GeocalcParseError("record keys must be identifiers", line, col)
        self.expect_op(":")
        return (key, self.expression())

    def done(self):
        return self.peek()[0] == "end"


def parse_program(text):
    """Parse a program into bindings plus a single terminal return."""
    if not text or not text.strip():
        raise GeocalcParseError("empty program", 1, 1)
    bindings = []
    result = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if result is not None:
            raise GeocalcParseError("statements after return", line_no, 1)
        tokens = _tokenize(line, line_no)
        parser = _Parser(tokens)
        kind, val, _, col = parser.peek()
        if kind == "name" and val == "return":
            parser.next()
            result = parser.expression()
        else:
            if kind != "name":
                raise GeocalcParseError("expected a binding or return", line_no, col)
            name = parser.next()[1]
            if name in _KEYWORDS:
                raise GeocalcParseError(f"{name!r} is a reserved word", line_no, col)
            if name in BUILTINS:
                raise GeocalcParseError(f"{name!r} shadows a built-in", line_no, col)
            parser.expect_op("=")
            bindings.append((name, parser.expression(), (line_no, col)))
        if not parser.done():
            _, extra, line, col2 = parser.peek()
            raise GeocalcParseError(f"unexpected trailing token {extra!r}", line, col2)
    if result is None:
        raise GeocalcParseError("program has no return statement",
                                text.count("\n") + 1, 1)
    return GeoProgram(tuple(bindings), result, text)


# ---------------------------------------------------------------------------
# values

def is_scalar(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def is_vec3(v):
    return isinstance(v, np.ndarray) and v.shape == (3,)


def check_value(v, depth=0, where="value"):
    """Enforce finiteness and bounded nesting on a produced value."""
    if depth > MAX_DEPTH:
        raise GeocalcError(f"{where} exceeds nesting depth {MAX_DEPTH}")
    if isinstance(v, bool) or isinstance(v, str):
        return v
    if is_scalar(v):
        if not math.isfinite(v):
            raise GeocalcError(f"{where} is not finite")
        return v
    if isinstance(v, np.ndarray):
        if not np.all(np.isfinite(v)):
            raise GeocalcError(f"{where} has non-finite entries")
        return v
    if isinstance(v, list):
        for i, item in enumerate(v):
            check_value(item, depth + 1, f"{where}[{i}]")
        return v
    if isinstance(v, dict):
        for k, item in v.items():
            check_value(item, depth + 1, f"{where}.{k}")
        return v
    return v  # kernel domain types validate themselves on construction


def type_name(v):
    if isinstance(v, bool):
        return "Bool"
    if is_scalar(v):
        return "Scalar"
    if isinstance(v, str):
        return "Text"
    if is_vec3(v):
        return "Vec3"
    if isinstance(v, geo.Rotation):
        return "Rotation"
    if isinstance(v, geo.RigidTransform):
        return "Transform"
    if isinstance(v, geo.PointCloud):
        return "PointCloud"
    if isinstance(v, geo.CardinalMap):
        return "CardinalMap"
    if isinstance(v, geo.ReferenceFrame):
        return "Frame"
    if isinstance(v, list):
        return "List"
    if isinstance(v, dict):
        return "Record"
    if hasattr(v, "record"):
        return "Record"
    return type(v).__name__


# ---------------------------------------------------------------------------
# built-ins (each geometric one delegates to the kernel)

def _want(v, pred, what, fname):
    if not pred(v):
        raise GeocalcError(f"{fname}: expected {what}, got {type_name(v)}")
    return v


def _as_vec(v, fname):
    if is_vec3(v):
        return v
    if isinstance(v, (list, tuple)) and len(v) == 3 and all(is_scalar(c) for c in v):
        return geo.as_vec3(v)
    raise GeocalcError(f"{fname}: expected a Vec3, got {type_name(v)}")


def _rotation_of(v, fname):
    if isinstance(v, geo.Rotation):
        return v
    if isinstance(v, geo.RigidTransform):
        return v.rotation
    raise GeocalcError(f"{fname}: expected a Rotation or Transform, got {type_name(v)}")


def _bi_vec3(x, y, z):
    return geo.vec3(_num(x, "vec3"), _num(y, "vec3"), _num(z, "vec3"))


def _num(v, fname):
    if is_scalar(v):
        return float(v)
    raise GeocalcError(f"{fname}: expected a Scalar, got {type_name(v)}")


def _bi_dot(a, b):
    return geo.vdot(_as_vec(a, "dot"), _as_vec(b, "dot"))


def _bi_cross(a, b):
    return geo.vcross(_as_vec(a, "cross"), _as_vec(b, "cross"))


def _bi_normalize(v):
    return geo.normalize(_as_vec(v, "normalize"))


def _bi_norm(v):
    return geo.vnorm(_as_vec(v, "norm"))


def _bi_distance(a, b):
    return geo.distance(_as_vec(a, "distance"), _as_vec(b, "distance"))


def _bi_scale_by(v, s):
    return _as_vec(v, "scale_by") * _num(s, "scale_by")


def _bi_inv(v):
    if isinstance(v, geo.RigidTransform):
        return geo.invert_rigid(v)
    if isinstance(v, geo.Rotation):
        return v.inverse()
    raise GeocalcError(f"inv: expected a Transform or Rotation, got {type_name(v)}")


def _bi_compose(a, b):
    if isinstance(a, geo.RigidTransform) and isinstance(b, geo.RigidTransform):
        return a @ b
    if isinstance(a, geo.Rotation) and isinstance(b, geo.Rotation):
        return a @ b
    raise GeocalcError(f"compose: operands must both be Transforms or both Rotations, "
                       f"got {type_name(a)} and {type_name(b)}")


def _bi_apply(t, x):
    if isinstance(t, geo.RigidTransform):
        if isinstance(x, geo.PointCloud):
            return geo.transform_points(t, x)
        return geo.as_vec3(t.apply(_as_vec(x, "apply")))
    if isinstance(t, geo.Rotation):
        if isinstance(x, geo.PointCloud):
            return geo.PointCloud(t.apply(x.points), x.frame)
        return geo.as_vec3(t.apply(_as_vec(x, "apply")))
    raise GeocalcError(f"apply: expected a Transform or Rotation, got {type_name(t)}")


def _bi_rot(t):
    return _want(t, lambda v: isinstance(v, geo.RigidTransform),
                 "a Transform", "rot").rotation


def _bi_axis(v, name):
    name = _want(name, lambda s: isinstance(s, str), "a Text axis name", "axis")
    if name.lower() not in ("x", "y", "z"):
        raise GeocalcError(f"axis: unknown axis {name!r}")
    if isinstance(v, geo.ReferenceFrame):
        return {"x": v.x_axis, "y": v.y_axis, "z": v.z_axis}[name.lower()].copy()
    return _rotation_of(v, "axis").axis(name)


def _bi_origin(v):
    if isinstance(v, geo.ReferenceFrame):
        return v.origin.copy()
    if isinstance(v, geo.RigidTransform):
        return v.translation.copy()
    raise GeocalcError(f"origin: expected a Transform or Frame, got {type_name(v)}")


def _bi_rotvec(v):
    return geo.rotation_to_rotvec(_rotation_of(v, "rotvec"))


def _bi_euler(v, order):
    order = _want(order, lambda s: isinstance(s, str), "a Text order", "euler")
    return [float(a) for a in geo.rotation_to_euler(_rotation_of(v, "euler"), order)]


def _bi_relrot(pose_i, pose_j):
    return geo.relative_rotation(_rotation_of(pose_i, "relrot"),
                                 _rotation_of(pose_j, "relrot"))


def _bi_classify_rotation(v):
    rv = v if is_vec3(v) else geo.rotation_to_rotvec(_rotation_of(v, "classify_rotation"))
    return geo.classify_primary_rotation(rv)


def _bi_centroid(v):
    if isinstance(v, geo.PointCloud):
        return geo.centroid(v)
    if isinstance(v, list):
        if not v:
            raise GeocalcError("centroid: empty list")
        return np.mean([_as_vec(p, "centroid") for p in v], axis=0)
    raise GeocalcError(f"centroid: expected a PointCloud or List, got {type_name(v)}")


def _bi_frame(origin, forward, down):
    return geo.build_reference_frame(_as_vec(origin, "frame"),
                                     _as_vec(forward, "frame"),
                                     _as_vec(down, "frame"))


def _bi_express_in(frame, v, kind="point"):
    _want(frame, lambda f: isinstance(f, geo.ReferenceFrame), "a Frame", "express_in")
    kind = _want(kind, lambda s: isinstance(s, str), "a Text kind", "express_in")
    return geo.express_in_frame(frame, _as_vec(v, "express_in"), kind)


def _bi_relation(frame, v, eps=0.0):
    _want(frame, lambda f: isinstance(f, geo.ReferenceFrame), "a Frame", "relation")
    rel = geo.qualitative_relation(frame, _as_vec(v, "relation"), _num(eps, "relation"))
    return {"lateral": rel.lateral, "vertical": rel.vertical, "depth": rel.depth}


def _bi_cardinal_axes(label, axis, y_ref):
    label = _want(label, lambda s: isinstance(s, str), "a Text label", "cardinal_axes")
    return geo.derive_cardinal_axes(label, _as_vec(axis, "cardinal_axes"),
                                    _as_vec(y_ref, "cardinal_axes"))


def _bi_classify_cardinal(disp, cmap):
    _want(cmap, lambda m: isinstance(m, geo.CardinalMap), "a CardinalMap",
          "classify_cardinal")
    return geo.classify_cardinal(_as_vec(disp, "classify_cardinal"), cmap)


def _bi_count_unique(items, tau):
    _want(items, lambda v: isinstance(v, list), "a List", "count_unique")
    return geo.dedup_count([_as_vec(p, "count_unique") for p in items],
                           _num(tau, "count_unique"))


def _scalar_list(v, fname):
    _want(v, lambda x: isinstance(x, list) and x, "a non-empty List", fname)
    return [_num(x, fname) for x in v]


def _bi_argmax(v):
    vals = _scalar_list(v, "argmax")
    return int(max(range(len(vals)), key=lambda i: (vals[i], -i)))


def _bi_argmin(v):
    vals = _scalar_list(v, "argmin")
    return int(min(range(len(vals)), key=lambda i: (vals[i], i)))


def _bi_min(*args):
    vals = _scalar_list(list(args) if len(args) > 1 else args[0], "min")
    return min(vals)


def _bi_max(*args):
    vals = _scalar_list(list(args) if len(args) > 1 else args[0], "max")
    return max(vals)


def _bi_abs(v):
    return abs(_num(v, "abs"))


def _bi_sign(v):
    x = _num(v, "sign")
    return 0.0 if x == 0 else math.copysign(1.0, x)


def _bi_item(lst, i):
    _want(lst, lambda v: isinstance(v, list), "a List", "item")
    idx = _num(i, "item")
    if idx != int(idx):
        raise GeocalcError("item: index must be an integer")
    idx = int(idx)
    if not (-len(lst) <= idx < len(lst)):
        raise GeocalcError(f"item: index {idx} out of range for list of {len(lst)}")
    return lst[idx]


def _bi_len(lst):
    _want(lst, lambda v: isinstance(v, list), "a List", "len")
    return len(lst)


BUILTINS = {
    "vec3": _bi_vec3, "dot": _bi_dot, "cross": _bi_cross, "normalize": _bi_normalize,
    "norm": _bi_norm, "distance": _bi_distance, "scale_by": _bi_scale_by,
    "inv": _bi_inv, "compose": _bi_compose, "apply": _bi_apply, "rot": _bi_rot,
    "axis": _bi_axis, "origin": _bi_origin, "rotvec": _bi_rotvec, "euler": _bi_euler,
    "relrot": _bi_relrot, "classify_rotation": _bi_classify_rotation,
    "centroid": _bi_centroid, "frame": _bi_frame, "express_in": _bi_express_in,
    "relation": _bi_relation, "cardinal_axes": _bi_cardinal_axes,
    "classify_cardinal": _bi_classify_cardinal, "count_unique": _bi_count_unique,
    "argmax": _bi_argmax, "argmin": _bi_argmin, "min": _bi_min, "max": _bi_max,
    "abs": _bi_abs, "sign": _bi_sign, "item": _bi_item, "len": _bi_len,
}


# ---------------------------------------------------------------------------
# evaluator

def _field_of(value, name, pos):
    if isinstance(value, dict):
        if name not in value:
            raise GeocalcError(f"record has no field {name!r}", *pos)
        return value[name]
    if is_vec3(value):
        idx = {"x": 0, "y": 1, "z": 2}.get(name)
        if idx is None:
            raise GeocalcError(f"Vec3 has no field {name!r}", *pos)
        return float(value[idx])
    if hasattr(value, "record"):
        rec = value.record()
        if name not in rec:
            raise GeocalcError(f"{type_name(value)} has no field {name!r}", *pos)
        return rec[name]
    raise GeocalcError(f"cannot access field {name!r} on {type_name(value)}", *pos)


def _eval(node, env):
    kind = node[0]
    if kind == "num" or kind == "str" or kind == "bool":
        return node[1]
    if kind == "name":
        name, pos = node[1], node[2]
        if name not in env:
            raise UnboundName(f"unbound name {name!r}", *pos)
        return env[name]
    if kind == "call":
        fname, args, pos = node[1], node[2], node[3]
        values = [_eval(a, env) for a in args]
        try:
            return BUILTINS[fname](*values)
        except GeocalcError:
            raise
        except TypeError as err:
            raise GeocalcError(f"{fname}: {err}", *pos) from err
        except geo.GeometryError as err:
            raise GeocalcError(f"{fname}: {err}", *pos) from err
    if kind == "unary":
        op, expr, pos = node[1], node[2], node[3]
        v = _eval(expr, env)
        if op == "not":
            if not isinstance(v, bool):
                raise GeocalcError(f"'not' needs a Bool, got {type_name(v)}", *pos)
            return not v
        if is_scalar(v):
            return -v
        if is_vec3(v):
            return -v
        raise GeocalcError(f"cannot negate {type_name(v)}", *pos)
    if kind == "binop":
        op, left, right, pos = node[1], node[2], node[3], node[4]
        if op == "and":
            lv = _eval(left, env)
            _require_bool(lv, pos)
            if not lv:
                return False
            rv = _eval(right, env)
            _require_bool(rv, pos)
            return rv
        if op == "or":
            lv = _eval(left, env)
            _require_bool(lv, pos)
            if lv:
                return True
            rv = _eval(right, env)
            _require_bool(rv, pos)
            return rv
        lv, rv = _eval(left, env), _eval(right, env)
        return _arith(op, lv, rv, pos)
    if kind == "cmp":
        op, left, right, pos = node[1], node[2], node[3], node[4]
        lv, rv = _eval(left, env), _eval(right, env)
        return _compare(op, lv, rv, pos)
    if kind == "field":
        return _field_of(_eval(node[1], env), node[2], node[3])
    if kind == "index":
        base = _eval(node[1], env)
        idx = _eval(node[2], env)
        return _bi_item(base, idx)
    if kind == "list":
        return [_eval(a, env) for a in node[1]]
    if kind == "record":
        out = {}
        for key, expr in node[1]:
            if key in out:
                raise GeocalcError(f"duplicate record key {key!r}", *node[2])
            out[key] = _eval(expr, env)
        return out
    raise GeocalcError(f"unknown node kind {kind!r}")


def _require_bool(v, pos):
    if not isinstance(v, bool):
        raise GeocalcError(f"boolean operator needs Bool operands, got {type_name(v)}",
                           *pos)


def _arith(op, lv, rv, pos):
    if is_scalar(lv) and is_scalar(rv):
        if op == "+":
            return lv + rv
        if op == "-":
            return lv - rv
        if op == "*":
            return lv * rv
        if rv == 0:
            raise GeocalcError("division by zero", *pos)
        return lv / rv
    if is_vec3(lv) and is_vec3(rv) and op in ("+", "-"):
        return lv + rv if op == "+" else lv - rv
    if op == "*" and is_scalar(lv) and is_vec3(rv):
        return lv * rv
    if op == "*" and is_vec3(lv) and is_scalar(rv):
        return lv * rv
    if op == "/" and is_vec3(lv) and is_scalar(rv):
        if rv == 0:
            raise GeocalcError("division by zero", *pos)
        return lv / rv
    raise GeocalcError(
        f"operator {op!r} not defined for {type_name(lv)} and {type_name(rv)}", *pos)


def _compare(op, lv, rv, pos):
    if isinstance(lv, str) and isinstance(rv, str):
        if op == "==":
            return lv == rv
        if op == "!=":
            return lv != rv
        raise GeocalcError("Text supports only == and !=", *pos)
    if isinstance(lv, bool) and isinstance(rv, bool):
        if op == "==":
            return lv == rv
        if op == "!=":
            return lv != rv
        raise GeocalcError("Bool supports only == and !=", *pos)
    if is_scalar(lv) and is_scalar(rv):
        return {"==": lv == rv, "!=": lv != rv, "<": lv < rv,
                ">": lv > rv, "<=": lv <= rv, ">=": lv >= rv}[op]
    raise GeocalcError(
        f"cannot compare {type_name(lv)} with {type_name(rv)}", *pos)


def evaluate(program, context):
    """Run a program against a read-only name->value context.

    Deterministic and side-effect free; the context is never mutated.
    """
    if not isinstance(program, GeoProgram):
        program = parse_program(program)
    env = dict(context)
    seen = set()
    for name, expr, pos in program.bindings:
        if name in seen:
            raise GeocalcError(f"name {name!r} bound twice", *pos)
        seen.add(name)
        env[name] = check_value(_eval(expr, env), where=name)
    result = check_value(_eval(program.result, env), where="result")
    return result


# ---------------------------------------------------------------------------
# knowledge library

@dataclass(frozen=True)
class FormulaDoc:
    """One section of the fixed formula library, retrieved by type tags."""

    name: str
    key: frozenset
    body: str


_KNOWLEDGE_SPEC = (
    ("extrinsic_transform", frozenset({"extrinsic"})),
    ("object_pose_transform", frozenset({"object_pose"})),
    ("interpreting_rotation", frozenset({"rotation"})),
    ("cardinal_direction", frozenset({"cardinal"})),
    ("bbox_format", frozenset({"bbox"})),
)

_LIBRARY = None


def knowledge_library():
    global _LIBRARY
    if _LIBRARY is None:
        docs = []
        base = resources.files(__package__) / "assets" / "knowledge"
        for name, key in _KNOWLEDGE_SPEC:
            body = (base / f"{name}.txt").read_text(encoding="utf-8")
            docs.append(FormulaDoc(name, key, body))
        _LIBRARY = tuple(docs)
    return _LIBRARY


def retrieve_knowledge(var_types):
    """All formula docs whose key tags are a subset of the given tags, in
    fixed library order."""
    tags = frozenset(var_types)
    return [doc for doc in knowledge_library() if doc.key <= tags]
