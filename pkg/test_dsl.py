import pytest

import concepts
from dsl import (ConceptProgram, ParseError, PointDef, SkeletonMismatchError, WARNING, check,
                 constraint_removals, constraint_signature, load_program, parse, pretty_print, skeleton)

EQ_TRIANGLE = """\
l1 = Line(p1(), p2())
c1* = Circle(p1(), p2())
c2* = Circle(p2(), p1())
l2 = Line(p1(), p3(c1, c2))
l3 = Line(p2(), p3(c1, c2))
"""


def codes(source):
    return [d.code for d in check(source)]


def library_paths():
    return sorted(concepts.LIBRARY_DIR.glob("*/*/*.gcl"))


def test_parse_repeated_point_notation():
    program = parse(EQ_TRIANGLE, name="eq_triangle")
    assert [p.name for p in program.points] == ["p1", "p2", "p3"]
    assert [o.name for o in program.objects] == ["l1", "c1", "c2", "l2", "l3"]
    assert [o.name for o in program.visible_objects] == ["l1", "l2", "l3"]
    assert program.point("p3").constraints == ("c1", "c2")
    assert program.point("p1").constraints == ()
    assert program.object("l2").end.fresh
    assert not program.object("l3").end.fresh
    assert not program.object("c1").begin.fresh


def test_points_precede_the_object_that_introduces_them():
    program = parse("l1 = line(p1(), p2())\nl2 = line(p3(l1), p4())")
    kinds = [type(s).__name__ for s in program.statements]
    assert kinds == ["PointDef", "PointDef", "ObjectDef", "PointDef", "PointDef", "ObjectDef"]


def test_semicolons_and_comments():
    program = parse("// concept: pair\nl1 = line(p1(), p2()); l2 = line(p2, p3()) // tail")
    assert program.name == "pair"
    assert len(program.objects) == 2


def test_identity_endpoints_parse():
    program = parse("l1 = line(p1(), p1())")
    o = program.object("l1")
    assert o.begin.name == o.end.name == "p1"
    assert len(program.points) == 1


def test_standalone_point_statement():
    program = parse("l1 = line(p1(), p2())\np3 = point(l1)\nl2 = line(p3, p4())")
    assert program.point("p3").constraints == ("l1",)
    assert parse(pretty_print(program)) == program


@pytest.mark.parametrize("source, code", [
    ("l1 = line(p1(c9), p2())", "undefined-name"),
    ("l1 = line(p1(), p5)", "undefined-name"),
    ("c1 = circle(p1())", "arity"),
    ("l1 = line(p1(), p2())\nl2 = line(p3(l1, l1), p4())", "self-constraint"),
    ("l1 = line(p1(), p2())\nc1 = circle(p1, p2)\nl2 = line(p3(l1, c1, l1), p4())", "arity"),
    ("l1 = line(p1(), p2())\nl1 = line(p3(), p4())", "duplicate-definition"),
    ("l1 = line(p1(), p2())\nl2 = line(p1(l1), p3())", "duplicate-definition"),
    ("l1 = line(p1(), p2())\nl2 = line(p3(p1), p4())", "constraint-not-object"),
    ("l1 = line(p1(), p2())\nl2 = line(l1, p3())", "not-a-point"),
    ("l1 = ray(p1(), p2())", "unknown-kind"),
    ("l1* = line(p1(), p2())", "no-visible-object"),
    ("l1 = line(p1(), p2()", "syntax"),
    ("L1 = line(p1(), p2())", "syntax"),
])
def test_diagnostics(source, code):
    assert code in codes(source)
    with pytest.raises(ParseError) as info:
        parse(source)
    assert code in [d.code for d in info.value.diagnostics]


def test_diagnostic_positions():
    diagnostics = check("l1 = line(p1(), p2())\nl2 = line(p3(c9), p4())")
    assert len(diagnostics) == 1
    assert diagnostics[0].position[0] == 2
    assert "2:" in str(diagnostics[0])


def test_unused_point_is_a_warning():
    source = "p9 = point()\nl1 = line(p1(), p2())"
    diagnostics = check(source)
    assert [(d.code, d.severity) for d in diagnostics] == [("unused-point", WARNING)]
    parse(source)


def test_check_never_raises():
    assert check("")[0].code == "no-visible-object"
    assert check("= = = (((")


@pytest.mark.parametrize("path", library_paths(), ids=lambda p: "%s/%s" % (p.parent.name, p.stem))
def test_library_round_trip(path):
    program = load_program(path)
    assert parse(pretty_print(program)) == program


def test_library_is_complete():
    assert len(library_paths()) == 111


def test_load_program_names(tmp_path):
    source = tmp_path / "untitled.gcl"
    source.write_text("l1 = line(p1(), p2())\n")
    assert load_program(source).name == "untitled"
    assert load_program(source, name="other").name == "other"
    source.write_text("// concept: named\nl1 = line(p1(), p2())\n")
    assert load_program(source).name == "named"


def test_pretty_print_is_lowercase():
    text = pretty_print(parse(EQ_TRIANGLE, name="eq"))
    assert "Line" not in text and "Circle" not in text
    assert text.startswith("// concept: eq\n")
    assert "c1* = circle(p1, p2)" in text


def test_constraint_removals():
    task = concepts.get_task("eq_triangle")
    assert task.removals() == (1, 2)
    assert constraint_removals(task.target, task.target) == 0
    with pytest.raises(SkeletonMismatchError):
        constraint_removals(task.close, task.target)


def test_skeleton_mismatch():
    a = parse("l1 = line(p1(), p2())")
    b = parse("c1 = circle(p1(), p2())")
    assert skeleton(a) != skeleton(b)
    with pytest.raises(SkeletonMismatchError):
        constraint_removals(a, b)


def test_with_constraints():
    program = parse(EQ_TRIANGLE)
    relaxed = program.with_constraints({"p3": ("c1",)}, name="relaxed")
    assert isinstance(relaxed, ConceptProgram)
    assert relaxed.point("p3") == PointDef("p3", ("c1",))
    assert constraint_removals(program, relaxed) == 1


def test_constraint_signature():
    assert constraint_signature(parse(EQ_TRIANGLE)) == {"p1": 0, "p2": 0, "p3": 2}
    assert constraint_signature(parse("l1 = line(p1(), p2())\nl2 = line(p3(), p4())")) == \
        {"p1": 0, "p2": 0, "p3": 0, "p4": 0}
