#!/usr/bin/env python
"""
Concept Program Language
Parses, validates, desugars and prints Geoclidean concept programs.

A program is an ordered list of construction statements:

    l1 = line(p1(), p2())
    c1* = circle(p1, p2)
    l2 = line(p1, p3(c1, c2))

Objects are `line` (two endpoints) or `circle` (center, edge point). A `*`
after the object name hides it from renders. Points are introduced inline
(`p3(c1, c2)`) or with a standalone `p3 = point(c1, c2)` statement and may be
constrained to lie on one object or on the intersection of two. Names must be
defined before they are used.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

logger = logging.getLogger(__name__)

OBJECT_KINDS = ("line", "circle")
POINT_KIND = "point"
MAX_CONSTRAINTS = 2

IDENT_RE = re.compile(r"[a-z][a-z0-9_]*\Z")
TOKEN_RE = re.compile(r"(?P<word>[A-Za-z0-9_]+)|(?P<punct>[*=(),])|(?P<space>[ \t\r]+)|(?P<bad>.)")
METADATA_RE = re.compile(r"^\s*//\s*concept\s*:\s*(?P<name>\S+)\s*$")

ERROR = "error"
WARNING = "warning"


class GeoclideanError(Exception):
    """Base class for every error raised by this toolchain."""


class ParseError(GeoclideanError):
    """Raised when program text fails to parse or validate.

    Attributes:
        diagnostics: every diagnostic collected, errors and warnings
    """

    def __init__(self, diagnostics, name=None):
        self.diagnostics = list(diagnostics)
        self.name = name
        errors = [d for d in self.diagnostics if d.severity == ERROR]
        summary = "; ".join(str(d) for d in errors[:3])
        if len(errors) > 3:
            summary += "; ... (%d more)" % (len(errors) - 3)
        label = name or "<program>"
        super().__init__("%s: %s" % (label, summary))


class SkeletonMismatchError(GeoclideanError):
    """Raised when two programs do not share names, kinds and endpoints."""


@dataclass(frozen=True)
class ParseDiagnostic:
    position: Tuple[int, int]
    message: str
    severity: str = ERROR
    code: str = "syntax"

    def __str__(self):
        return "%d:%d: %s: %s [%s]" % (self.position[0], self.position[1], self.severity,
                                       self.message, self.code)


@dataclass(frozen=True)
class PointRef:
    """A point parameter of an object; `fresh` marks the inline definition."""
    name: str
    fresh: bool = False


@dataclass(frozen=True)
class PointDef:
    name: str
    constraints: Tuple[str, ...] = ()
    position: Tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class ObjectDef:
    name: str
    kind: str
    visible: bool
    begin: PointRef
    end: PointRef
    position: Tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def point_names(self):
        return (self.begin.name, self.end.name)


@dataclass(frozen=True)
class ConceptProgram:
    """
    A desugared, validated concept program.

    Attributes:
        name: program identifier (from the `concept:` comment or file stem)
        statements: PointDef and ObjectDef entries in definition order; every
                    inline point appears as a PointDef right before the
                    object that introduces it
    """
    name: str
    statements: Tuple[object, ...]

    @property
    def points(self):
        return [s for s in self.statements if isinstance(s, PointDef)]

    @property
    def objects(self):
        return [s for s in self.statements if isinstance(s, ObjectDef)]

    @property
    def visible_objects(self):
        return [o for o in self.objects if o.visible]

    def point(self, name):
        for s in self.points:
            if s.name == name:
                return s
        raise KeyError(name)

    def object(self, name):
        for s in self.objects:
            if s.name == name:
                return s
        raise KeyError(name)

    def with_constraints(self, changes, name=None):
        """Return a copy where the named points carry new constraint lists."""
        statements = []
        for s in self.statements:
            if isinstance(s, PointDef) and s.name in changes:
                s = PointDef(s.name, tuple(changes[s.name]), s.position)
            statements.append(s)
        return ConceptProgram(name or self.name, tuple(statements))


# ---------------------------------------------------------------------------
# Lexing

@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


@dataclass
class _RawRef:
    name: str
    constraints: Optional[List[_Token]]
    token: _Token


@dataclass
class _RawStatement:
    target: _Token
    hidden: bool
    kind: _Token
    args: list
    line: int


def _split_statements(source):
    """Yield (line_no, col_offset, text) chunks split on newlines and `;`."""
    for line_no, line in enumerate(source.splitlines(), start=1):
        code = line.split("//", 1)[0]
        offset = 0
        for chunk in code.split(";"):
            if chunk.strip():
                yield line_no, offset, chunk
            offset += len(chunk) + 1


def _tokenize(line_no, offset, text, diagnostics):
    tokens = []
    for match in TOKEN_RE.finditer(text):
        col = offset + match.start() + 1
        if match.group("space"):
            continue
        if match.group("bad"):
            diagnostics.append(ParseDiagnostic((line_no, col), "unexpected character %r" % match.group("bad")))
            return None
        kind = "word" if match.group("word") else match.group("punct")
        tokens.append(_Token(kind, match.group(0), line_no, col))
    return tokens


class _TokenStream(object):

    def __init__(self, tokens, line_no):
        self.tokens = tokens
        self.index = 0
        self.line_no = line_no

    def peek(self):
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def take(self, kind=None):
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            col = last.col + len(last.text) if last else 1
            raise _SyntaxProblem((self.line_no, col), "unexpected end of statement")
        if kind is not None and tok.kind != kind:
            expected = "a name" if kind == "word" else repr(kind)
            raise _SyntaxProblem((tok.line, tok.col), "expected %s, found %r" % (expected, tok.text))
        self.index += 1
        return tok


class _SyntaxProblem(Exception):

    def __init__(self, position, message):
        super().__init__(message)
        self.position = position
        self.message = message


def _parse_statement(stream):
    target = stream.take("word")
    hidden = False
    if stream.peek() is not None and stream.peek().kind == "*":
        stream.take("*")
        hidden = True
    stream.take("=")
    kind = stream.take("word")
    stream.take("(")
    args = []
    if stream.peek() is not None and stream.peek().kind == ")":
        stream.take(")")
    else:
        while True:
            args.append(_parse_ref(stream))
            tok = stream.take()
            if tok.kind == ")":
                break
            if tok.kind != ",":
                raise _SyntaxProblem((tok.line, tok.col), "expected ',' or ')', found %r" % tok.text)
    extra = stream.peek()
    if extra is not None:
        raise _SyntaxProblem((extra.line, extra.col), "unexpected %r after statement" % extra.text)
    return _RawStatement(target, hidden, kind, args, target.line)


def _parse_ref(stream):
    name = stream.take("word")
    tok = stream.peek()
    if tok is None or tok.kind != "(":
        return _RawRef(name.text, None, name)
    stream.take("(")
    constraints = []
    if stream.peek() is not None and stream.peek().kind == ")":
        stream.take(")")
        return _RawRef(name.text, constraints, name)
    while True:
        constraints.append(stream.take("word"))
        tok = stream.take()
        if tok.kind == ")":
            return _RawRef(name.text, constraints, name)
        if tok.kind != ",":
            raise _SyntaxProblem((tok.line, tok.col), "expected ',' or ')', found %r" % tok.text)


# ---------------------------------------------------------------------------
# Semantic pass

class _Analyzer(object):
    """Walks raw statements left to right, growing the environment."""

    def __init__(self):
        self.diagnostics = []
        self.statements = []
        self.points = {}
        self.objects = {}
        self.used_points = set()

    def error(self, tok, message, code):
        self.diagnostics.append(ParseDiagnostic((tok.line, tok.col), message, ERROR, code))

    def check_name(self, tok):
        if not IDENT_RE.match(tok.text):
            self.error(tok, "invalid identifier %r (expected [a-z][a-z0-9_]*)" % tok.text, "syntax")
            return False
        return True

    def resolve_constraints(self, tokens):
        names = []
        if len(tokens) > MAX_CONSTRAINTS:
            self.error(tokens[MAX_CONSTRAINTS], "a point takes at most %d constraints, got %d"
                       % (MAX_CONSTRAINTS, len(tokens)), "arity")
        for tok in tokens[:MAX_CONSTRAINTS]:
            if not self.check_name(tok):
                continue
            if tok.text in self.points:
                self.error(tok, "constraint %r names a point, not an object" % tok.text,
                           "constraint-not-object")
            elif tok.text not in self.objects:
                self.error(tok, "%r is used before it is defined" % tok.text, "undefined-name")
            elif tok.text in names:
                self.error(tok, "point is constrained twice by %r" % tok.text, "self-constraint")
            else:
                names.append(tok.text)
        return tuple(names)

    def define_point(self, tok, constraints):
        self.points[tok.text] = constraints
        self.statements.append(PointDef(tok.text, constraints, (tok.line, tok.col)))

    def point_ref(self, ref):
        tok = ref.token
        if not self.check_name(tok):
            return None
        if ref.constraints is None:
            if tok.text in self.objects:
                self.error(tok, "%r is an object, expected a point" % tok.text, "not-a-point")
                return None
            if tok.text not in self.points:
                self.error(tok, "%r is used before it is defined" % tok.text, "undefined-name")
                return None
            self.used_points.add(tok.text)
            return PointRef(tok.text, fresh=False)
        if tok.text in self.objects:
            self.error(tok, "%r is already defined as an object" % tok.text, "duplicate-definition")
            return None
        if tok.text in self.points:
            # Repeating the inline form with the same constraints is a reuse.
            if tuple(c.text for c in ref.constraints) == self.points[tok.text]:
                self.used_points.add(tok.text)
                return PointRef(tok.text, fresh=False)
            self.error(tok, "point %r is already defined with constraints %s"
                       % (tok.text, list(self.points[tok.text])), "duplicate-definition")
            return None
        constraints = self.resolve_constraints(ref.constraints)
        self.define_point(tok, constraints)
        self.used_points.add(tok.text)
        return PointRef(tok.text, fresh=True)

    def statement(self, raw):
        kind = raw.kind.text.lower()
        target = raw.target
        if kind == POINT_KIND:
            self.point_statement(raw)
            return
        if kind not in OBJECT_KINDS:
            self.error(raw.kind, "unknown object kind %r" % raw.kind.text, "unknown-kind")
            return
        name_ok = self.check_name(target)
        if name_ok and (target.text in self.objects or target.text in self.points):
            self.error(target, "%r is already defined" % target.text, "duplicate-definition")
            name_ok = False
        if len(raw.args) != 2:
            self.error(raw.kind, "%s takes 2 points, got %d" % (kind, len(raw.args)), "arity")
            return
        refs = [self.point_ref(arg) for arg in raw.args]
        if not name_ok or None in refs:
            return
        self.objects[target.text] = kind
        self.statements.append(ObjectDef(target.text, kind, not raw.hidden, refs[0], refs[1],
                                         (target.line, target.col)))

    def point_statement(self, raw):
        target = raw.target
        if raw.hidden:
            self.error(target, "points cannot carry the '*' visibility marker", "syntax")
        if not self.check_name(target):
            return
        if target.text in self.objects or target.text in self.points:
            self.error(target, "%r is already defined" % target.text, "duplicate-definition")
            return
        tokens = []
        for arg in raw.args:
            if arg.constraints is not None:
                self.error(arg.token, "point constraints must be object names", "syntax")
                return
            tokens.append(arg.token)
        self.define_point(target, self.resolve_constraints(tokens))

    def finish(self, last_line):
        objects = [s for s in self.statements if isinstance(s, ObjectDef)]
        if not any(o.visible for o in objects):
            self.diagnostics.append(ParseDiagnostic((max(last_line, 1), 1),
                                                    "program has no visible object", ERROR,
                                                    "no-visible-object"))
        referenced = set()
        for o in objects:
            referenced.update(o.point_names)
        for s in self.statements:
            if isinstance(s, PointDef) and s.name not in referenced:
                self.diagnostics.append(ParseDiagnostic(s.position,
                                                        "point %r is never used by an object" % s.name,
                                                        WARNING, "unused-point"))


def _analyze(source):
    """Run lexing, parsing and validation; return (name, statements, diagnostics)."""
    diagnostics = []
    name = None
    first = next((l for l in source.splitlines() if l.strip()), "")
    match = METADATA_RE.match(first)
    if match:
        name = match.group("name")
    analyzer = _Analyzer()
    last_line = 0
    for line_no, offset, text in _split_statements(source):
        last_line = line_no
        tokens = _tokenize(line_no, offset, text, diagnostics)
        if tokens is None:
            continue
        try:
            raw = _parse_statement(_TokenStream(tokens, line_no))
        except _SyntaxProblem as e:
            diagnostics.append(ParseDiagnostic(e.position, e.message, ERROR, "syntax"))
            continue
        analyzer.statement(raw)
    analyzer.finish(last_line)
    diagnostics.extend(analyzer.diagnostics)
    diagnostics.sort(key=lambda d: d.position)
    return name, tuple(analyzer.statements), diagnostics


def check(source):
    """Validate program text and return every diagnostic (never raises)."""
    return _analyze(source)[2]


def parse(source, name=None):
    """
    Parse and validate concept program text.

    Args:
        source: program text, statements separated by newlines or `;`
        name: program name; defaults to the `concept:` comment or "program"

    Returns:
        ConceptProgram with inline points desugared into PointDef statements

    Raises:
        ParseError: if any error diagnostic was produced
    """
    meta_name, statements, diagnostics = _analyze(source)
    program_name = name or meta_name or "program"
    if any(d.severity == ERROR for d in diagnostics):
        raise ParseError(diagnostics, program_name)
    for d in diagnostics:
        logger.debug("%s: %s" % (program_name, d))
    return ConceptProgram(program_name, statements)


def load_program(path, name=None):
    """Read a `.gcl` file; the file stem names the program unless metadata does."""
    path = Path(path)
    source = path.read_text(encoding="utf-8")
    meta = METADATA_RE.match(next((l for l in source.splitlines() if l.strip()), ""))
    return parse(source, name=name or (meta.group("name") if meta else path.stem))


# ---------------------------------------------------------------------------
# Printing and summaries

def _format_ref(ref, points):
    if not ref.fresh:
        return ref.name
    return "%s(%s)" % (ref.name, ", ".join(points[ref.name].constraints))


def pretty_print(program, header=True):
    """
    Emit canonical program text.

    First uses of inline points are printed in shorthand (`p3(c1, c2)`),
    later uses by bare name; points that no object introduced inline are
    printed as standalone `point` statements.
    """
    points = {p.name: p for p in program.points}
    inline = set()
    for o in program.objects:
        for ref in (o.begin, o.end):
            if ref.fresh:
                inline.add(ref.name)
    lines = []
    if header and program.name:
        lines.append("// concept: %s" % program.name)
    for s in program.statements:
        if isinstance(s, PointDef):
            if s.name not in inline:
                lines.append("%s = point(%s)" % (s.name, ", ".join(s.constraints)))
            continue
        lines.append("%s%s = %s(%s, %s)" % (s.name, "" if s.visible else "*", s.kind,
                                             _format_ref(s.begin, points), _format_ref(s.end, points)))
    return "\n".join(lines) + "\n"


def constraint_signature(program):
    """Constraint count per point, in definition order."""
    return {p.name: len(p.constraints) for p in program.points}


def skeleton(program):
    """Names, kinds and endpoints of a program, ignoring point constraints."""
    objects = tuple((o.name, o.kind, o.begin.name, o.end.name) for o in program.objects)
    return objects, tuple(p.name for p in program.points)


def constraint_removals(target, variant):
    """
    Count constraints deleted from `target` to obtain `variant`.

    Raises:
        SkeletonMismatchError: if the skeletons differ or the variant adds a
                               constraint the target does not have
    """
    if skeleton(target) != skeleton(variant):
        raise SkeletonMismatchError("%s and %s do not share a skeleton" % (target.name, variant.name))
    removed = 0
    for t, v in zip(target.points, variant.points):
        extra = set(v.constraints) - set(t.constraints)
        if extra:
            raise SkeletonMismatchError("%s adds constraints %s to point %s"
                                        % (variant.name, sorted(extra), v.name))
        removed += len(t.constraints) - len(v.constraints)
    return removed
