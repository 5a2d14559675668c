"""
Realizer
Turns a ConceptProgram into concrete coordinates by sequential sampling with
rejection, and checks realizations against (possibly different) programs.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from typing import Dict, Optional, Tuple

import numpy as np

from dsl import GeoclideanError, PointDef, SkeletonMismatchError, skeleton
from geom import TOL_SCENE, CircleShape, Coord, Segment, distance_to, intersect, sample_on

logger = logging.getLogger(__name__)

CANVAS = (1.0, 1.0)


class UnrealizableError(GeoclideanError):
    """Raised when the scene restart budget runs out."""

    def __init__(self, program_name, restarts, detail=""):
        self.program_name = program_name
        self.restarts = restarts
        message = "%s: no valid realization after %d scene restarts" % (program_name, restarts)
        if detail:
            message += " (%s)" % detail
        super().__init__(message)


class JsonConfigMixin(object):
    """JSON save/load for flat config dataclasses."""

    def to_dict(self):
        return asdict(self)

    def save(self, filename):
        """Save config values to a JSON file."""
        doc = self.to_dict()
        doc['saved_at'] = datetime.now().isoformat()
        with open(filename, 'w') as f:
            json.dump(doc, f, indent=2)
        logger.info("%s saved to %s" % (type(self).__name__, filename))

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known - {'saved_at'})
        if unknown:
            logger.warning("Ignoring unknown %s keys: %s" % (cls.__name__, unknown))
        return cls(**{k: v for k, v in doc.items() if k in known})

    @classmethod
    def load(cls, filename):
        """Load config from a JSON file; missing file keeps the defaults."""
        try:
            with open(filename, 'r') as f:
                doc = json.load(f)
        except IOError:
            logger.warning("Config file %s not found, using defaults" % filename)
            return cls()
        config = cls.from_dict(doc)
        logger.info("%s loaded from %s" % (cls.__name__, filename))
        return config


@dataclass
class RealizeConfig(JsonConfigMixin):
    """
    Sampling parameters. All lengths are in canvas units of the unit square.

    Attributes:
        margin: inset from the canvas border for every realized point
        min_separation: minimum distance between distinct points
        min_object_size: minimum segment length and circle radius
        max_attempts_per_point: samples tried for one point before the scene restarts
        max_scene_restarts: restarts before the program is declared unrealizable
        max_negative_attempts: resamples of a negative that still satisfies its target
        seed: default seed when no random stream is supplied
    """
    margin: float = 0.05
    min_separation: float = 0.025
    min_object_size: float = 0.1
    max_attempts_per_point: int = 100
    max_scene_restarts: int = 1000
    max_negative_attempts: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.margin < 0.5:
            raise ValueError("margin must be in [0, 0.5), got %r" % self.margin)
        for name in ('min_separation', 'min_object_size'):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)
        for name in ('max_attempts_per_point', 'max_scene_restarts', 'max_negative_attempts'):
            if int(getattr(self, name)) < 1:
                raise ValueError("%s must be at least 1" % name)


@dataclass
class Realization:
    """
    Concrete coordinates for every point and primitives for every object.

    Attributes:
        program: the ConceptProgram that was realized
        points: point name -> Coord
        objects: object name -> Segment or CircleShape
        seed: seed of the random stream, when known
        restarts: scene restarts spent before this realization was accepted
    """
    program: object
    points: Dict[str, Coord]
    objects: Dict[str, object]
    seed: Optional[int] = None
    restarts: int = 0

    def to_json(self):
        objects = {}
        for o in self.program.objects:
            entry = {'kind': o.kind, 'begin': o.begin.name, 'end': o.end.name}
            if o.kind == 'circle':
                entry['radius'] = self.objects[o.name].radius
            objects[o.name] = entry
        return {
            'program_name': self.program.name,
            'seed': self.seed,
            'restarts': self.restarts,
            'points': {name: [c.x, c.y] for name, c in self.points.items()},
            'objects': objects,
        }

    @classmethod
    def from_json(cls, doc, program):
        """Rebuild a realization of `program` from stored point coordinates."""
        if doc.get('program_name') not in (None, program.name):
            logger.warning("Replaying %s realization with program %s"
                           % (doc.get('program_name'), program.name))
        points = {name: Coord(float(x), float(y)) for name, (x, y) in doc['points'].items()}
        return replay(program, points, seed=doc.get('seed'), restarts=doc.get('restarts', 0))


@dataclass(frozen=True)
class ScenePrimitive:
    name: str
    shape: object

    @property
    def kind(self):
        return self.shape.kind


@dataclass(frozen=True)
class Scene:
    primitives: Tuple[ScenePrimitive, ...]
    canvas: Tuple[float, float] = field(default=CANVAS)


def derive_seed(master_seed, *parts):
    """Stable 63-bit seed from a master seed and identifying parts."""
    key = "|".join(str(p) for p in (master_seed,) + parts)
    digest = hashlib.sha256(key.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') & ((1 << 63) - 1)


def _build(kind, begin, end):
    if kind == 'line':
        return Segment(begin, end)
    return CircleShape(begin, begin.distance(end))


def replay(program, points, seed=None, restarts=0):
    """Construct every object of `program` from known point coordinates."""
    missing = [p.name for p in program.points if p.name not in points]
    if missing:
        raise SkeletonMismatchError("%s: no coordinates for points %s" % (program.name, missing))
    objects = {o.name: _build(o.kind, points[o.begin.name], points[o.end.name])
               for o in program.objects}
    ordered = {p.name: points[p.name] for p in program.points}
    return Realization(program, ordered, objects, seed, restarts)


class _SceneRejected(Exception):
    pass


class _Sampler(object):
    """One attempt at realizing a program; raises _SceneRejected on dead ends."""

    def __init__(self, program, config, rng):
        self.program = program
        self.config = config
        self.rng = rng
        self.points = {}
        self.objects = {}
        self.lo = config.margin
        self.hi = 1.0 - config.margin
        order = {p.name: i for i, p in enumerate(program.points)}
        self.completes = {}
        for o in program.objects:
            if o.begin.name == o.end.name:
                continue
            last = max(o.point_names, key=order.__getitem__)
            self.completes.setdefault(last, []).append(o)

    def in_canvas(self, c):
        return self.lo <= c.x <= self.hi and self.lo <= c.y <= self.hi

    def separated(self, c):
        sep = self.config.min_separation
        return all(c.distance(q) >= sep for q in self.points.values())

    def guards_hold(self, name, c):
        size = self.config.min_object_size
        for o in self.completes.get(name, ()):
            other = o.end.name if o.begin.name == name else o.begin.name
            if self.points[other].distance(c) < size:
                return False
        return True

    def acceptable(self, name, c):
        return self.in_canvas(c) and self.separated(c) and self.guards_hold(name, c)

    def coincident(self, c):
        for q in self.points.values():
            if c.distance(q) <= TOL_SCENE:
                return q
        return None

    def sample_point(self, point):
        if len(point.constraints) == 2:
            return self.intersection_point(point)
        attempts = self.config.max_attempts_per_point
        for _ in range(attempts):
            if point.constraints:
                c = sample_on(self.objects[point.constraints[0]], self.rng)
            else:
                x, y = self.rng.uniform(self.lo, self.hi, size=2)
                c = Coord(float(x), float(y))
            if self.acceptable(point.name, c):
                return c
        raise _SceneRejected("%s rejected after %d samples" % (point.name, attempts))

    def intersection_point(self, point):
        first, second = (self.objects[n] for n in point.constraints)
        candidates = list(intersect(first, second))
        if not candidates:
            raise _SceneRejected("%s: %s and %s do not meet" % ((point.name,) + point.constraints))
        snapped = [self.coincident(c) for c in candidates]
        forced = all(s is not None for s in snapped)
        if forced:
            # Construction identity: the intersection is an existing point.
            pool = snapped
        else:
            # Crossings at realized points are part of the construction, not a choice.
            pool = [c for c, s in zip(candidates, snapped) if s is None]
        c = pool[int(self.rng.integers(len(pool)))] if len(pool) > 1 else pool[0]
        ok = self.guards_hold(point.name, c) if forced else self.acceptable(point.name, c)
        if not ok:
            raise _SceneRejected("%s: sampled intersection point rejected" % point.name)
        return c

    def build_object(self, obj):
        begin, end = self.points[obj.begin.name], self.points[obj.end.name]
        if begin.distance(end) < self.config.min_object_size:
            raise _SceneRejected("%s is smaller than min_object_size" % obj.name)
        self.objects[obj.name] = _build(obj.kind, begin, end)

    def run(self):
        for s in self.program.statements:
            if isinstance(s, PointDef):
                self.points[s.name] = self.sample_point(s)
            else:
                self.build_object(s)
        return self.points, self.objects


def realize(program, config=None, rng=None, seed=None):
    """
    Sample a realization of `program`.

    Args:
        program: validated ConceptProgram
        config: RealizeConfig (defaults when None)
        rng: numpy Generator; created from `seed` or config.seed when None
        seed: seed recorded on the realization (and used when rng is None)

    Raises:
        UnrealizableError: when max_scene_restarts is exhausted
    """
    config = config or RealizeConfig()
    if rng is None:
        seed = config.seed if seed is None else seed
        rng = np.random.default_rng(seed)
    reason = ""
    for restart in range(config.max_scene_restarts):
        try:
            points, objects = _Sampler(program, config, rng).run()
        except _SceneRejected as e:
            reason = str(e)
            logger.debug("%s: scene restart %d (%s)" % (program.name, restart + 1, reason))
            continue
        return Realization(program, points, objects, seed, restart)
    raise UnrealizableError(program.name, config.max_scene_restarts, reason)


def to_scene(realization):
    """Visible primitives in program order."""
    return Scene(tuple(ScenePrimitive(o.name, realization.objects[o.name])
                       for o in realization.program.objects if o.visible))


def satisfies(program, realization, tol=TOL_SCENE):
    """
    Whether every point constraint of `program` holds in `realization`.

    Raises:
        SkeletonMismatchError: if the realization's program has a different skeleton
    """
    if skeleton(program) != skeleton(realization.program):
        raise SkeletonMismatchError("%s cannot be checked against a realization of %s"
                                    % (program.name, realization.program.name))
    for point in program.points:
        c = realization.points[point.name]
        for name in point.constraints:
            if distance_to(realization.objects[name], c) >= tol:
                return False
    return True


def feasibility(program, config=None, seeds=range(100)):
    """Realize `program` once per seed and summarize failures and restarts."""
    config = config or RealizeConfig()
    restarts = []
    failures = 0
    for seed in seeds:
        try:
            restarts.append(realize(program, config, seed=seed).restarts)
        except UnrealizableError:
            failures += 1
    summary = {
        'program': program.name,
        'runs': len(restarts) + failures,
        'failures': failures,
        'mean_restarts': float(np.mean(restarts)) if restarts else None,
        'max_restarts': int(max(restarts)) if restarts else None,
    }
    logger.debug("Feasibility %s: %s" % (program.name, summary))
    return summary
