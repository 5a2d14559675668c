"""
Few-shot Evaluation
Prototype-distance classification of generated trial sets, global threshold
fitting over all Close/Far subtasks, and correlation with human accuracy.

For every task the prototype is the mean feature vector of the 5 reference
images. Each of the 15 test images gets its Euclidean distance to the
prototype, min-max normalized within the task, and is called positive iff the
normalized distance is below a single threshold shared by all tasks.
"""

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
from PIL import Image
from scipy import stats

from concepts import CONSTRAINTS, ELEMENTS, IMAGES_PER_LABEL, LABELS, SUBTASKS, load_manifest
from dsl import GeoclideanError
from render import load_raster

logger = logging.getLogger(__name__)

EXTRACTORS = ("pixels32", "edgehist", "external")
THRESHOLD_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)
ZERO_RANGE_VALUE = 0.5
EDGE_BINS = 16
EDGE_CELLS = 4
HUMAN_DATA = Path(__file__).resolve().parent / "data" / "human_accuracy.csv"
SUBTASK_LABEL = {"close": "close_neg", "far": "far_neg"}

LIBRARY_ORDER = {key: i for i, key in enumerate(
    [("elements", c) for c in ELEMENTS] + [("constraints", c) for c in CONSTRAINTS])}


class FeatureError(GeoclideanError):
    """Unknown extractor, missing external vector or inconsistent lengths."""


class EvaluationError(GeoclideanError):
    """Incomplete trial sets, bad metric inputs or an empty extractor list."""


@dataclass(eq=False)
class FeatureVector:
    values: np.ndarray
    extractor_id: str

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TaskScore:
    split: str
    concept_id: str
    subtask: str
    correct: int
    total: int = 2 * IMAGES_PER_LABEL

    @property
    def accuracy(self):
        return self.correct / self.total


@dataclass
class PrototypeClassifier:
    """
    Attributes:
        prototype: mean reference feature vector
        lo, hi: distance range of the task's test images (the normalizer)
    """
    prototype: FeatureVector
    lo: float = 0.0
    hi: float = 0.0

    def normalize(self, distances):
        distances = np.asarray(distances, dtype=np.float64)
        span = self.hi - self.lo
        if not span > 0:
            return np.full(distances.shape, ZERO_RANGE_VALUE)
        return (distances - self.lo) / span

    def distances(self, vectors):
        return np.linalg.norm(np.asarray(vectors, dtype=np.float64) - self.prototype.values, axis=1)


@dataclass
class TaskTable:
    """Normalized test distances of one task, reused across the threshold grid."""
    split: str
    concept_id: str
    labels: List[str]
    normalized: np.ndarray
    zero_range: bool = False

    def correct(self, threshold, subtask):
        positive = self.normalized < threshold
        neg_label = SUBTASK_LABEL[subtask]
        count = 0
        for label, pred in zip(self.labels, positive):
            if label == "pos" and pred:
                count += 1
            elif label == neg_label and not pred:
                count += 1
        return count

    def score(self, threshold):
        """(close, far) TaskScores at `threshold`."""
        return tuple(TaskScore(self.split, self.concept_id, subtask, self.correct(threshold, subtask))
                     for subtask in SUBTASKS)


@dataclass
class ExtractorResult:
    extractor_id: str
    threshold: float
    tables: List[TaskTable]
    scores: List[TaskScore] = field(default_factory=list)

    @property
    def mean_accuracy(self):
        return float(np.mean([s.accuracy for s in self.scores])) if self.scores else 0.0


# ---------------------------------------------------------------------------
# Features

class ExternalFeatures(object):
    """Per-image vectors from a CSV file with columns `image_path, v0, v1, ...`."""

    def __init__(self, vectors, source=""):
        self.vectors = vectors
        self.source = source
        widths = {len(v) for v in vectors.values()}
        if len(widths) > 1:
            raise FeatureError("%s: rows have different widths %s" % (source, sorted(widths)))
        self.width = widths.pop() if widths else 0

    @staticmethod
    def key(path):
        key = str(path).strip().replace("\\", "/")
        while key.startswith("./"):
            key = key[2:]
        return key

    @classmethod
    def load(cls, filename):
        vectors = {}
        try:
            with open(filename, "r", newline="", encoding="utf-8") as f:
                reader = csv.reader(f)
                header = next(reader, None)
                if not header or header[0].strip() != "image_path":
                    raise FeatureError("%s: first column must be image_path" % filename)
                for line_no, row in enumerate(reader, start=2):
                    if not row:
                        continue
                    if len(row) != len(header):
                        raise FeatureError("%s:%d: expected %d columns, got %d"
                                           % (filename, line_no, len(header), len(row)))
                    try:
                        values = np.array([float(v) for v in row[1:]], dtype=np.float64)
                    except ValueError as e:
                        raise FeatureError("%s:%d: %s" % (filename, line_no, e))
                    if not np.all(np.isfinite(values)):
                        raise FeatureError("%s:%d: non-finite feature value" % (filename, line_no))
                    vectors[cls.key(row[0])] = values
        except IOError as e:
            raise FeatureError("cannot read features file %s: %s" % (filename, e))
        logger.info("Loaded %d external feature vectors from %s" % (len(vectors), filename))
        return cls(vectors, str(filename))

    def lookup(self, image_path):
        try:
            return self.vectors[self.key(image_path)]
        except KeyError:
            raise FeatureError("%s has no vector for %s" % (self.source or "features file", image_path))


def _pixels32(image):
    img = Image.fromarray(np.asarray(image.values, dtype=np.float32))
    small = img.resize((32, 32), Image.BOX)
    return np.asarray(small, dtype=np.float64).ravel()


def _edgehist(image):
    values = np.asarray(image.values, dtype=np.float64)
    h, w = values.shape
    gy, gx = np.gradient(values)
    magnitude = np.hypot(gx, gy)
    # Orientation modulo pi: fold every gradient into the upper half plane.
    flip = (gy < 0) | ((gy == 0) & (gx < 0))
    gx = np.where(flip, -gx, gx)
    gy = np.where(flip, -gy, gy)
    angle = np.arctan2(gy, gx)
    bins = np.minimum((angle / np.pi * EDGE_BINS).astype(int), EDGE_BINS - 1)
    rows = (np.arange(h) * EDGE_CELLS) // h
    cols = (np.arange(w) * EDGE_CELLS) // w
    cell = rows[:, None] * EDGE_CELLS + cols[None, :]
    hist = np.zeros(EDGE_CELLS * EDGE_CELLS * EDGE_BINS)
    np.add.at(hist, (cell * EDGE_BINS + bins).ravel(), magnitude.ravel())
    norm = np.linalg.norm(hist)
    return hist / norm if norm > 0 else hist


def extract(extractor_id, image=None, image_path=None, external=None):
    """
    Compute the feature vector of one image.

    Args:
        extractor_id: "pixels32", "edgehist" or "external"
        image: RasterImage (not needed for external)
        image_path: manifest-relative path, the key for external vectors
        external: ExternalFeatures table
    """
    if extractor_id == "pixels32":
        values = _pixels32(image)
    elif extractor_id == "edgehist":
        values = _edgehist(image)
    elif extractor_id == "external":
        if external is None:
            raise FeatureError("external extractor needs a features file")
        values = external.lookup(image_path)
    else:
        raise FeatureError("unknown extractor %r (choose from %s)" % (extractor_id, ", ".join(EXTRACTORS)))
    return FeatureVector(values, extractor_id)


# ---------------------------------------------------------------------------
# Protocol

def build_prototype(refs):
    """Elementwise mean of the reference vectors."""
    if not refs:
        raise EvaluationError("no reference vectors")
    rows = [np.asarray(getattr(r, "values", r), dtype=np.float64) for r in refs]
    if len({len(r) for r in rows}) != 1:
        raise FeatureError("reference vectors differ in length: %s" % sorted({len(r) for r in rows}))
    stack = np.vstack(rows)
    extractor_id = getattr(refs[0], "extractor_id", "")
    if np.all(stack == stack[0]):
        return FeatureVector(stack[0].copy(), extractor_id)
    return FeatureVector(stack.mean(axis=0), extractor_id)


def task_table(split, concept_id, ref_vectors, test_vectors, test_labels):
    """Normalize the distances of one task's test images to its prototype."""
    prototype = build_prototype(ref_vectors)
    tests = np.vstack([np.asarray(getattr(v, "values", v), dtype=np.float64) for v in test_vectors])
    if tests.shape[1] != len(prototype):
        raise FeatureError("%s/%s: test vectors have length %d, prototype %d"
                           % (split, concept_id, tests.shape[1], len(prototype)))
    classifier = PrototypeClassifier(prototype)
    distances = classifier.distances(tests)
    classifier.lo, classifier.hi = float(distances.min()), float(distances.max())
    zero_range = not classifier.hi - classifier.lo > 0
    if zero_range:
        logger.warning("%s/%s: all test distances are equal, scoring at chance" % (split, concept_id))
    return TaskTable(split, concept_id, list(test_labels), classifier.normalize(distances), zero_range)


def score_task(table, threshold):
    """(close TaskScore, far TaskScore) for one task at `threshold`."""
    if not 0.0 <= threshold <= 1.0:
        raise EvaluationError("threshold must be in [0, 1], got %r" % threshold)
    return table.score(threshold)


def fit_threshold(tables, grid=THRESHOLD_GRID):
    """
    Grid threshold maximizing mean accuracy over every subtask of `tables`.

    Returns:
        (theta, mean accuracy); ties go to the smaller theta
    """
    if not tables:
        raise EvaluationError("no tasks to fit a threshold on")
    subtasks = len(tables) * len(SUBTASKS)
    best_theta, best_correct = None, -1
    for theta in grid:
        correct = sum(t.correct(theta, s) for t in tables for s in SUBTASKS)
        if correct > best_correct:
            best_theta, best_correct = float(theta), correct
    return best_theta, best_correct / (subtasks * 2.0 * IMAGES_PER_LABEL)


def pearson(x, y):
    """Pearson product-moment correlation of two equal-length sequences."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise EvaluationError("pearson needs two 1-d sequences of equal length")
    if len(x) < 2:
        raise EvaluationError("pearson needs at least 2 values")
    if not (np.ptp(x) > 0 and np.ptp(y) > 0):
        raise EvaluationError("pearson is undefined for zero-variance input")
    r, _ = stats.pearsonr(x, y)
    return float(np.clip(r, -1.0, 1.0))


# ---------------------------------------------------------------------------
# Datasets

def load_human_reference(path=HUMAN_DATA):
    """(split, concept) -> {"close": accuracy, "far": accuracy}."""
    human = {}
    with open(path, "r", newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            human[(row["split"], row["concept"])] = {"close": float(row["close"]), "far": float(row["far"])}
    return human


def load_trialsets(data_dir):
    """
    Group manifest rows into complete trial sets.

    Returns:
        list of (split, concept, {label: [relative paths ordered by name]}) in library order
    """
    manifest = load_manifest(data_dir)
    grouped = {}
    for row in manifest.rows:
        grouped.setdefault((row.split, row.concept), {label: [] for label in LABELS})
        if row.label not in LABELS:
            raise EvaluationError("unknown label %r in manifest for %s" % (row.label, row.path))
        grouped[(row.split, row.concept)][row.label].append(row.path)
    trialsets = []
    for key in sorted(grouped, key=lambda k: (LIBRARY_ORDER.get(k, len(LIBRARY_ORDER)), k)):
        paths = grouped[key]
        for label in LABELS:
            if len(paths[label]) != IMAGES_PER_LABEL:
                raise EvaluationError("%s/%s: expected %d %s images, manifest lists %d"
                                      % (key[0], key[1], IMAGES_PER_LABEL, label, len(paths[label])))
            paths[label].sort()
        trialsets.append((key[0], key[1], paths))
    return trialsets


def _task_vectors(data_dir, paths, extractor_id, external):
    vectors = {}
    for label in LABELS:
        vectors[label] = []
        for rel in paths[label]:
            image = None
            if extractor_id != "external":
                full = Path(data_dir) / rel
                if not full.exists():
                    raise EvaluationError("missing image %s" % full)
                image = load_raster(full)
            vectors[label].append(extract(extractor_id, image, rel, external).values)
    return vectors


def score_dataset(data_dir, extractor_id, features_file=None, jobs=None):
    """
    Score every task of a generated dataset with one extractor.

    Distances are computed once per task; the threshold is then fitted over
    all subtasks and every task is scored at it.
    """
    if extractor_id not in EXTRACTORS:
        raise FeatureError("unknown extractor %r (choose from %s)" % (extractor_id, ", ".join(EXTRACTORS)))
    external = ExternalFeatures.load(features_file) if extractor_id == "external" else None
    trialsets = load_trialsets(data_dir)
    jobs = jobs or os.cpu_count() or 1

    def table_for(entry):
        split, concept, paths = entry
        vectors = _task_vectors(data_dir, paths, extractor_id, external)
        test_labels = [label for label in LABELS[1:] for _ in vectors[label]]
        tests = [v for label in LABELS[1:] for v in vectors[label]]
        return task_table(split, concept, vectors["ref"], tests, test_labels)

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        tables = list(pool.map(table_for, trialsets))
    theta, mean_acc = fit_threshold(tables)
    scores = [s for t in tables for s in score_task(t, theta)]
    logger.info("[OK] %s: theta* = %.2f, mean accuracy %.4f over %d subtasks"
                % (extractor_id, theta, mean_acc, len(scores)))
    return ExtractorResult(extractor_id, theta, tables, scores)


# ---------------------------------------------------------------------------
# Reports

def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def _safe_pearson(x, y, label):
    try:
        return pearson(x, y)
    except EvaluationError as e:
        logger.warning("%s: correlation not reported (%s)" % (label, e))
        return None


def build_report(results, human=None, metadata=None):
    """
    Assemble the machine-readable report.

    Args:
        results: ExtractorResult per extractor, one report column each
        human: load_human_reference() mapping; rows without a human value get null
        metadata: extra entries for the report's metadata block
    """
    if not results:
        raise EvaluationError("report needs at least one extractor")
    human = load_human_reference() if human is None else human
    extractors = [r.extractor_id for r in results]
    by_key = [{(s.split, s.concept_id, s.subtask): s.accuracy for s in r.scores} for r in results]
    keys = [(s.split, s.concept_id, s.subtask) for s in results[0].scores]

    rows = []
    for key in keys:
        row = {"split": key[0], "concept": key[1], "subtask": key[2],
               "human": human.get(key[:2], {}).get(key[2])}
        for ext, table in zip(extractors, by_key):
            row[ext] = table.get(key)
        rows.append(row)

    concepts = []
    for split, concept in dict.fromkeys(k[:2] for k in keys):
        entry = {"split": split, "concept": concept}
        for col in extractors + ["human"]:
            entry[col] = _mean([r[col] for r in rows if (r["split"], r["concept"]) == (split, concept)])
        concepts.append(entry)

    def averages(selected):
        return {col: _mean([r[col] for r in selected]) for col in extractors + ["human"]}

    correlation, gap = {}, {}
    for ext in extractors:
        paired = [(r[ext], r["human"]) for r in rows if r[ext] is not None and r["human"] is not None]
        correlation[ext] = _safe_pearson([p[0] for p in paired], [p[1] for p in paired], ext) \
            if len(paired) >= 2 else None
        gap[ext] = _mean([p[0] - p[1] for p in paired])

    meta = {
        "normalization": "per-task min-max over the 15 test distances (reference images excluded)",
        "zero_range_value": ZERO_RANGE_VALUE,
        "decision": "positive iff normalized distance < threshold",
        "threshold_grid": [0.0, 1.0, 0.01],
        "subtasks": len(rows),
    }
    meta.update(metadata or {})
    return {
        "metadata": meta,
        "extractors": extractors,
        "thresholds": {r.extractor_id: r.threshold for r in results},
        "rows": rows,
        "concepts": concepts,
        "average": averages(rows),
        "averages": {
            "by_split": {split: averages([r for r in rows if r["split"] == split])
                         for split in dict.fromkeys(r["split"] for r in rows)},
            "by_subtask": {sub: averages([r for r in rows if r["subtask"] == sub]) for sub in SUBTASKS},
        },
        "correlation": correlation,
        "gap": gap,
    }


def save_report(report, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
    logger.info("Report written to %s" % path)


def load_report(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            report = json.load(f)
    except ValueError as e:
        raise EvaluationError("%s is not a report: %s" % (path, e))
    for key in ("extractors", "rows", "average", "correlation"):
        if key not in report:
            raise EvaluationError("%s is missing report field %r" % (path, key))
    return report


def _cell(value):
    return "    -" if value is None else "%.4f" % value


def render_table(report):
    """Text table: one row per subtask, then the average and correlation rows."""
    cols = report["extractors"] + ["human"]
    width = max([len("correlation")] + [len("%s %s" % (r["concept"], r["subtask"])) for r in report["rows"]])
    header = "%-*s  %s" % (width, "task", "  ".join("%10s" % c[:10] for c in cols))
    lines = [header, "-" * len(header)]
    for r in report["rows"]:
        name = "%s %s" % (r["concept"], r["subtask"])
        lines.append("%-*s  %s" % (width, name, "  ".join("%10s" % _cell(r[c]) for c in cols)))
    lines.append("-" * len(header))
    lines.append("%-*s  %s" % (width, "average", "  ".join("%10s" % _cell(report["average"][c]) for c in cols)))
    corr = [_cell(report["correlation"].get(c)) if c != "human" else "" for c in cols]
    lines.append("%-*s  %s" % (width, "correlation", "  ".join("%10s" % v for v in corr)))
    thresholds = ", ".join("%s=%.2f" % (k, v) for k, v in report.get("thresholds", {}).items())
    if thresholds:
        lines.append("theta*: %s" % thresholds)
    return "\n".join(lines) + "\n"
