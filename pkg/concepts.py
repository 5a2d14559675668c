"""
Concept Library and Dataset Generator
Loads the 37 builtin concepts (target plus Close and Far variants) and renders
few-shot trial sets: 5 reference images and 15 labeled test images per concept.
"""

import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import dataset_db
from dsl import GeoclideanError, SkeletonMismatchError, constraint_removals, load_program
from realize import RealizeConfig, UnrealizableError, derive_seed, feasibility, realize, satisfies, to_scene
from render import RenderConfig, rasterize, render_vector, save_pgm, save_png, save_svg

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "1.0"
REALIZE_CONFIG_NAME = "realize_config.json"
RENDER_CONFIG_NAME = "render_config.json"
LIBRARY_DIR = Path(__file__).resolve().parent / "concepts"

ELEMENTS = (
    "angle", "perp_bisector", "angle_bisector", "sixty_angle", "radii", "diameter",
    "segment", "rectilinear", "triangle", "quadrilateral", "eq_triangle",
    "right_triangle", "square", "rhombus", "oblong", "rhomboid", "parallel_lines",
)
CONSTRAINTS = (
    "lll", "cll", "llc", "ccl", "lcc", "ccc",
    "llll", "lllc", "clll", "clcl", "llcc", "cccl", "clcc", "cccc",
    "tll", "llt", "tcl", "clt", "tcc", "cct",
)
SPLITS = {"elements": ELEMENTS, "constraints": CONSTRAINTS}

LABELS = ("ref", "pos", "close_neg", "far_neg")
FILE_PREFIX = {"ref": "ref", "pos": "pos", "close_neg": "close", "far_neg": "far"}
IMAGES_PER_LABEL = 5
SUBTASKS = ("close", "far")


@dataclass(frozen=True)
class Task:
    """One concept: target program and its Close and Far variants."""
    concept_id: str
    split: str
    target: object
    close: object
    far: object

    @property
    def task_id(self):
        return "%s/%s" % (self.split, self.concept_id)

    def program_for(self, label):
        if label in ("ref", "pos"):
            return self.target
        return self.close if label == "close_neg" else self.far

    def removals(self):
        """(close, far) constraint deletions relative to the target."""
        return constraint_removals(self.target, self.close), constraint_removals(self.target, self.far)

    def check(self):
        close, far = self.removals()
        if not 0 < close < far:
            raise SkeletonMismatchError("%s: variants must remove 0 < close < far constraints, got %d and %d"
                                        % (self.task_id, close, far))
        return self


@dataclass
class TrialImage:
    label: str
    index: int
    path: str
    seed: int
    realization: object

    @property
    def restarts(self):
        return self.realization.restarts


@dataclass
class TrialSet:
    task: Task
    master_seed: int
    images: List[TrialImage] = field(default_factory=list)

    def by_label(self, label):
        return [im for im in self.images if im.label == label]

    @property
    def refs(self):
        return self.by_label("ref")

    @property
    def tests(self):
        return [im for im in self.images if im.label != "ref"]


@dataclass
class DatasetManifest:
    master_seed: int
    generator_version: str
    rows: List[dataset_db.ManifestRow]

    @property
    def tasks(self):
        seen = []
        for row in self.rows:
            key = (row.split, row.concept)
            if key not in seen:
                seen.append(key)
        return seen

    def label_counts(self):
        """(split, concept) -> Counter of labels."""
        counts = {}
        for row in self.rows:
            counts.setdefault((row.split, row.concept), Counter())[row.label] += 1
        return counts

    @property
    def scoreable_subtasks(self):
        complete = [c for c in self.label_counts().values()
                    if all(c[label] == IMAGES_PER_LABEL for label in LABELS)]
        return len(complete) * len(SUBTASKS)


def load_task(split, concept_id, library_dir=LIBRARY_DIR):
    folder = Path(library_dir) / split / concept_id
    return Task(
        concept_id=concept_id,
        split=split,
        target=load_program(folder / "target.gcl", name=concept_id),
        close=load_program(folder / "close.gcl", name="%s_close" % concept_id),
        far=load_program(folder / "far.gcl", name="%s_far" % concept_id),
    )


def builtin_tasks(library_dir=LIBRARY_DIR):
    """All 37 library tasks, Elements first, in library order."""
    tasks = []
    for split, concept_ids in SPLITS.items():
        for concept_id in concept_ids:
            tasks.append(load_task(split, concept_id, library_dir).check())
    logger.debug("Loaded %d builtin tasks from %s" % (len(tasks), library_dir))
    return tasks


def get_task(concept_id, library_dir=LIBRARY_DIR):
    for split, concept_ids in SPLITS.items():
        if concept_id in concept_ids:
            return load_task(split, concept_id, library_dir).check()
    raise KeyError("unknown concept %r" % concept_id)


def sample_image(task, label, index, master_seed, config=None):
    """
    Realize one trial image.

    Negatives are resampled with derived retry seeds until the realization
    fails the target program.

    Returns:
        (seed, Realization)
    """
    config = config or RealizeConfig()
    program = task.program_for(label)
    base = derive_seed(master_seed, task.split, task.concept_id, label, index)
    if label in ("ref", "pos"):
        return base, realize(program, config, seed=base)
    for attempt in range(config.max_negative_attempts):
        seed = base if attempt == 0 else derive_seed(master_seed, task.split, task.concept_id,
                                                     label, index, attempt)
        realization = realize(program, config, seed=seed)
        if not satisfies(task.target, realization):
            return seed, realization
        logger.debug("%s %s_%d satisfies the target, resampling" % (task.task_id, label, index))
    raise UnrealizableError(program.name, config.max_negative_attempts,
                            "every negative sample satisfied %s" % task.target.name)


def generate_trialset(task, master_seed, out_dir, realize_config=None, render_config=None, write_svg=False,
                      write_pgm=False):
    """
    Render the 20 images of one task under `<out_dir>/<split>/<concept>/`.

    Args:
        task: Task to sample
        master_seed: dataset seed; per-image seeds are derived from it
        out_dir: dataset root
        realize_config, render_config: sampling and drawing parameters
        write_svg: also write `<name>.svg` and `<name>.json` audit files
        write_pgm: also write `<name>.pgm` next to each PNG
    """
    render_config = render_config or RenderConfig()
    task_dir = Path(out_dir) / task.split / task.concept_id
    task_dir.mkdir(parents=True, exist_ok=True)
    trialset = TrialSet(task, master_seed)
    for label in LABELS:
        for index in range(1, IMAGES_PER_LABEL + 1):
            seed, realization = sample_image(task, label, index, master_seed, realize_config)
            stem = "%s_%d" % (FILE_PREFIX[label], index)
            scene = to_scene(realization)
            image = rasterize(scene, render_config)
            save_png(image, task_dir / (stem + ".png"))
            if write_pgm:
                save_pgm(image, task_dir / (stem + ".pgm"))
            if write_svg:
                save_svg(render_vector(scene, render_config), task_dir / (stem + ".svg"))
                with open(task_dir / (stem + ".json"), "w") as f:
                    json.dump(realization.to_json(), f, indent=2, sort_keys=True)
            rel = "%s/%s/%s.png" % (task.split, task.concept_id, stem)
            trialset.images.append(TrialImage(label, index, rel, seed, realization))
    logger.info("[OK] %s: %d images, %d scene restarts"
                % (task.task_id, len(trialset.images), sum(im.restarts for im in trialset.images)))
    return trialset


def generate_dataset(master_seed, out_dir, realize_config=None, render_config=None, jobs=None,
                     write_svg=False, tasks=None, write_pgm=False):
    """
    Generate the full dataset, its index database and `manifest.csv`.

    Tasks run in a thread pool; the index and manifest are written after every
    task has finished, so the output does not depend on `jobs`.

    Raises:
        UnrealizableError: naming the first concept that could not be sampled
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = builtin_tasks() if tasks is None else tasks
    realize_config = realize_config or RealizeConfig()
    render_config = render_config or RenderConfig()
    jobs = jobs or os.cpu_count() or 1
    logger.info("Generating %d tasks into %s (seed %s, %d jobs)" % (len(tasks), out_dir, master_seed, jobs))

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(generate_trialset, task, master_seed, out_dir,
                               realize_config, render_config, write_svg, write_pgm) for task in tasks]
        trialsets = []
        for task, future in zip(tasks, futures):
            try:
                trialsets.append(future.result())
            except GeoclideanError:
                logger.error("[ERROR] generation failed for %s" % task.task_id)
                raise

    Session = dataset_db.open_index(out_dir, fresh=True)
    session = Session()
    try:
        run = dataset_db.record_run(session, master_seed, GENERATOR_VERSION)
        for ts in trialsets:
            for im in ts.images:
                dataset_db.record_image(session, run, ts.task.split, ts.task.concept_id, im.label, im.index,
                                        im.path, im.seed, im.restarts, im.realization.to_json())
        session.commit()
        dataset_db.export_manifest(session, out_dir / dataset_db.MANIFEST_NAME)
    finally:
        session.close()
    realize_config.save(out_dir / REALIZE_CONFIG_NAME)
    render_config.save(out_dir / RENDER_CONFIG_NAME)

    rows = [dataset_db.ManifestRow(ts.task.split, ts.task.concept_id, im.path, im.label, im.seed)
            for ts in trialsets for im in ts.images]
    manifest = DatasetManifest(master_seed, GENERATOR_VERSION, rows)
    logger.info("[OK] Dataset complete: %d images, %d scoreable subtasks"
                % (len(rows), manifest.scoreable_subtasks))
    return manifest


def load_manifest(data_dir):
    """DatasetManifest read back from `<data_dir>/manifest.csv`."""
    data_dir = Path(data_dir)
    rows = dataset_db.read_manifest(data_dir / dataset_db.MANIFEST_NAME)
    master_seed = None
    version = GENERATOR_VERSION
    if (data_dir / dataset_db.INDEX_NAME).exists():
        session = dataset_db.open_index(data_dir)()
        try:
            run = dataset_db.latest_run(session)
            if run:
                master_seed, version = int(run.master_seed), run.generator_version
        finally:
            session.close()
    return DatasetManifest(master_seed, version, rows)


def library_report(tasks=None, seeds=range(20), config=None):
    """
    Feasibility of every library program.

    Returns:
        list of dicts, one per (task, variant), with constraint removals and
        the feasibility summary of `realize.feasibility`
    """
    tasks = builtin_tasks() if tasks is None else tasks
    report = []
    for task in tasks:
        close, far = task.removals()
        for variant, removed in (("target", 0), ("close", close), ("far", far)):
            program = getattr(task, variant)
            entry = {"split": task.split, "concept": task.concept_id, "variant": variant, "removed": removed}
            entry.update(feasibility(program, config, seeds))
            report.append(entry)
            if entry["failures"]:
                logger.warning("%s %s: %d of %d runs unrealizable"
                               % (task.task_id, variant, entry["failures"], entry["runs"]))
    return report
