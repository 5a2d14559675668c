import csv
import enum
import json
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from sqlalchemy import Column, DateTime, Enum, ForeignKey, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

logger = logging.getLogger(__name__)

INDEX_NAME = "index.db"
MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["split", "concept", "path", "label", "seed"]

Base = declarative_base()


class ImageLabel(enum.Enum):
    REF = "ref"
    POS = "pos"
    CLOSE_NEG = "close_neg"
    FAR_NEG = "far_neg"


LABEL_RANK = {label.value: rank for rank, label in enumerate(ImageLabel)}


class GenerationRun(Base):
    __tablename__ = "generation_runs"
    id = Column(Integer, primary_key=True, index=True)
    master_seed = Column(String, nullable=False)  # text: master seeds are unbounded ints
    generator_version = Column(String, nullable=False)
    image_count = Column(Integer, nullable=False, default=0)
    created = Column(DateTime, default=datetime.utcnow)


class ImageRecord(Base):
    __tablename__ = "image_records"
    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("generation_runs.id"), nullable=False)
    split = Column(String, nullable=False)
    concept = Column(String, nullable=False, index=True)
    label = Column(Enum(ImageLabel), nullable=False)
    label_rank = Column(Integer, nullable=False)
    index = Column(Integer, nullable=False)
    path = Column(String, nullable=False, unique=True)
    seed = Column(String, nullable=False)
    restarts = Column(Integer, nullable=False, default=0)
    realization = Column(Text, nullable=True)


@dataclass(frozen=True)
class ManifestRow:
    split: str
    concept: str
    path: str
    label: str
    seed: int


def open_index(out_dir, fresh=False):
    """Return a session factory bound to `<out_dir>/index.db`.

    Args:
        out_dir: dataset root
        fresh: delete any existing index first (reruns overwrite, never append)
    """
    db_path = Path(out_dir) / INDEX_NAME
    if fresh and db_path.exists():
        db_path.unlink()
        logger.info("Replaced existing index %s" % db_path)
    engine = create_engine("sqlite:///%s" % db_path.as_posix(), connect_args={"check_same_thread": False})
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def record_run(session, master_seed, generator_version):
    run = GenerationRun(
        master_seed=str(master_seed),
        generator_version=generator_version,
        image_count=0,
        created=datetime.utcnow()
    )
    session.add(run)
    session.commit()
    session.refresh(run)
    return run


def record_image(session, run, split, concept, label, index, path, seed, restarts=0, realization=None):
    record = ImageRecord(
        run_id=run.id,
        split=split,
        concept=concept,
        label=ImageLabel(label),
        label_rank=LABEL_RANK[label],
        index=index,
        path=path,
        seed=str(seed),
        restarts=restarts,
        realization=json.dumps(realization, sort_keys=True) if realization is not None else None
    )
    session.add(record)
    run.image_count += 1
    return record


def ordered_images(session):
    return session.query(ImageRecord).order_by(
        ImageRecord.split, ImageRecord.concept, ImageRecord.label_rank, ImageRecord.index
    ).all()


def export_manifest(session, path):
    """Write every image record to `manifest.csv` in a stable order."""
    records = ordered_images(session)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            writer.writerow([r.split, r.concept, r.path, r.label.value, r.seed])
    logger.info("Manifest with %d rows written to %s" % (len(records), path))
    return len(records)


def read_manifest(path):
    """Read `manifest.csv` back into ManifestRow entries."""
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError("%s is missing manifest columns %s" % (path, sorted(missing)))
        for row in reader:
            rows.append(ManifestRow(row["split"], row["concept"], row["path"], row["label"], int(row["seed"])))
    return rows


def stored_realization(session, path):
    """Realization JSON recorded for one image path, or None."""
    record = session.query(ImageRecord).filter(ImageRecord.path == path).first()
    if record and record.realization:
        return json.loads(record.realization)
    return None


def latest_run(session):
    return session.query(GenerationRun).order_by(GenerationRun.id.desc()).first()
