import pytest

import dataset_db
from dataset_db import ImageLabel, ManifestRow


@pytest.fixture
def session(tmp_path):
    session = dataset_db.open_index(tmp_path)()
    yield session
    session.close()


def test_records_and_ordered_export(tmp_path, session):
    run = dataset_db.record_run(session, 2 ** 70, "test")
    dataset_db.record_image(session, run, "elements", "square", "far_neg", 2, "elements/square/far_2.png", 11)
    dataset_db.record_image(session, run, "elements", "square", "ref", 1, "elements/square/ref_1.png", 12,
                            restarts=3, realization={"points": {"p1": [0.5, 0.5]}})
    dataset_db.record_image(session, run, "constraints", "lll", "pos", 1, "constraints/lll/pos_1.png", 13)
    session.commit()

    assert run.image_count == 3
    assert dataset_db.latest_run(session).master_seed == str(2 ** 70)
    assert [r.label for r in dataset_db.ordered_images(session)] == \
        [ImageLabel.POS, ImageLabel.REF, ImageLabel.FAR_NEG]

    path = tmp_path / "manifest.csv"
    assert dataset_db.export_manifest(session, path) == 3
    rows = dataset_db.read_manifest(path)
    assert rows[0] == ManifestRow("constraints", "lll", "constraints/lll/pos_1.png", "pos", 13)
    assert [r.label for r in rows] == ["pos", "ref", "far_neg"]
    assert dataset_db.stored_realization(session, "elements/square/ref_1.png") == {"points": {"p1": [0.5, 0.5]}}
    assert dataset_db.stored_realization(session, "elements/square/far_2.png") is None


def test_fresh_index_drops_old_runs(tmp_path, session):
    dataset_db.record_run(session, 1, "test")
    session.close()
    fresh = dataset_db.open_index(tmp_path, fresh=True)()
    try:
        assert dataset_db.latest_run(fresh) is None
    finally:
        fresh.close()


def test_manifest_columns_are_checked(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text("split,concept,path\nelements,angle,x.png\n")
    with pytest.raises(ValueError):
        dataset_db.read_manifest(path)
