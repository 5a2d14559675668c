import xml.etree.ElementTree as ET

import numpy as np
import pytest
from PIL import Image
from scipy import ndimage

import concepts
from evaluation import pearson
from geom import CircleShape, Coord, Segment, distance_to, sample_on
from realize import Scene, ScenePrimitive, realize, to_scene
from render import SVG_NS, RenderConfig, load_raster, rasterize, render_vector, save_pgm, save_png


def scene_of(*shapes):
    return Scene(tuple(ScenePrimitive("o%d" % i, s) for i, s in enumerate(shapes)))


def components(image):
    _, count = ndimage.label(image.dark_mask())
    return count


def test_svg_has_one_element_per_visible_object():
    r = realize(concepts.get_task("eq_triangle").target, seed=0)
    root = ET.fromstring(render_vector(to_scene(r)))
    assert root.tag == "{%s}svg" % SVG_NS
    assert len(root.findall("{%s}line" % SVG_NS)) == 3
    assert not root.findall("{%s}circle" % SVG_NS)
    for element in root:
        assert element.get("fill") == "none"
        assert element.get("stroke") == "black"


def test_svg_circle_geometry():
    svg = render_vector(scene_of(CircleShape(Coord(0.5, 0.25), 0.125)), RenderConfig(pixels=128))
    circle = ET.fromstring(svg).find("{%s}circle" % SVG_NS)
    assert (circle.get("cx"), circle.get("cy"), circle.get("r")) == ("64", "32", "16")


def test_empty_scene_is_white(small_render):
    image = rasterize(scene_of(), small_render)
    assert image.values.shape == (64, 64)
    assert np.all(image.values == 1.0)


def test_segment_raster(small_render):
    image = rasterize(scene_of(Segment(Coord(0.2, 0.5), Coord(0.8, 0.5))), small_render)
    assert components(image) == 1
    rows = np.nonzero(image.dark_mask().any(axis=1))[0]
    assert set(rows) <= {30, 31, 32, 33}
    assert image.values[10, 10] == 1.0


def test_circle_raster(small_render):
    image = rasterize(scene_of(CircleShape(Coord(0.5, 0.5), 0.3)), small_render)
    assert components(image) == 1
    assert image.values[32, 32] == 1.0
    inside = ndimage.binary_fill_holes(image.dark_mask())
    assert inside[32, 32]


def test_disjoint_primitives_are_separate_components(small_render):
    scene = scene_of(Segment(Coord(0.1, 0.1), Coord(0.4, 0.1)), CircleShape(Coord(0.6, 0.6), 0.2))
    assert components(rasterize(scene, small_render)) == 2


def test_antialias_produces_gray_levels():
    image = rasterize(scene_of(Segment(Coord(0.1, 0.13), Coord(0.9, 0.71))),
                      RenderConfig(pixels=64, stroke_width=10.0))
    values = np.unique(image.values)
    assert values.min() < 0.5
    assert np.any((values > 0.0) & (values < 1.0))
    assert image.values.min() >= 0.0 and image.values.max() <= 1.0


def test_raster_is_deterministic(small_render):
    r = realize(concepts.get_task("square").target, seed=5)
    a = rasterize(to_scene(r), small_render)
    b = rasterize(to_scene(r), small_render)
    assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("saver, suffix", [(save_png, ".png"), (save_pgm, ".pgm")])
def test_raster_files(tmp_path, saver, suffix):
    image = rasterize(scene_of(CircleShape(Coord(0.5, 0.5), 0.3)), RenderConfig(pixels=64))
    path = tmp_path / ("circle" + suffix)
    saver(image, path)
    back = load_raster(path)
    assert np.array_equal(back.to_uint8(), image.to_uint8())
    assert path.read_bytes()[:2] in (b"\x89P", b"P5")


@pytest.mark.parametrize("kwargs", [{"pixels": 8}, {"stroke_width": 0.5}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        RenderConfig(**kwargs)


def test_stroke_scales_with_resolution():
    assert RenderConfig(pixels=512).stroke_pixels == 5.0
    assert RenderConfig(pixels=128).stroke_pixels == 1.25
    assert RenderConfig(pixels=32).stroke_pixels == 1.0
    svg = render_vector(scene_of(Segment(Coord(0.2, 0.2), Coord(0.8, 0.2))), RenderConfig(pixels=512))
    assert ET.fromstring(svg).find("{%s}line" % SVG_NS).get("stroke-width") == "5"


def test_resolutions_agree():
    scene = to_scene(realize(concepts.get_task("eq_triangle").target, seed=3))
    small = rasterize(scene, RenderConfig(pixels=128))
    large = rasterize(scene, RenderConfig(pixels=512))
    img = Image.fromarray(large.values.astype(np.float32)).resize((128, 128), Image.BOX)
    down = np.asarray(img, dtype=np.float64)
    assert pearson(down.ravel(), small.values.ravel()) > 0.95


def test_circle_centroid_is_the_center():
    image = rasterize(scene_of(CircleShape(Coord(0.5, 0.5), 0.25)), RenderConfig(antialias=False))
    rows, cols = np.nonzero(image.dark_mask())
    assert abs(rows.mean() + 0.5 - 128) < 1.0
    assert abs(cols.mean() + 0.5 - 128) < 1.0


@pytest.mark.parametrize("concept_id, seed", [("square", 1), ("tcc", 4), ("angle_bisector", 9)])
def test_dark_pixels_trace_the_primitives(concept_id, seed, rng):
    config = RenderConfig(antialias=False)
    size = config.pixels
    bound = (config.stroke_pixels / 2.0 + 0.5) / size
    scene = to_scene(realize(concepts.get_task(concept_id).target, seed=seed))
    shapes = [p.shape for p in scene.primitives]
    rows, cols = np.nonzero(rasterize(scene, config).dark_mask())
    centers = np.column_stack([(cols + 0.5) / size, (rows + 0.5) / size])
    assert len(centers)
    for x, y in centers:
        assert min(distance_to(s, Coord(x, y)) for s in shapes) <= bound
    for shape in shapes:
        for _ in range(50):
            q = sample_on(shape, rng)
            if not (0.0 <= q.x < 1.0 and 0.0 <= q.y < 1.0):
                continue
            assert np.min(np.hypot(centers[:, 0] - q.x, centers[:, 1] - q.y)) <= bound
