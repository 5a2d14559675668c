"""
Scene rendering: SVG documents and grayscale rasters, black strokes on white.

The unit canvas maps onto the full pixel viewport with the origin at the top
left and y growing downward, the same layout as image rows.
"""

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from geom import bounding_box
from realize import JsonConfigMixin

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
SUPERSAMPLE = 4
REFERENCE_PIXELS = 256
MIN_STROKE_PIXELS = 1.0


@dataclass
class RenderConfig(JsonConfigMixin):
    """
    Attributes:
        pixels: side of the square image in pixels
        stroke_width: stroke width in pixels at 256 px, scaled with `pixels`
        antialias: 4x4 supersampling when True, hard pixel-center test when False
    """
    pixels: int = 256
    stroke_width: float = 2.5
    antialias: bool = True

    def __post_init__(self):
        if int(self.pixels) < 32:
            raise ValueError("pixels must be at least 32, got %r" % self.pixels)
        if not self.stroke_width >= 1:
            raise ValueError("stroke_width must be at least 1, got %r" % self.stroke_width)
        self.pixels = int(self.pixels)

    @property
    def stroke_pixels(self):
        """Stroke width at this resolution, never below one pixel."""
        return max(self.stroke_width * self.pixels / REFERENCE_PIXELS, MIN_STROKE_PIXELS)


@dataclass
class RasterImage:
    """Grayscale intensities in [0, 1], row-major, 1.0 is white."""
    values: np.ndarray

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def dark_mask(self, level=0.5):
        return self.values < level

    def to_uint8(self):
        return np.round(np.clip(self.values, 0.0, 1.0) * 255.0).astype(np.uint8)


def _fmt(v):
    return ("%.4f" % v).rstrip("0").rstrip(".")


def render_vector(scene, config=None):
    """One unfilled stroke element per visible primitive."""
    config = config or RenderConfig()
    size = config.pixels
    ET.register_namespace("", SVG_NS)
    root = ET.Element("{%s}svg" % SVG_NS, {
        "width": str(size),
        "height": str(size),
        "viewBox": "0 0 %d %d" % (size, size),
    })
    style = {"fill": "none", "stroke": "black", "stroke-width": _fmt(config.stroke_pixels),
             "stroke-linecap": "round"}
    for prim in scene.primitives:
        shape = prim.shape
        if prim.kind == "line":
            attrs = {"x1": _fmt(shape.a.x * size), "y1": _fmt(shape.a.y * size),
                     "x2": _fmt(shape.b.x * size), "y2": _fmt(shape.b.y * size)}
            tag = "line"
        else:
            attrs = {"cx": _fmt(shape.center.x * size), "cy": _fmt(shape.center.y * size),
                     "r": _fmt(shape.radius * size)}
            tag = "circle"
        attrs["id"] = prim.name
        attrs.update(style)
        ET.SubElement(root, "{%s}%s" % (SVG_NS, tag), attrs)
    return ET.tostring(root, encoding="unicode")


def _distance_field(shape, xs, ys, size):
    """Pixel-unit distance from sample positions to a primitive."""
    if shape.kind == "line":
        ax, ay = shape.a.x * size, shape.a.y * size
        dx, dy = (shape.b.x - shape.a.x) * size, (shape.b.y - shape.a.y) * size
        length2 = dx * dx + dy * dy
        t = ((xs - ax) * dx + (ys - ay) * dy) / length2 if length2 > 0 else np.zeros_like(xs)
        t = np.clip(t, 0.0, 1.0)
        return np.hypot(xs - (ax + t * dx), ys - (ay + t * dy))
    cx, cy, r = shape.center.x * size, shape.center.y * size, shape.radius * size
    return np.abs(np.hypot(xs - cx, ys - cy) - r)


def _pixel_box(shape, size, pad):
    x0, y0, x1, y1 = bounding_box(shape)
    j0 = max(int(np.floor(x0 * size - pad)), 0)
    j1 = min(int(np.ceil(x1 * size + pad)) + 1, size)
    i0 = max(int(np.floor(y0 * size - pad)), 0)
    i1 = min(int(np.ceil(y1 * size + pad)) + 1, size)
    return i0, i1, j0, j1


def rasterize(scene, config=None):
    """
    Draw the scene into a RasterImage.

    With antialias off a pixel is dark (0.0) iff its center lies within
    half the stroke of a primitive; with antialias on each pixel takes
    1 - coverage over a 4x4 grid of sub-pixel samples.
    """
    config = config or RenderConfig()
    size = config.pixels
    ss = SUPERSAMPLE if config.antialias else 1
    half = config.stroke_pixels / 2.0
    mask = np.zeros((size * ss, size * ss), dtype=bool)
    for prim in scene.primitives:
        i0, i1, j0, j1 = _pixel_box(prim.shape, size, half + 1.0)
        if i0 >= i1 or j0 >= j1:
            continue
        rows = (np.arange(i0 * ss, i1 * ss) + 0.5) / ss
        cols = (np.arange(j0 * ss, j1 * ss) + 0.5) / ss
        xs, ys = np.meshgrid(cols, rows)
        hit = _distance_field(prim.shape, xs, ys, size) < half
        mask[i0 * ss:i1 * ss, j0 * ss:j1 * ss] |= hit
    coverage = mask.reshape(size, ss, size, ss).mean(axis=(1, 3))
    return RasterImage(1.0 - coverage)


def save_svg(text, path):
    Path(path).write_text(text, encoding="utf-8")


def save_png(image, path):
    Image.fromarray(image.to_uint8()).save(str(path), format="PNG")


def save_pgm(image, path):
    # Pillow writes mode "L" images in the PPM family as binary PGM (P5).
    Image.fromarray(image.to_uint8()).save(str(path), format="PPM")


def load_raster(path):
    """Read a PNG/PGM back into a RasterImage."""
    with Image.open(str(path)) as img:
        values = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return RasterImage(values)
