"""Seeded pseudo-writer corpus for end-to-end benchmarks.

Each writer is a stroke texture family with its own slant, inter-stroke
angle, stroke width, curvature, loop and ink-dot tendencies; documents are
dark strokes on a lightly textured page. Inter-stroke angles and stroke
geometry survive rotation-normalized descriptors, so families remain
separable for the full pipeline. Stroke widths are chosen so that glyphs
stay blob-like after the factor-2 feature downsampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage


@dataclass(frozen=True)
class WriterStyle:
    slant_deg: float
    cross_angle_deg: float  # angle between a glyph's two main strokes
    stroke_width: int
    curvature: float  # bow height relative to stroke length
    second_stroke_prob: float
    end_dot_prob: float  # chance of an ink blob at a stroke end
    loop_prob: float  # chance a glyph is a drawn loop


def writer_style(writer: int) -> WriterStyle:
    return WriterStyle(
        slant_deg=-50.0 + 100.0 * writer / 9.0,
        cross_angle_deg=24.0 + 14.0 * writer,
        stroke_width=(6, 7, 8)[writer % 3],
        curvature=(0.1, 0.35, 0.6)[(writer // 3) % 3],
        second_stroke_prob=0.72 + 0.025 * writer,
        end_dot_prob=0.45 + 0.04 * writer,
        loop_prob=0.12 + 0.03 * writer,
    )


def _bezier(p0, p1, p2, n: int) -> list[tuple[float, float]]:
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = (1 - t) ** 2 * np.asarray(p0) + 2 * (1 - t) * t * np.asarray(p1) + t**2 * np.asarray(p2)
    return [tuple(p) for p in pts]


def _draw_stroke(draw: ImageDraw.ImageDraw, rng, origin, angle_deg: float, style: WriterStyle, ink: int):
    length = rng.uniform(7.0, 12.0)
    angle = math.radians(angle_deg + rng.normal(0.0, 4.0))
    d = np.asarray([math.cos(angle), math.sin(angle)])
    normal = np.asarray([-d[1], d[0]])
    p0 = np.asarray(origin, dtype=float)
    p2 = p0 + length * d
    bow = style.curvature * length * rng.uniform(0.6, 1.4) * rng.choice([-1.0, 1.0])
    p1 = p0 + 0.5 * length * d + bow * normal
    pts = _bezier(p0, p1, p2, max(4, int(length)))
    draw.line(pts, fill=ink, width=style.stroke_width)
    if rng.uniform() < style.end_dot_prob:
        r = 0.5 * style.stroke_width + 2.5
        cx, cy = p2 if rng.uniform() < 0.5 else p0
        draw.ellipse([cx - r, cy - r, cx + r, cy + r], fill=ink)
    return p0, p2


def render_document(writer: int, doc: int, seed: int = 7, size: int = 448) -> np.ndarray:
    """One page of glyph strokes in the writer's family, uint8 grayscale."""
    style = writer_style(writer)
    rng = np.random.default_rng(seed * 100003 + writer * 1009 + doc)

    ink_layer = Image.new("L", (size, size), color=255)
    draw = ImageDraw.Draw(ink_layer)
    line_step = 28
    glyph_step = 20
    for y in range(20, size - 16, line_step):
        for x in range(12, size - 24, glyph_step):
            if rng.uniform() < 0.12:  # word gaps
                continue
            origin = (x + rng.normal(0, 1.5), y + rng.normal(0, 1.5))
            ink = int(np.clip(40 + rng.normal(0, 10), 10, 90))
            if rng.uniform() < style.loop_prob:
                r = rng.uniform(4.0, 7.0)
                draw.ellipse(
                    [origin[0] - r, origin[1] - r, origin[0] + r, origin[1] + r],
                    outline=ink,
                    width=style.stroke_width,
                )
                continue
            p0, p2 = _draw_stroke(draw, rng, origin, style.slant_deg, style, ink)
            if rng.uniform() < style.second_stroke_prob:
                # Second stroke crosses the first at the family's angle.
                anchor = p0 + rng.uniform(0.2, 0.6) * (p2 - p0)
                _draw_stroke(draw, rng, anchor, style.slant_deg + style.cross_angle_deg, style, ink)

    strokes = np.asarray(ink_layer, dtype=np.float64)
    background = _page_texture(rng, size)
    page = np.where(strokes < 250, strokes, background)
    return np.clip(np.rint(page), 0, 255).astype(np.uint8)


def _page_texture(rng, size: int) -> np.ndarray:
    coarse = rng.normal(0.0, 18.0, size=(size // 16 + 1, size // 16 + 1))
    coarse = ndimage.zoom(coarse, 16, order=1)[:size, :size]
    coarse = ndimage.gaussian_filter(coarse, 6.0)
    grain = rng.normal(0.0, 3.0, size=(size, size))
    return np.clip(205.0 + coarse + grain, 150.0, 240.0)


def generate_corpus(
    directory: str | Path,
    writers: int = 10,
    docs_per_writer: int = 5,
    seed: int = 7,
    size: int = 448,
) -> list[Path]:
    """Write `writers * docs_per_writer` PNG pages named w<writer>_<n>.png."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for w in range(writers):
        for d in range(docs_per_writer):
            page = render_document(w, d, seed=seed, size=size)
            path = directory / f"w{w:02d}_{d + 1}.png"
            Image.fromarray(page, mode="L").save(path)
            paths.append(path)
    return paths
