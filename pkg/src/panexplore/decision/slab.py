"""Top-down map slab raster of the robot's altitude layer."""

from __future__ import annotations

import base64
import io
from typing import Iterable, Sequence

import numpy as np

from ..frontier import Frontier
from ..worldsim import FREE, OCCUPIED, OccupancyGrid, Pose, cell_of, in_bounds

BLACK = (0, 0, 0)
WHITE = (255, 255, 255)
MID_GRAY = (128, 128, 128)
GREEN = (0, 200, 0)
DARK_GRAY = (80, 80, 80)
BLUE = (0, 0, 255)
RED = (255, 0, 0)
YELLOW = (255, 255, 0)


def render_map_slab(grid: OccupancyGrid, pose: Pose, trace: Iterable[Sequence[float]] = (),
                    frontiers: Iterable[Frontier] = (),
                    decision_points: Iterable[tuple[Sequence[float], bool]] = ()) -> np.ndarray:
    """RGB image of shape ``(Y, X, 3)``; pixel ``[y, x]`` is cell ``(x, y, z_robot)``.

    Layers, bottom to top: cell states, decision points (green active, dark
    gray exhausted), trace (blue), candidate frontier cells (yellow), robot
    pose (red).
    """
    res = grid.resolution
    z = cell_of(pose.position, res)[2]
    layer = grid.cells[:, :, z].T
    img = np.empty(layer.shape + (3,), dtype=np.uint8)
    img[:] = MID_GRAY
    img[layer == FREE] = WHITE
    img[layer == OCCUPIED] = BLACK

    def paint(cell, color):
        if in_bounds(cell, grid.dims) and cell[2] == z:
            img[cell[1], cell[0]] = color

    for pos, exhausted in decision_points:
        paint(cell_of(pos, res), DARK_GRAY if exhausted else GREEN)
    for pos in trace:
        paint(cell_of(pos, res), BLUE)
    for f in frontiers:
        for c in f.cells:
            paint(c, YELLOW)
    paint(cell_of(pose.position, res), RED)
    return img


def encode_png(img: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(img)).save(buf, format="PNG")
    return buf.getvalue()


def encode_ppm(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def png_base64(img: np.ndarray) -> str:
    return base64.b64encode(encode_png(img)).decode("ascii")
