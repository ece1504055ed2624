"""PGM emission and terminal rendering for grayscale frames."""

from __future__ import annotations

import numpy as np

from .curriculum import SIDE

ASCII_RAMP = " .o#"


def pgm_bytes(img: np.ndarray) -> bytes:
    """Binary P5 with maxval 255; byte value is round(255 * v)."""
    img = np.atleast_2d(np.asarray(img, dtype=np.float32))
    if img.size == SIDE * SIDE and img.shape != (SIDE, SIDE):
        img = img.reshape(SIDE, SIDE)
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    return b"P5\n%d %d\n255\n" % (w, h) + data.tobytes()


def write_pgm(img: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(img))


def tile_grid(images, cols: int) -> np.ndarray:
    """Lay 28x28 frames out in a grid with 1px separators."""
    images = [np.asarray(im, dtype=np.float32).reshape(SIDE, SIDE) for im in images]
    rows = (len(images) + cols - 1) // cols
    grid = np.full((rows * (SIDE + 1) + 1, cols * (SIDE + 1) + 1), 0.25, dtype=np.float32)
    for k, im in enumerate(images):
        r, c = divmod(k, cols)
        grid[1 + r * (SIDE + 1): 1 + r * (SIDE + 1) + SIDE,
             1 + c * (SIDE + 1): 1 + c * (SIDE + 1) + SIDE] = im
    return grid


def ascii_frame(img: np.ndarray) -> str:
    """Four-level character rendering for the interactive console."""
    img = np.asarray(img, dtype=np.float32).reshape(SIDE, SIDE)
    levels = np.clip((img * len(ASCII_RAMP)).astype(int), 0, len(ASCII_RAMP) - 1)
    return "\n".join("".join(ASCII_RAMP[v] for v in row) for row in levels)
