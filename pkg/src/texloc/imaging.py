"""Synthetic ground-texture worlds, view rendering, and image file I/O.

A world is a large float intensity field; cameras look straight down at it,
so a view is an SE(2) resampling of the field plus sensor noise. Three
procedural styles are provided: ``speckle`` (fine high-contrast grain, the
easy case), ``crack`` (streaky material with long thin dark lines), and
``blob`` (piecewise-flat patches whose interiors carry little texture).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from . import _kernels
from .errors import ImageIoError, OutOfWorldError, UnsupportedFormatError
from .geometry import Pose2D

DEFAULT_VIEW_SIZE = (640, 480)  # (width, height) in pixels

WORLD_STYLES = ("speckle", "crack", "blob")


@dataclass
class GrayImage:
    """8-bit grayscale image; pixels are row-major, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2 or self.pixels.dtype != np.uint8:
            raise ValueError("GrayImage expects a 2-D uint8 array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class TextureWorld:
    """Procedural texture field with a deterministic construction seed."""

    seed: int
    width: int
    height: int
    style: str = "speckle"
    density: float = 1.0
    contrast: float = 40.0
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.style not in WORLD_STYLES:
            raise ValueError(f"unknown world style {self.style!r}; expected one of {WORLD_STYLES}")
        if self.width < 2 or self.height < 2:
            raise ValueError("world extent must be at least 2x2 pixels")
        if self.density <= 0:
            raise ValueError("density must be positive")
        self.values = _build_field(self)


def _unit_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    """Smoothed standard-normal field, rescaled back to unit variance."""
    g = gaussian_filter(rng.standard_normal(shape), sigma, mode="reflect")
    sd = g.std()
    return g / sd if sd > 0 else g


def _build_field(world: TextureWorld) -> np.ndarray:
    rng = np.random.default_rng(world.seed)
    shape = (world.height, world.width)
    if world.style == "speckle":
        grain = _unit_noise(rng, shape, sigma=max(0.45, 1.3 / world.density))
        vals = 128.0 + world.contrast * grain
    elif world.style == "crack":
        base = 140.0 + 0.35 * world.contrast * _unit_noise(rng, shape, sigma=2.2 / world.density)
        mask = np.zeros(shape, dtype=np.float64)
        n_cracks = max(1, round(world.density * world.width * world.height / 30000.0))
        for _ in range(n_cracks):
            x = rng.uniform(0, world.width - 1)
            y = rng.uniform(0, world.height - 1)
            heading = rng.uniform(0, 2 * np.pi)
            steps = rng.integers(40, max(41, int(0.5 * min(world.width, world.height))))
            for _ in range(int(steps)):
                xi, yi = int(round(x)), int(round(y))
                if 0 <= xi < world.width and 0 <= yi < world.height:
                    mask[yi, xi] = 1.0
                heading += rng.normal(0.0, 0.18)
                x += 1.6 * np.cos(heading)
                y += 1.6 * np.sin(heading)
                if not (0 <= x < world.width and 0 <= y < world.height):
                    break
        mask = gaussian_filter(mask, 1.0, mode="constant")
        mask /= max(mask.max(), 1e-9)
        vals = base - 1.8 * world.contrast * mask
    else:  # blob
        coarse = _unit_noise(rng, shape, sigma=14.0 / world.density)
        levels = np.floor((coarse + 3.0) / 6.0 * 5.0)
        fine = _unit_noise(rng, shape, sigma=0.7)
        vals = 70.0 + 28.0 * levels + 0.18 * world.contrast * fine
    return np.clip(vals, 0.0, 255.0).astype(np.float32)


def _view_footprint(pose: Pose2D, width: int, height: int) -> np.ndarray:
    """Map-frame corner coordinates of a view's pixel lattice, shape (4, 2)."""
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    corners = np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [0.0, height - 1.0], [width - 1.0, height - 1.0]]
    )
    rot = corners @ np.array([[c, s], [-s, c]])
    return rot + np.array([pose.x, pose.y])


def render_view(
    world: TextureWorld,
    camera_pose: Pose2D,
    view_size: tuple[int, int] = DEFAULT_VIEW_SIZE,
    noise_sigma: float = 0.0,
    noise_seed: int = 0,
) -> GrayImage:
    """Render the downward view of ``world`` at ``camera_pose``.

    ``camera_pose`` maps view pixel coordinates into the world frame. World
    intensities are sampled bilinearly, Gaussian sensor noise with standard
    deviation ``noise_sigma`` is added, and the result is clamped to [0, 255].
    Raises OutOfWorldError when the footprint leaves the world extent.
    """
    vw, vh = view_size
    if vw < 1 or vh < 1:
        raise ValueError("view size must be positive")
    corners = _view_footprint(camera_pose, vw, vh)
    if (
        corners[:, 0].min() < 0.0
        or corners[:, 1].min() < 0.0
        or corners[:, 0].max() > world.width - 1.0
        or corners[:, 1].max() > world.height - 1.0
    ):
        raise OutOfWorldError(
            f"view footprint {corners.round(1).tolist()} exceeds world "
            f"{world.width}x{world.height}"
        )
    us, vs = np.meshgrid(np.arange(vw, dtype=np.float64), np.arange(vh, dtype=np.float64))
    c, s = np.cos(camera_pose.theta), np.sin(camera_pose.theta)
    xs = camera_pose.x + c * us - s * vs
    ys = camera_pose.y + s * us + c * vs
    vals = _kernels.sample_bilinear(world.values, xs.ravel(), ys.ravel()).reshape(vh, vw)
    if noise_sigma > 0:
        rng = np.random.default_rng(noise_seed)
        vals = vals + rng.normal(0.0, noise_sigma, size=vals.shape)
    return GrayImage(np.clip(np.rint(vals), 0, 255).astype(np.uint8))


def save_image(image: GrayImage, path) -> None:
    """Write a lossless 8-bit grayscale PNG."""
    try:
        Image.fromarray(image.pixels, mode="L").save(path, format="PNG")
    except OSError as exc:
        raise ImageIoError(f"cannot write image {path}: {exc}") from exc


def load_image(path) -> GrayImage:
    """Read an 8-bit grayscale image written by save_image."""
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise UnsupportedFormatError(f"{path}: expected 8-bit grayscale, got mode {im.mode!r}")
            return GrayImage(np.asarray(im, dtype=np.uint8))
    except FileNotFoundError as exc:
        raise ImageIoError(f"image file not found: {path}") from exc
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a recognizable image file") from exc
    except OSError as exc:
        raise UnsupportedFormatError(f"{path}: truncated or unreadable image ({exc})") from exc
