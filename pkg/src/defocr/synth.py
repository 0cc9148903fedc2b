"""Synthetic word-image generator.

Words are stamped with the embedded 5x7 font into a 32x128 canvas
(7 px cell advance, 3 px left margin, vertically centered), then pushed
through a fixed distortion order: integer horizontal jitter, shear
slant, clamped Gaussian noise, contrast scaling. Every distortion draw
happens even when its magnitude is zero, so rng consumption (and thus
determinism per (word, seed)) never depends on the config values.
"""

from dataclasses import dataclass

import numpy as np

from .alphabet import MAX_LEN
from .errors import ConfigError, RefusalError
from .font import GLYPH_H, GLYPH_W, GLYPHS
from .rng import SplitMix64

IMAGE_H = 32
IMAGE_W = 128
CELL_ADVANCE = GLYPH_W + 2
LEFT_MARGIN = 3
TOP_ROW = (IMAGE_H - GLYPH_H) // 2


@dataclass(frozen=True)
class DistortConfig:
    jitter: int = 3
    shear: float = 0.25
    noise_sigma: float = 0.1
    contrast_lo: float = 0.6
    contrast_hi: float = 1.0

    def __post_init__(self) -> None:
        if self.jitter < 0:
            raise ConfigError(f"jitter must be nonnegative, got {self.jitter}")
        if not 0.0 <= self.shear:
            raise ConfigError(f"shear must be nonnegative, got {self.shear}")
        if not 0.0 <= self.noise_sigma <= 0.15:
            raise ConfigError(
                f"noise_sigma must be in [0, 0.15], got {self.noise_sigma}"
            )
        if not 0.0 < self.contrast_lo <= self.contrast_hi <= 1.0:
            raise ConfigError(
                f"need 0 < contrast_lo <= contrast_hi <= 1, got "
                f"[{self.contrast_lo}, {self.contrast_hi}]"
            )


CLEAN = DistortConfig(jitter=0, shear=0.0, noise_sigma=0.0, contrast_lo=1.0, contrast_hi=1.0)


@dataclass
class Sample:
    image: np.ndarray
    text: str


def render_clean(word: str) -> np.ndarray:
    """Undistorted glyph stamp of the word, [32, 128] in {0, 1}."""
    folded = word.casefold()
    if not folded:
        raise RefusalError("cannot render an empty word")
    if len(folded) > MAX_LEN:
        raise RefusalError(
            f"word {word!r} has {len(folded)} characters, limit is {MAX_LEN}"
        )
    canvas = np.zeros((IMAGE_H, IMAGE_W))
    x = LEFT_MARGIN
    for c in folded:
        if c not in GLYPHS:
            raise RefusalError(f"character {c!r} is not in the alphabet")
        canvas[TOP_ROW : TOP_ROW + GLYPH_H, x : x + GLYPH_W] = GLYPHS[c]
        x += CELL_ADVANCE
    return canvas


def _shift_columns(img: np.ndarray, dx: int) -> np.ndarray:
    if dx == 0:
        return img
    out = np.zeros_like(img)
    if dx > 0:
        out[:, dx:] = img[:, :-dx]
    else:
        out[:, :dx] = img[:, -dx:]
    return out


def _shear_rows(img: np.ndarray, slant: float) -> np.ndarray:
    """Shift row y horizontally by slant*(y - center), linear resampling."""
    if slant == 0.0:
        return img
    h, w = img.shape
    center = (h - 1) / 2.0
    cols = np.arange(w, dtype=np.float64)
    out = np.empty_like(img)
    for y in range(h):
        src = cols - slant * (y - center)
        out[y] = np.interp(src, cols, img[y], left=0.0, right=0.0)
    return out


def synth_render(word: str, rng: SplitMix64, distort: DistortConfig = DistortConfig()) -> Sample:
    """Deterministic distorted render of the word for a given rng state."""
    canvas = render_clean(word)
    dx = rng.randint(2 * distort.jitter + 1) - distort.jitter
    canvas = _shift_columns(canvas, dx)
    slant = rng.uniform_in(-distort.shear, distort.shear)
    canvas = _shear_rows(canvas, slant)
    noise = rng.normals(canvas.shape)
    canvas = np.clip(canvas + distort.noise_sigma * noise, 0.0, 1.0)
    contrast = rng.uniform_in(distort.contrast_lo, distort.contrast_hi)
    canvas = canvas * contrast
    return Sample(image=canvas[None, :, :], text=word.casefold())


def make_dataset(words, count: int, seed: int, distort: DistortConfig = DistortConfig()) -> list:
    """count samples, words drawn uniformly, one derived rng stream each."""
    if not words:
        raise RefusalError("need at least one word to build a dataset")
    root = SplitMix64(seed)
    samples = []
    for i in range(count):
        rng = root.derive(i)
        word = words[rng.randint(len(words))]
        samples.append(synth_render(word, rng, distort))
    return samples
