"""Dataset and image I/O: binary PGM (P5) files plus a labels.tsv index.

Images are 8-bit grayscale, stored 128x32; pixel values map linearly to
[0, 1]. Heatmaps are upsampled nearest-neighbor to the image size
before writing.
"""

import os

import numpy as np

from .errors import ConfigError
from .synth import IMAGE_H, IMAGE_W, Sample

LABELS_NAME = "labels.tsv"


def write_pgm(path, img: np.ndarray) -> None:
    """img [H, W] in [0, 1] -> binary P5 with maxval 255."""
    if img.ndim != 2:
        raise ConfigError(f"PGM image must be 2-D, got shape {img.shape}")
    h, w = img.shape
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary P5 -> [H, W] float in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise ConfigError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval; '#' comments allowed between.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ConfigError(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    pos += 1
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError:
        raise ConfigError(f"{path}: malformed PGM header fields {fields}") from None
    if maxval != 255:
        raise ConfigError(f"{path}: unsupported PGM maxval {maxval}, expected 255")
    available = len(raw) - pos
    if available < h * w:
        raise ConfigError(f"{path}: PGM payload truncated ({available} of {h * w})")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=pos)
    return pixels.reshape(h, w).astype(np.float64) / 255.0


def save_dataset(out_dir, samples) -> None:
    """Write img_XXXXX.pgm files plus labels.tsv (filename<TAB>text)."""
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    for i, sample in enumerate(samples):
        name = f"img_{i:05d}.pgm"
        write_pgm(os.path.join(out_dir, name), sample.image[0])
        lines.append(f"{name}\t{sample.text}\n")
    with open(os.path.join(out_dir, LABELS_NAME), "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def load_dataset(data_dir) -> list:
    """Read labels.tsv and its images back into samples."""
    labels_path = os.path.join(data_dir, LABELS_NAME)
    if not os.path.isfile(labels_path):
        raise ConfigError(f"missing {labels_path}")
    samples = []
    with open(labels_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ConfigError(
                    f"{labels_path} line {lineno}: expected 'filename<TAB>text', "
                    f"got {line!r}"
                )
            name, text = parts
            img = read_pgm(os.path.join(data_dir, name))
            samples.append(Sample(image=img[None, :, :], text=text))
    return samples


def write_heatmap_pgm(path, heat: np.ndarray) -> None:
    """Upsample a [H_f, W_f] heatmap in [0, 1] to 128x32 and write P5."""
    if heat.ndim != 2:
        raise ConfigError(f"heatmap must be 2-D, got shape {heat.shape}")
    h_f, w_f = heat.shape
    if IMAGE_H % h_f or IMAGE_W % w_f:
        raise ConfigError(
            f"heatmap {h_f}x{w_f} does not divide the {IMAGE_H}x{IMAGE_W} canvas"
        )
    up = np.repeat(np.repeat(heat, IMAGE_H // h_f, axis=0), IMAGE_W // w_f, axis=1)
    write_pgm(path, up)
