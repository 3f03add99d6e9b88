"""Synthetic flatbed-scanner simulator.

Each simulated device owns a deterministic noise fingerprint: a fixed
multiplicative per-pixel gain field (PRNU-like), per-channel color-response
gains (white-balance differences between devices), a periodic per-scanline
additive offset profile (line-sensor noise, tiled vertically), a scalar
black-level offset (lamp/calibration differences), white readout noise,
and a device-specific JPEG quality. Rendering a content
image through a fingerprint yields a "scanned" image whose residual
statistics identify the device, which is exactly the signal the patch
classifier has to learn.
"""

import io
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .dataio import DatasetManifest, save_image, split_dataset
from .errors import DataError, ParameterError, SizeError

GAIN_CANVAS = 512     # gain field is generated once at this size and tiled
ROW_PERIOD = 16       # scanline offset profile length (rows), tiled vertically
COL_PERIOD = 16       # sensor-column offset profile length (cols), tiled
JPEG_QUALITY_MIN = 70
JPEG_QUALITY_MAX = 95


@dataclass
class ScannerFingerprint:
    label_id: int
    seed: int
    sigma_gain: float
    sigma_row: float
    readout_std: float
    jpeg_quality: int
    gain_field: np.ndarray = field(repr=False, default=None)  # (GAIN_CANVAS,)^2
    row_profile: np.ndarray = field(repr=False, default=None)  # (ROW_PERIOD,)
    col_profile: np.ndarray = field(repr=False, default=None)  # (COL_PERIOD,)
    rgb_gain: np.ndarray = field(repr=False, default=None)     # (3,)
    black_level: float = 0.0                                   # gray levels

    def gain_at(self, h, w):
        reps = (-(-h // GAIN_CANVAS), -(-w // GAIN_CANVAS))
        return np.tile(self.gain_field, reps)[:h, :w]

    def row_offsets(self, h):
        reps = -(-h // ROW_PERIOD)
        return np.tile(self.row_profile, reps)[:h]

    def col_offsets(self, w):
        reps = -(-w // COL_PERIOD)
        return np.tile(self.col_profile, reps)[:w]


def make_fingerprint(label_id, seed, sigma_gain=0.08, sigma_row=16.0,
                     readout_std=1.0, sigma_rgb=0.15, sigma_black=8.0,
                     sigma_col=16.0):
    """Deterministic per-device fingerprint; same (label, seed) -> same fields."""
    if min(sigma_gain, sigma_row, readout_std, sigma_rgb, sigma_black,
           sigma_col) < 0:
        raise ParameterError("noise standard deviations must be >= 0")
    rng = np.random.default_rng([int(seed), int(label_id)])
    gain = 1.0 + rng.standard_normal((GAIN_CANVAS, GAIN_CANVAS)) * sigma_gain
    if sigma_gain > 0:
        gain = np.clip(gain, 1 - 5 * sigma_gain, 1 + 5 * sigma_gain)
    profile = rng.standard_normal(ROW_PERIOD) * sigma_row
    col_profile = rng.standard_normal(COL_PERIOD) * sigma_col
    rgb = 1.0 + rng.standard_normal(3) * sigma_rgb
    if sigma_rgb > 0:
        rgb = np.clip(rgb, 1 - 3 * sigma_rgb, 1 + 3 * sigma_rgb)
    black = float(rng.standard_normal() * sigma_black)
    # qualities spread deterministically over [70, 95] so devices differ
    span = JPEG_QUALITY_MAX - JPEG_QUALITY_MIN + 1
    quality = JPEG_QUALITY_MIN + (int(label_id) * 7) % span
    return ScannerFingerprint(int(label_id), int(seed), sigma_gain, sigma_row,
                              readout_std, quality, gain, profile, col_profile,
                              rgb, black)


def jpeg_roundtrip(img, quality):
    """Encode/decode an (H, W, 3) uint8 array as JPEG in memory."""
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    return np.asarray(Image.open(buf).convert("RGB"), dtype=np.uint8)


def render_scan(content, fp, rng_seed, lossless=False):
    """Push a content image through a scanner fingerprint.

    out = JPEG_q(clip(content * gain * rgb_gain + row_offsets + col_offsets
    + black_level + white_noise));
    lossless=True skips the JPEG stage (test hook).
    """
    h, w = content.shape[:2]
    if h < 64 or w < 64:
        raise SizeError(f"content {h}x{w} is smaller than 64x64")
    rng = np.random.default_rng(rng_seed)
    out = content.astype(np.float64) * fp.gain_at(h, w)[:, :, None]
    if fp.rgb_gain is not None:
        out *= fp.rgb_gain[None, None, :]
    out += fp.row_offsets(h)[:, None, None] + fp.black_level
    if fp.col_profile is not None:
        out += fp.col_offsets(w)[None, :, None]
    if fp.readout_std > 0:
        out += rng.normal(0.0, fp.readout_std, size=content.shape)
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if lossless:
        return out
    return jpeg_roundtrip(out, fp.jpeg_quality)


def _gradient_content(rng, size):
    y, x = np.mgrid[0:size, 0:size] / (size - 1)
    angle = rng.uniform(0, 2 * np.pi)
    t = np.cos(angle) * x + np.sin(angle) * y
    t = (t - t.min()) / (t.max() - t.min() + 1e-12)
    lo = rng.uniform(40, 110, size=3)
    hi = rng.uniform(150, 220, size=3)
    return lo[None, None, :] + t[:, :, None] * (hi - lo)[None, None, :]


def _blob_content(rng, size):
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.full((size, size, 3), rng.uniform(90, 170))
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, size, 2)
        sig = rng.uniform(size / 10, size / 3)
        amp = rng.uniform(-70, 70, size=3)
        g = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * sig ** 2))
        img += g[:, :, None] * amp[None, None, :]
    return img


def _glyph_content(rng, size):
    img = np.full((size, size, 3), rng.uniform(190, 225))
    row = 8
    while row < size - 12:
        col = 8
        glyph_h = int(rng.integers(6, 12))
        while col < size - 12:
            glyph_w = int(rng.integers(3, 10))
            if rng.random() < 0.75:
                shade = rng.uniform(20, 90)
                img[row:row + glyph_h, col:col + glyph_w] = shade
            col += glyph_w + int(rng.integers(2, 6))
        row += glyph_h + int(rng.integers(4, 10))
    return img


def procedural_content(seed, index, size):
    """Deterministic synthetic page: gradient, blob mixture, or glyph rows."""
    rng = np.random.default_rng([int(seed), int(index)])
    kind = index % 3
    if kind == 0:
        img = _gradient_content(rng, size)
    elif kind == 1:
        img = _blob_content(rng, size)
    else:
        img = _glyph_content(rng, size)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@dataclass
class SynthConfig:
    num_scanners: int = 8
    images_per_scanner: int = 60
    seed: int = 0
    image_size: int = 192
    sigma_gain: float = 0.08
    sigma_row: float = 16.0
    readout_std: float = 1.0
    sigma_rgb: float = 0.15
    sigma_black: float = 8.0
    sigma_col: float = 16.0
    content_dir: str = None
    ratios: tuple = (6, 1, 3)


def build_synthetic_dataset(cfg, out_dir):
    """Render a labeled dataset and write images + manifest under out_dir.

    Deterministic: the same config always produces byte-identical images
    and manifest. Returns the DatasetManifest (also saved as
    out_dir/manifest.txt with paths relative to out_dir).
    """
    if cfg.num_scanners < 2:
        raise ParameterError("need at least 2 scanners")
    if cfg.images_per_scanner < 10:
        raise ParameterError("need at least 10 images per scanner")
    contents = None
    if cfg.content_dir:
        from .dataio import load_image
        names = sorted(os.listdir(cfg.content_dir))
        if not names:
            raise DataError(f"content directory {cfg.content_dir} is empty")
        contents = [load_image(os.path.join(cfg.content_dir, n)) for n in names]

    os.makedirs(out_dir, exist_ok=True)
    images_by_label = {}
    idx = 0
    for sid in range(cfg.num_scanners):
        fp = make_fingerprint(sid, cfg.seed, cfg.sigma_gain, cfg.sigma_row,
                              cfg.readout_std, cfg.sigma_rgb, cfg.sigma_black,
                              cfg.sigma_col)
        name = f"scanner{sid:02d}"
        paths = []
        for i in range(cfg.images_per_scanner):
            if contents is not None:
                src = contents[idx % len(contents)]
                if src.shape[0] < cfg.image_size or src.shape[1] < cfg.image_size:
                    raise SizeError("content image smaller than requested size")
                content = src[:cfg.image_size, :cfg.image_size]
            else:
                content = procedural_content(cfg.seed, idx, cfg.image_size)
            rendered = render_scan(content, fp, rng_seed=[cfg.seed, sid, i],
                                   lossless=True)
            rel = f"{name}_{i:03d}.jpg"
            save_image(rendered, os.path.join(out_dir, rel),
                       jpeg_quality=fp.jpeg_quality)
            paths.append(rel)
            idx += 1
        images_by_label[name] = paths

    manifest = split_dataset(images_by_label, cfg.ratios, cfg.seed)
    manifest.save(os.path.join(out_dir, "manifest.txt"))
    return manifest
