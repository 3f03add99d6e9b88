"""Forged-image construction with ground-truth masks.

Two attack types: self copy-move (optionally flipped and stretched or
compressed via bilinear resampling) and multi-source splice from an
image produced by a different scanner.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import GeometryError
from .synthscan import jpeg_roundtrip

MIN_FORGED_SIZE = 64  # smaller regions never fully contain an analysis window


@dataclass(frozen=True)
class Rect:
    row0: int
    col0: int
    height: int
    width: int

    def crop(self, image):
        return image[self.row0:self.row0 + self.height,
                     self.col0:self.col0 + self.width]

    def in_bounds(self, shape):
        return (self.row0 >= 0 and self.col0 >= 0 and
                self.height > 0 and self.width > 0 and
                self.row0 + self.height <= shape[0] and
                self.col0 + self.width <= shape[1])


@dataclass
class Transform:
    hflip: bool = False
    scale_x: float = 1.0
    scale_y: float = 1.0


@dataclass
class ForgeryRecord:
    forged: np.ndarray
    truth_mask: np.ndarray
    kind: str                    # "self_copy" | "multi_source"
    src_rect: Rect
    dst_rect: Rect
    transform: Transform = None
    donor: str = None
    warnings: list = field(default_factory=list)


def _check_rects(image, src_rect, dst_rect, donor=None):
    src_host = donor if donor is not None else image
    if not src_rect.in_bounds(src_host.shape):
        raise GeometryError(f"source rect {src_rect} outside image bounds")
    if not dst_rect.in_bounds(image.shape):
        raise GeometryError(f"destination rect {dst_rect} outside image bounds")
    if dst_rect.height < MIN_FORGED_SIZE or dst_rect.width < MIN_FORGED_SIZE:
        raise GeometryError(
            f"forged region must be at least {MIN_FORGED_SIZE}x"
            f"{MIN_FORGED_SIZE}, got {dst_rect.height}x{dst_rect.width}")


def _mask_for(image, dst_rect):
    mask = np.zeros(image.shape[:2], dtype=np.uint8)
    mask[dst_rect.row0:dst_rect.row0 + dst_rect.height,
         dst_rect.col0:dst_rect.col0 + dst_rect.width] = 1
    return mask


def self_copy_move(image, src_rect, dst_rect, transform=None, jpeg_quality=None):
    """Copy src_rect within the image onto dst_rect.

    The source region is optionally h-flipped, then bilinearly resampled
    to the destination size (stretch/compress factors are recorded in the
    transform). jpeg_quality, when given, recompresses the whole result.
    """
    _check_rects(image, src_rect, dst_rect)
    hflip = bool(transform.hflip) if transform else False
    region = src_rect.crop(image)
    if hflip:
        region = region[:, ::-1]
    if (src_rect.height, src_rect.width) != (dst_rect.height, dst_rect.width):
        region = np.asarray(Image.fromarray(np.ascontiguousarray(region)).resize(
            (dst_rect.width, dst_rect.height), Image.BILINEAR))
    forged = image.copy()
    forged[dst_rect.row0:dst_rect.row0 + dst_rect.height,
           dst_rect.col0:dst_rect.col0 + dst_rect.width] = region
    if jpeg_quality is not None:
        forged = jpeg_roundtrip(forged, jpeg_quality)
    tf = Transform(hflip,
                   dst_rect.width / src_rect.width,
                   dst_rect.height / src_rect.height)
    return ForgeryRecord(forged, _mask_for(image, dst_rect), "self_copy",
                         src_rect, dst_rect, tf)


def splice_from_other(image, donor, src_rect, dst_rect, donor_id=None,
                      same_label=False, jpeg_quality=None):
    """Paste a donor-image region (byte-for-byte) onto dst_rect.

    donor is expected to come from a different scanner; same_label=True
    records a usage warning instead of failing (ablation hook).
    """
    _check_rects(image, src_rect, dst_rect, donor=donor)
    if (src_rect.height, src_rect.width) != (dst_rect.height, dst_rect.width):
        raise GeometryError(
            "splice source and destination rects must be the same size, got "
            f"{src_rect.height}x{src_rect.width} vs "
            f"{dst_rect.height}x{dst_rect.width}")
    forged = image.copy()
    forged[dst_rect.row0:dst_rect.row0 + dst_rect.height,
           dst_rect.col0:dst_rect.col0 + dst_rect.width] = src_rect.crop(donor)
    warnings = []
    if same_label:
        warnings.append("donor has the same scanner label as the target image")
    if jpeg_quality is not None:
        forged = jpeg_roundtrip(forged, jpeg_quality)
    return ForgeryRecord(forged, _mask_for(image, dst_rect), "multi_source",
                         src_rect, dst_rect, Transform(), donor_id, warnings)


def save_forgery(record, out_prefix):
    """Write <prefix>.png, <prefix>_mask.png (1-bit) and <prefix>.json."""
    Image.fromarray(record.forged).save(out_prefix + ".png")
    Image.fromarray(record.truth_mask * 255).convert("1").save(
        out_prefix + "_mask.png")
    tf = record.transform
    sidecar = {
        "kind": record.kind,
        "src_rect": [record.src_rect.row0, record.src_rect.col0,
                     record.src_rect.height, record.src_rect.width],
        "dst_rect": [record.dst_rect.row0, record.dst_rect.col0,
                     record.dst_rect.height, record.dst_rect.width],
        "transform": {"hflip": tf.hflip, "scale_x": tf.scale_x,
                      "scale_y": tf.scale_y} if tf else None,
        "donor": record.donor,
        "warnings": record.warnings,
    }
    with open(out_prefix + ".json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
