"""
Single-band raster I/O.

A raster is a JSON header ``<stem>.json`` ({width, height, dtype: "f32le", nodata})
next to a flat little-endian float32 file ``<stem>.bin`` in row-major order. Masks may
also be binary PGM files (P5, maxval 255, 255 = water).
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .exceptions import DataError, DataFormatError, DimensionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class RasterHeader(BaseModel):
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    dtype: str = Field("f32le", pattern="^f32le$")
    nodata: Optional[float] = None

    @property
    def expected_bytes(self) -> int:
        return self.width * self.height * 4


@dataclass
class Raster:
    """Backscatter grid in dB, [height, width]."""

    values: np.ndarray
    nodata: Optional[float] = None
    nodata_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DimensionError("Raster values must be 2-D", op="raster", shapes={"values": self.values.shape})
        if self.nodata_mask is None and self.nodata is not None:
            self.nodata_mask = self.values == np.float32(self.nodata)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def valid_mask(self) -> np.ndarray:
        if self.nodata_mask is None:
            return np.ones(self.shape, dtype=bool)
        return ~self.nodata_mask


def raster_paths(path: PathLike) -> Tuple[Path, Path]:
    """(header, data) paths for a raster given its stem or either file."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return stem.with_name(stem.name + ".json"), stem.with_name(stem.name + ".bin")


def save_raster(path: PathLike, raster: Raster) -> Path:
    """Write header and data files; returns the header path."""
    header_path, data_path = raster_paths(path)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header = RasterHeader(width=raster.width, height=raster.height, nodata=raster.nodata)
    data_path.write_bytes(np.ascontiguousarray(raster.values, dtype="<f4").tobytes())
    header_path.write_text(header.model_dump_json(indent=2))
    logger.debug(f"Wrote {raster.height}x{raster.width} raster to {header_path}")
    return header_path


def load_raster(path: PathLike) -> Raster:
    """Read a raster; sentinel pixels populate ``nodata_mask``."""
    header_path, data_path = raster_paths(path)
    for p in (header_path, data_path):
        if not p.exists():
            raise DataError(f"Raster file not found: {p}", path=str(p))

    try:
        header = RasterHeader.model_validate(json.loads(header_path.read_text()))
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataFormatError("Raster header is malformed", path=str(header_path), original_error=e)

    actual = data_path.stat().st_size
    if actual != header.expected_bytes:
        raise DataFormatError(
            f"Raster data has {actual} bytes, header implies {header.expected_bytes}",
            path=str(data_path),
            expected_bytes=header.expected_bytes,
            actual_bytes=actual,
        )

    values = np.fromfile(data_path, dtype="<f4").reshape(header.height, header.width)
    raster = Raster(values=values.astype(np.float32), nodata=header.nodata)
    bad = ~np.isfinite(raster.values) & raster.valid_mask()
    if bad.any():
        raise DataError(
            f"Raster holds {int(bad.sum())} non-finite pixels outside the nodata mask",
            path=str(data_path),
        )
    return raster


def _pgm_tokens(raw: bytes, count: int) -> Tuple[list, int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError("Truncated PGM header")
        tokens.append(raw[start:pos])
    return tokens, pos + 1


def load_mask(path: PathLike) -> np.ndarray:
    """Binary water mask as uint8 {0, 1}; PGM (P5) or raster format (values > 0.5 are water)."""
    path = Path(path)
    if path.suffix.lower() != ".pgm":
        raster = load_raster(path)
        return (raster.values > 0.5).astype(np.uint8)

    if not path.exists():
        raise DataError(f"Mask file not found: {path}", path=str(path))
    raw = path.read_bytes()
    tokens, offset = _pgm_tokens(raw, 4)
    if tokens[0] != b"P5":
        raise DataFormatError("Only binary PGM (P5) masks are supported", path=str(path))
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise DataFormatError("PGM masks must use maxval 255", path=str(path))
    expected = width * height
    actual = len(raw) - offset
    if actual != expected:
        raise DataFormatError(
            "PGM pixel data does not match its header",
            path=str(path),
            expected_bytes=expected,
            actual_bytes=actual,
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=offset).reshape(height, width)
    return (pixels >= 128).astype(np.uint8)


def save_mask(path: PathLike, mask: np.ndarray) -> Path:
    """Write a {0,1} mask as PGM (by suffix) or in raster format."""
    path = Path(path)
    mask = np.asarray(mask)
    if path.suffix.lower() == ".pgm":
        path.parent.mkdir(parents=True, exist_ok=True)
        height, width = mask.shape
        pixels = np.where(mask > 0, 255, 0).astype(np.uint8)
        path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
        return path
    return save_raster(path, Raster(values=mask.astype(np.float32)))
