"""RF to B-mode conversion, volume assembly, peak search and CNR.

Rasters on disk are little-endian float32 with a JSON sidecar holding the
shape and spacings; images can also be exported as 8-bit PGM.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import hilbert

from .errors import AllZeroFrame, RasterError, ShapeMismatch, ZeroBackgroundVariance


@dataclass(frozen=True, eq=False)
class RfFrame:
    """Raw echo data, rows are axial samples and columns are scan lines."""

    samples: np.ndarray
    axial_spacing: float  # mm per sample
    lateral_spacing: float  # mm per line

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or min(s.shape) < 1:
            raise ValueError("RF frame must be a non-empty 2-D array")
        if self.axial_spacing <= 0 or self.lateral_spacing <= 0:
            raise ValueError("spacings must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def shape(self) -> tuple:
        return self.samples.shape


@dataclass(frozen=True, eq=False)
class UsVolume:
    frames: np.ndarray  # (n_frames, rows, cols)
    frame_spacing: float  # mm, elevational

    def __post_init__(self):
        if self.frame_spacing <= 0:
            raise ValueError("frame spacing must be positive")

    @property
    def extent(self) -> float:
        """Elevational distance between the first and last frame (mm)."""
        return (self.frames.shape[0] - 1) * self.frame_spacing


@dataclass(frozen=True)
class Roi:
    row0: int
    col0: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.row0 < 0 or self.col0 < 0:
            raise ValueError("ROI must have a non-negative origin and positive size")

    def check(self, shape) -> None:
        if self.row0 + self.rows > shape[0] or self.col0 + self.cols > shape[1]:
            raise ValueError(f"ROI {self} exceeds image of shape {tuple(shape)}")

    def slice(self, image: np.ndarray) -> np.ndarray:
        self.check(image.shape)
        return image[self.row0 : self.row0 + self.rows, self.col0 : self.col0 + self.cols]

    @classmethod
    def centered(cls, row: float, col: float, half: int, shape) -> Roi:
        """Square ROI of side ``2*half+1`` around (row, col), shifted to fit inside ``shape``."""
        side = 2 * half + 1
        r0 = int(np.clip(round(row) - half, 0, shape[0] - side))
        c0 = int(np.clip(round(col) - half, 0, shape[1] - side))
        return cls(r0, c0, side, side)


def hilbert_envelope(line, axis: int = -1) -> np.ndarray:
    """Magnitude of the analytic signal.

    The analytic signal is built in the frequency domain over the full
    length without windowing, so the first and last carrier periods carry
    edge effects.
    """
    x = np.asarray(line, dtype=float)
    if x.shape[axis] < 2:
        raise ValueError("need at least two samples")
    return np.abs(hilbert(x, axis=axis))


def bmode(frame: RfFrame | np.ndarray, dynamic_range_db: float = 60.0, reference: float | None = None) -> np.ndarray:
    """Log-compressed envelope mapped to [0, 1].

    Normalised by the frame's own envelope maximum unless ``reference`` (a
    volume-wide maximum, say) is given.
    """
    if dynamic_range_db <= 0:
        raise ValueError("dynamic range must be positive")
    rf = frame.samples if isinstance(frame, RfFrame) else np.asarray(frame, dtype=float)
    env = hilbert_envelope(rf, axis=0)
    return _compress(env, float(env.max()) if reference is None else float(reference), dynamic_range_db)


def _compress(env: np.ndarray, top: float, dynamic_range_db: float) -> np.ndarray:
    if top <= 0.0:
        raise AllZeroFrame("envelope is identically zero")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(env / top)
    db = np.clip(db, -dynamic_range_db, 0.0)
    return (db + dynamic_range_db) / dynamic_range_db


def bmode_volume(frames: Sequence[RfFrame], spacing: float, dynamic_range_db: float = 60.0) -> UsVolume:
    """B-mode volume normalised by the envelope maximum over all frames."""
    env = assemble_volume(frames, spacing).frames
    env = hilbert_envelope(env, axis=1)
    return UsVolume(_compress(env, float(env.max()), dynamic_range_db), float(spacing))


def assemble_volume(frames: Sequence, spacing: float) -> UsVolume:
    """Stack frames (RF frames or 2-D images) in acquisition order."""
    if len(frames) == 0:
        raise ShapeMismatch("no frames")
    arrs = [f.samples if isinstance(f, RfFrame) else np.asarray(f, dtype=float) for f in frames]
    shape = arrs[0].shape
    for i, a in enumerate(arrs):
        if a.shape != shape:
            raise ShapeMismatch(f"frame {i} has shape {a.shape}, expected {shape}")
    return UsVolume(np.stack(arrs), float(spacing))


def locate_peak(volume: UsVolume | np.ndarray) -> tuple[int, int, int, float]:
    """Global maximum as (frame, row, col, value); ties go to the first in C order."""
    v = volume.frames if isinstance(volume, UsVolume) else np.asarray(volume)
    if v.size == 0:
        raise ValueError("empty volume")
    k = int(np.argmax(v))
    f, r, c = np.unravel_index(k, v.shape)
    return int(f), int(r), int(c), float(v[f, r, c])


def cnr(image: np.ndarray, target: Roi, background: Roi) -> float:
    """|m_t - m_b| / sigma_b with the population standard deviation of the background."""
    image = np.asarray(image, dtype=float)
    t = target.slice(image)
    b = background.slice(image)
    sb = float(np.std(b))
    if sb == 0.0:
        raise ZeroBackgroundVariance("background ROI has zero variance")
    return abs(float(np.mean(t)) - float(np.mean(b))) / sb


# raster I/O


def write_raster(path, data: np.ndarray, **spacings) -> tuple[Path, Path]:
    """``path.f32`` plus ``path.json``; 2-D data is written as a single frame."""
    path = Path(path)
    a = np.asarray(data, dtype="<f4")
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise RasterError("raster must be 2-D or 3-D")
    raw = path.with_suffix(".f32")
    side = path.with_suffix(".json")
    raw.write_bytes(a.tobytes(order="C"))
    meta = {"frames": a.shape[0], "rows": a.shape[1], "cols": a.shape[2], "spacings": dict(sorted(spacings.items()))}
    side.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return raw, side


def read_raster(path) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`write_raster`; returns a (frames, rows, cols) float64 array."""
    path = Path(path)
    raw = path.with_suffix(".f32")
    side = path.with_suffix(".json")
    try:
        meta = json.loads(side.read_text())
        shape = (int(meta["frames"]), int(meta["rows"]), int(meta["cols"]))
        buf = raw.read_bytes()
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise RasterError(f"cannot read raster {path}: {exc}") from exc
    if len(buf) != 4 * shape[0] * shape[1] * shape[2]:
        raise RasterError(f"{raw} holds {len(buf)} bytes, sidecar says {shape}")
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(float), meta


def write_pgm(path, image: np.ndarray, lo: float | None = None, hi: float | None = None) -> Path:
    """8-bit binary PGM, linearly scaled from [lo, hi] (default: data range)."""
    img = np.asarray(image, dtype=float)
    lo = float(img.min()) if lo is None else lo
    hi = float(img.max()) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    px = np.clip(np.round((img - lo) * scale), 0, 255).astype(np.uint8)
    path = Path(path)
    header = f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode()
    path.write_bytes(header + px.tobytes())
    return path
