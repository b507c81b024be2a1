"""Synthesis of spatially sparse pulse-stream fields.

A field is an n1 x n2 grid of sensor readings built by superposing a few
scaled copies of a small elementary pattern at disjoint locations.  All
randomness is driven by explicit seeds so that synthesis is reproducible
bit-for-bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

__all__ = [
    "PulsePattern",
    "PulseSpec",
    "PulseField",
    "NoiseSpec",
    "PlacementError",
    "default_pattern",
    "synth_pulse_field",
    "add_noise",
    "sse",
    "save_field",
    "load_field",
]


class PlacementError(RuntimeError):
    """Raised when disjoint pulse placement cannot be satisfied."""


@dataclass(frozen=True)
class PulsePattern:
    """Elementary pulse shape replicated across the field.

    ``values`` is a ``side x side`` array of finite amplitudes.  The default
    pattern is the constant-1 block of side 5, which makes pulse energies
    closed-form (25 * scale^2).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise ValueError("pattern must be a square 2-D array with side >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("pattern values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def side(self) -> int:
        return self.values.shape[0]


def default_pattern(side: int = 5) -> PulsePattern:
    """Constant-1 square block."""
    return PulsePattern(np.ones((side, side)))


@dataclass(frozen=True)
class PulseSpec:
    """One placed pulse: top-left corner of its footprint plus a scale factor."""

    row: int
    col: int
    scale: float


@dataclass
class PulseField:
    """A synthesized field: grid of readings plus the pulse list behind it."""

    cells: np.ndarray
    pulses: list[PulseSpec] = dc_field(default_factory=list)

    @property
    def n1(self) -> int:
        return self.cells.shape[0]

    @property
    def n2(self) -> int:
        return self.cells.shape[1]

    def vector(self) -> np.ndarray:
        """Row-major (lexicographic) vectorization z = [z[0,:], z[1,:], ...]."""
        return self.cells.ravel(order="C")

    @staticmethod
    def from_vector(z: np.ndarray, n1: int, n2: int) -> "PulseField":
        z = np.asarray(z, dtype=float)
        if z.size != n1 * n2:
            raise ValueError(f"vector of length {z.size} does not fill a {n1}x{n2} grid")
        return PulseField(z.reshape(n1, n2).copy())

    def energy(self) -> float:
        return float(np.sum(self.cells ** 2))


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-domain white Gaussian noise with the given variance."""

    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("noise variance must be >= 0")


def synth_pulse_field(
    n1: int,
    n2: int,
    count: int,
    scale_range: tuple[float, float] = (0.5, 0.85),
    pattern: PulsePattern | None = None,
    seed: int = 0,
    max_attempts: int = 10_000,
) -> PulseField:
    """Place ``count`` disjoint scaled pattern copies uniformly at random.

    Placement uses rejection sampling: candidate top-left corners are drawn
    uniformly and rejected when the footprint would overlap an already placed
    pulse.  After ``max_attempts`` rejections a :class:`PlacementError` is
    raised.  Scales are uniform in ``scale_range``.  Deterministic per seed.
    """
    if pattern is None:
        pattern = default_pattern()
    side = pattern.side
    if n1 < side or n2 < side:
        raise ValueError(f"grid {n1}x{n2} smaller than pattern side {side}")
    if count < 0:
        raise ValueError("count must be >= 0")
    lo, hi = float(scale_range[0]), float(scale_range[1])
    if hi < lo:
        raise ValueError("scale_range must be (low, high) with low <= high")

    rng = np.random.default_rng(seed)
    occupied = np.zeros((n1, n2), dtype=bool)
    cells = np.zeros((n1, n2))
    pulses: list[PulseSpec] = []
    attempts = 0
    while len(pulses) < count:
        if attempts >= max_attempts:
            raise PlacementError(
                f"could not place {count} disjoint {side}x{side} pulses on a "
                f"{n1}x{n2} grid after {max_attempts} attempts"
            )
        attempts += 1
        r = int(rng.integers(0, n1 - side + 1))
        c = int(rng.integers(0, n2 - side + 1))
        if occupied[r : r + side, c : c + side].any():
            continue
        s = float(rng.uniform(lo, hi))
        occupied[r : r + side, c : c + side] = True
        cells[r : r + side, c : c + side] += s * pattern.values
        pulses.append(PulseSpec(r, c, s))
    return PulseField(cells, pulses)


def add_noise(y: np.ndarray, noise: NoiseSpec | float, seed: int = 0) -> np.ndarray:
    """Return ``y`` plus i.i.d. zero-mean Gaussian noise; deterministic per seed."""
    var = noise.variance if isinstance(noise, NoiseSpec) else float(noise)
    if var < 0:
        raise ValueError("noise variance must be >= 0")
    y = np.asarray(y, dtype=float)
    if var == 0:
        return y.copy()
    rng = np.random.default_rng(seed)
    return y + rng.normal(0.0, np.sqrt(var), size=y.shape)


def sse(z: np.ndarray, z_hat: np.ndarray) -> float:
    """Sum of squared component differences, (z - z_hat)^T (z - z_hat).

    This is the un-normalized quadratic error used throughout the reports
    (kept un-normalized on purpose; do not divide by the length).
    """
    z = np.asarray(z, dtype=float).ravel()
    z_hat = np.asarray(z_hat, dtype=float).ravel()
    if z.shape != z_hat.shape:
        raise ValueError(f"length mismatch: {z.shape} vs {z_hat.shape}")
    d = z - z_hat
    return float(d @ d)


def save_field(field: PulseField, csv_path: str | Path, sidecar_path: str | Path | None = None) -> None:
    """Write the grid as CSV (n1 rows of comma-separated reals) plus a JSON
    sidecar listing the pulses as {row, col, scale}."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in field.cells:
            writer.writerow([repr(v) for v in row])
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(".json")
    meta = {
        "n1": field.n1,
        "n2": field.n2,
        "pulses": [{"row": p.row, "col": p.col, "scale": p.scale} for p in field.pulses],
    }
    Path(sidecar_path).write_text(json.dumps(meta, indent=2))


def load_field(csv_path: str | Path, sidecar_path: str | Path | None = None) -> PulseField:
    csv_path = Path(csv_path)
    cells = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    pulses: list[PulseSpec] = []
    if sidecar_path is None:
        sidecar_path = csv_path.with_suffix(".json")
    sidecar_path = Path(sidecar_path)
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text())
        pulses = [PulseSpec(int(p["row"]), int(p["col"]), float(p["scale"])) for p in meta.get("pulses", [])]
    return PulseField(cells, pulses)
