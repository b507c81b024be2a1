"""Monte-Carlo diagnostics for measurement-energy concentration.

For a fixed field z and a path partition, repeatedly redraws the Gaussian
weights (variance 1/P) and tracks the measurement energy E_y = ||Phi z||^2.
Checks of interest: the mean of E_y equals the field energy E_z, its variance
decays like 1/P, and the tail probabilities Pr{|E_y - E_z| >= delta * E_z}
shrink with P.  Deviation thresholds are interpreted relative to E_z so that
reports are comparable across fields.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sensing import PathIndexMap

__all__ = [
    "ConcentrationReport",
    "PseudoAngleMap",
    "build_pseudo_angle_map",
    "energy_stats",
    "min_projections",
    "c2_of",
    "var_bound_stated",
    "var_bound_derived",
]


@dataclass(frozen=True)
class ConcentrationReport:
    trials: int
    mean_energy: float
    var_energy: float
    field_energy: float
    deviation_prob: dict

    def to_json(self, path: str | Path | None = None) -> str:
        payload = {
            "trials": self.trials,
            "mean_energy": self.mean_energy,
            "var_energy": self.var_energy,
            "field_energy": self.field_energy,
            "deviation_prob": {repr(k): v for k, v in self.deviation_prob.items()},
        }
        text = json.dumps(payload, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass(frozen=True)
class PseudoAngleMap:
    """Partition-only stand-in for a path map with an arbitrary number of
    pseudo-projections.

    Each pseudo-projection splits the N cells into random groups of size about
    sqrt(N).  Only the each-cell-once-per-projection structure matters for the
    energy statistics, not collinearity, so this extends variance-scaling
    checks beyond the four exact angles.
    """

    n_cells: int
    groups: list  # per pseudo-projection: list of index arrays

    @property
    def p(self) -> int:
        return len(self.groups)


def build_pseudo_angle_map(n_cells: int, p: int, seed: int = 0, group_size: int | None = None) -> PseudoAngleMap:
    if n_cells < 1 or p < 1:
        raise ValueError("need n_cells >= 1 and p >= 1")
    if group_size is None:
        group_size = max(1, int(round(math.sqrt(n_cells))))
    rng = np.random.default_rng(seed)
    groups = []
    for _ in range(p):
        perm = rng.permutation(n_cells)
        groups.append([perm[i : i + group_size] for i in range(0, n_cells, group_size)])
    return PseudoAngleMap(n_cells, groups)


def _projection_groups(map_) -> tuple[int, list]:
    """Normalize either map type to (P, list of per-projection path lists)."""
    if isinstance(map_, PathIndexMap):
        return map_.angles.p, [map_.paths[a] for a in map_.angles]
    if isinstance(map_, PseudoAngleMap):
        return map_.p, map_.groups
    raise TypeError(f"unsupported map type {type(map_)!r}")


def energy_stats(
    z: np.ndarray,
    map_,
    trials: int = 10_000,
    deltas=(0.05, 0.1, 0.2, 0.5),
    seed: int = 0,
) -> ConcentrationReport:
    """Redraw the weights ``trials`` times and report E_y statistics.

    Per-trial random streams are derived deterministically from
    (seed, trial index), so results do not depend on evaluation order.
    Rejects all-zero fields: relative deviations would be undefined.
    """
    if trials < 100:
        raise ValueError("need trials >= 100 for meaningful statistics")
    z = np.asarray(z, dtype=float).ravel()
    e_z = float(z @ z)
    if e_z == 0.0:
        raise ValueError("zero field: relative deviation undefined")
    p, projections = _projection_groups(map_)
    sigma = 1.0 / math.sqrt(p)

    # Only cells with z != 0 contribute to E_y; restrict the draws to them.
    nz = np.flatnonzero(z)
    zv = z[nz]
    pos = np.empty(z.size, dtype=np.int64)
    pos[nz] = np.arange(len(nz))
    # For each projection: the path id of every nonzero cell (paths with no
    # nonzero cell produce a zero measurement and drop out of E_y).
    proj_ids = []
    for paths in projections:
        ids = np.empty(z.size, dtype=np.int64)
        for m, cells in enumerate(paths):
            ids[cells] = m
        proj_ids.append(ids[nz])
    n_paths = [len(paths) for paths in projections]

    children = np.random.SeedSequence(seed).spawn(trials)
    energies = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng(children[t])
        e = 0.0
        for ids, k in zip(proj_ids, n_paths):
            coeff = rng.normal(0.0, sigma, size=len(nz))
            sums = np.bincount(ids, weights=coeff * zv, minlength=k)
            e += float(sums @ sums)
        energies[t] = e

    dev = np.abs(energies - e_z)
    deviation_prob = {float(d): float(np.mean(dev >= d * e_z)) for d in deltas}
    return ConcentrationReport(
        trials=trials,
        mean_energy=float(energies.mean()),
        var_energy=float(energies.var(ddof=1)),
        field_energy=e_z,
        deviation_prob=deviation_prob,
    )


def min_projections(k: int, c2: float, epsilon: float, delta: float) -> int:
    """Smallest projection count satisfying the concentration bound,
    ceil(2 k^2 c2^2 ln(2/epsilon) / delta^2)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if c2 <= 0:
        raise ValueError("c2 must be > 0")
    if not 0 < epsilon < 2:
        raise ValueError("epsilon must be in (0, 2)")
    if delta <= 0:
        raise ValueError("delta must be > 0")
    return math.ceil(2.0 * k * k * c2 * c2 * math.log(2.0 / epsilon) / (delta * delta))


def c2_of(z: np.ndarray) -> float:
    """Maximum squared cell value of the field."""
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return 0.0
    return float(np.max(z * z))


def var_bound_stated(k: int, c2: float, p: int) -> float:
    """Variance bound as stated in the concentration property: K^2 C2^2 / P."""
    return k * k * c2 * c2 / p


def var_bound_derived(k: int, c2: float, p: int) -> float:
    """Variance bound from the derivation chain: 2 K^2 C2^2 / P (2x the stated
    constant; both are reported because the source is internally inconsistent)."""
    return 2.0 * k * k * c2 * c2 / p
