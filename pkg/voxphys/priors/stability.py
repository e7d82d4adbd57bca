"""
Stability prior over probabilistic occupancy grids.

An object is stable in horizontal direction s when some supported voxel lies at
or beyond its projected center of mass along s (a pivot). Support comes from
the table (layer z = 0) or from other objects directly below or leaning
sideways in the direction s. The prior is

    log P(stable) = sum_s log(1 - u_s),
    u_s = prod_i (1 - V_o(i) * P(i^s > M^s) * h_s(i)),

where the exceedance probability P(i^s > M^s) uses a normal approximation to
the weighted Bernoulli sum, and h_s is the support field.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import norm

from voxphys import config
from voxphys.errors import EmptyShape, ZeroMass
from voxphys.grid.core import (
    BinaryGrid,
    DirectionSet,
    GridFrame,
    ProbGrid,
    direction_set,
    require_same_frame,
)

logger = logging.getLogger(__name__)

INDICATOR_THRESHOLD = 0.5

# candidate lateral support offsets, fixed order for deterministic tie-breaks
_LATERAL_OFFSETS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


class StabilityParams(BaseModel):
    n_directions: int = Field(config.N_DIRECTIONS, ge=1)
    prob_clamp: float = Field(config.PROB_CLAMP, gt=0.0, lt=0.5)
    cdf_mode: Literal["step", "smooth"] = "step"
    smooth_sigma: float = Field(0.5, gt=0.0)  # voxel edges, scaled by mass
    use_indicators: bool = True
    lateral_both_sides: bool = False

    def directions(self) -> DirectionSet:
        return direction_set(self.n_directions)


# ---------- helpers ----------
def _shifted(arr: np.ndarray, offset: Tuple[int, int, int]) -> np.ndarray:
    """out[i] = arr[i + offset], zero where i + offset leaves the grid."""
    out = np.zeros_like(arr)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, max(n - o, 0)))
        else:
            src.append(slice(0, max(n + o, 0)))
            dst.append(slice(-o, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def lateral_offset(s: Sequence[float]) -> Tuple[int, int]:
    """Horizontal lattice offset whose direction is closest to s."""
    s = np.asarray(s, dtype=np.float64)
    cos = [(dx * s[0] + dy * s[1]) / np.hypot(dx, dy) for dx, dy in _LATERAL_OFFSETS]
    return _LATERAL_OFFSETS[int(np.argmax(cos))]


def support_offsets(s: Sequence[float], both_sides: bool = False) -> List[Tuple[int, int, int]]:
    """Offsets of the voxels in H_s(i): the one below, and the lateral one(s)."""
    dx, dy = lateral_offset(s)
    offsets = [(0, 0, -1), (dx, dy, 0)]
    if both_sides:
        offsets.append((-dx, -dy, 0))
    return offsets


def _support_from(values: np.ndarray, s: Sequence[float], both_sides: bool) -> np.ndarray:
    empty = np.ones_like(values, dtype=np.float64)
    for off in support_offsets(s, both_sides):
        empty = empty * (1.0 - _shifted(values, off))
    h = 1.0 - empty
    h[:, :, 0] = 1.0
    return h


# -----------------------------
#  SUPPORT / EXCEEDANCE
# -----------------------------
def support_prob(V_other: ProbGrid, s: Sequence[float], lateral_both_sides: bool = False) -> np.ndarray:
    """
    h_s(i) = 1 - prod_{i' in H_s(i)} (1 - V_other(i')), with h_s = 1 on the table
    layer z = 0. Neighbors outside the grid count as empty.
    """
    return _support_from(V_other.values, s, lateral_both_sides)


def _projection_stats(V_o: ProbGrid, s: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, float]:
    v = V_o.values
    mass = v.sum()
    if mass <= 0.0:
        raise ZeroMass("exceedance of an empty grid")
    p = V_o.frame.centers() @ np.asarray(s, dtype=np.float64)
    m = float((p * v).sum() / mass)
    mu = mass * (p - m)

    # sigma^2_i = sum_j (p_i - p_j)^2 w_j, expanded around the w-weighted mean
    w = v * (1.0 - v)
    q = w.sum()
    if q > 0.0:
        m_w = (p * w).sum() / q
        var = q * (p - m_w) ** 2 + (w * (p - m_w) ** 2).sum()
    else:
        var = np.zeros_like(p)
    return mu, np.sqrt(np.maximum(var, 0.0)), float(mass)


def exceedance_field(V_o: ProbGrid, s: Sequence[float], params: Optional[StabilityParams] = None) -> np.ndarray:
    """P(i^s > M^s) for every voxel i, normal approximation with exact ties at sigma = 0."""
    params = params or StabilityParams()
    mu, sigma, mass = _projection_stats(V_o, s)
    frame = V_o.frame
    scale = np.abs(np.asarray(frame.origin)).max() + max(frame.dims) * frame.voxel_size
    tie_tol = 1e-12 * mass * scale

    if params.cdf_mode == "smooth":
        sigma = np.maximum(sigma, params.smooth_sigma * frame.voxel_size * mass)

    step = np.where(mu > tie_tol, 1.0, np.where(mu < -tie_tol, 0.0, 0.5))
    degenerate = sigma <= tie_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(degenerate, 0.0, mu / np.where(degenerate, 1.0, sigma))
    return np.where(degenerate, step, norm.cdf(z))


def com_exceedance_prob(V_o: ProbGrid, i: Sequence[int], s: Sequence[float], params: Optional[StabilityParams] = None) -> float:
    return float(exceedance_field(V_o, s, params)[tuple(int(c) for c in i)])


def _direction_terms(
    V_o: ProbGrid, V_other: ProbGrid, params: StabilityParams
) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """(s, exceedance field, support field) for every direction."""
    require_same_frame(V_o, V_other)
    for s in params.directions():
        yield s, exceedance_field(V_o, s, params), _support_from(V_other.values, s, params.lateral_both_sides)


# -----------------------------
#  LOG PROBABILITY / GRADIENT
# -----------------------------
def direction_log_probs(V_o: ProbGrid, V_other: ProbGrid, params: Optional[StabilityParams] = None) -> np.ndarray:
    """log(1 - u_s) per direction, floored at log(prob_clamp)."""
    params = params or StabilityParams()
    out = []
    for _, P, h in _direction_terms(V_o, V_other, params):
        with np.errstate(divide="ignore"):
            log_u = np.log1p(-(V_o.values * P * h)).sum()
        stable = -np.expm1(log_u)
        out.append(np.log(max(stable, params.prob_clamp)))
    return np.array(out)


def stability_log_prob(V_o: ProbGrid, V_other: ProbGrid, params: Optional[StabilityParams] = None) -> float:
    return float(direction_log_probs(V_o, V_other, params).sum())


def _products_excluding_self(factors: np.ndarray) -> np.ndarray:
    """prod_{j != i} factors[j] for every i, exact when some factors are zero."""
    zero = factors <= 0.0
    n_zero = int(zero.sum())
    logs = np.log(np.where(zero, 1.0, factors))
    total = logs.sum()
    if n_zero == 0:
        return np.exp(total - logs)
    if n_zero == 1:
        return np.where(zero, np.exp(total), 0.0)
    return np.zeros_like(factors)


def stability_gradient(V_o: ProbGrid, V_other: ProbGrid, params: Optional[StabilityParams] = None) -> np.ndarray:
    """
    d log P(stable) / d V_o(i).

    The exceedance probabilities are held fixed. With use_indicators, every
    voxel other than i enters the product through 1{V_o >= 0.5} and the support
    through 1{V_other >= 0.5}, which keeps the products from underflowing.
    """
    params = params or StabilityParams()
    v = V_o.values
    if params.use_indicators:
        b = (v >= INDICATOR_THRESHOLD).astype(np.float64)
        support_values = (V_other.values >= INDICATOR_THRESHOLD).astype(np.float64)
    else:
        b = v
        support_values = V_other.values

    grad = np.zeros_like(v)
    for s, P, _ in _direction_terms(V_o, V_other, params):
        h = _support_from(support_values, s, params.lateral_both_sides)
        others = _products_excluding_self(1.0 - b * P * h)
        stable = 1.0 - (1.0 - v * P * h) * others
        grad += P * h * others / np.maximum(stable, params.prob_clamp)
    return grad


# -----------------------------
#  BINARY EQUILIBRIUM CHECK
# -----------------------------
@dataclass
class EquilibriumReport:
    stable: bool
    directions: np.ndarray
    failing: List[int] = field(default_factory=list)

    @property
    def failing_angles_deg(self) -> List[float]:
        angles = np.degrees(DirectionSet(self.directions).angles)
        return [float(angles[j]) for j in self.failing]

    def to_dict(self) -> Dict:
        return {
            "stable": self.stable,
            "failing_directions": list(self.failing),
            "failing_angles_deg": [round(a, 6) for a in self.failing_angles_deg],
        }


def check_static_equilibrium(
    v: BinaryGrid, support: BinaryGrid, params: Optional[StabilityParams] = None
) -> EquilibriumReport:
    """
    Stable iff in every direction some supported voxel of v lies at or beyond
    the projected center of mass (inclusive at ties).
    """
    params = params or StabilityParams()
    frame = require_same_frame(v, support)
    if v.count == 0:
        raise EmptyShape("equilibrium check of an empty shape")
    dirs = params.directions()
    centers = frame.centers()
    tol = 1e-9 * frame.voxel_size
    support_values = support.bits.astype(np.float64)

    failing = []
    for j, s in enumerate(dirs):
        p = centers @ s
        m = p[v.bits].mean()
        supported = _support_from(support_values, s, params.lateral_both_sides) > 0.0
        if not np.any(v.bits & supported & (p >= m - tol)):
            failing.append(j)

    report = EquilibriumReport(stable=not failing, directions=dirs.directions, failing=failing)
    logger.debug("Equilibrium check: stable=%s, %d failing directions", report.stable, len(failing))
    return report
