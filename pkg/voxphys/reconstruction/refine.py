"""
Projected gradient ascent of occupancy grids under the stability and
connectivity priors. Only occluded voxels are ever written.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from tqdm import tqdm

from voxphys import config
from voxphys.errors import EmptyShape, NoAnchors
from voxphys.grid.core import (
    BinaryGrid,
    ProbGrid,
    binarize,
    combine_others,
    connected_components,
    require_same_frame,
)
from voxphys.priors.connectivity import (
    ConnectivityParams,
    connectivity_anchors,
    connectivity_gradient,
    connectivity_log_prob,
)
from voxphys.priors.stability import (
    StabilityParams,
    check_static_equilibrium,
    stability_gradient,
    stability_log_prob,
)

logger = logging.getLogger(__name__)

# prior weights (w_stability, w_connectivity) of the named configurations
PRESETS = {
    "full": (1.0, 1.0),
    "stability_only": (1.0, 0.0),
    "connectivity_only": (0.0, 1.0),
    "no_priors": (0.0, 0.0),
}


class RefineParams(BaseModel):
    step: float = Field(0.1, gt=0.0)
    iterations: int = Field(50, ge=0)
    w_stability: float = Field(1.0, ge=0.0)
    w_connectivity: float = Field(1.0, ge=0.0)
    clamp: Tuple[float, float] = (1e-4, 1.0 - 1e-4)
    stop_tol: float = Field(1e-5, ge=0.0)
    max_halvings: int = Field(5, ge=0)
    stability: StabilityParams = Field(default_factory=StabilityParams)
    connectivity: ConnectivityParams = Field(default_factory=ConnectivityParams)
    progress: bool = config.PROGRESS

    @model_validator(mode="after")
    def _check_clamp(self):
        lo, hi = self.clamp
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"clamp must satisfy 0 <= lo < hi <= 1, got {self.clamp}")
        return self

    @classmethod
    def preset(cls, name: str, **overrides) -> "RefineParams":
        """Params with the prior weights of a named configuration; no_priors leaves the grid untouched."""
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}")
        w_stability, w_connectivity = PRESETS[name]
        return cls(**{"w_stability": w_stability, "w_connectivity": w_connectivity, **overrides})


@dataclass
class RefineReport:
    initial_stability_logp: float = 0.0
    initial_connectivity_logp: float = 0.0
    stability_logp: List[float] = field(default_factory=list)
    connectivity_logp: List[float] = field(default_factory=list)
    step_sizes: List[float] = field(default_factory=list)
    stop_reason: str = "max_iterations"
    components: int = 0
    stable: bool = False
    failing_directions: List[int] = field(default_factory=list)

    @property
    def iterations_run(self) -> int:
        return len(self.step_sizes)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iteration": np.arange(1, self.iterations_run + 1),
            "stability_logp": self.stability_logp,
            "connectivity_logp": self.connectivity_logp,
            "step": self.step_sizes,
        })

    def to_dict(self) -> dict:
        out = asdict(self)
        out["iterations_run"] = self.iterations_run
        return out

    def write(self, path: str) -> None:
        """JSON report, or the per-iteration table when the path ends in .csv."""
        if str(path).endswith(".csv"):
            self.to_frame().to_csv(path, index=False, float_format="%.17g")
            return
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)


# -----------------------------
#  SINGLE-STEP ENGINE
# -----------------------------
@dataclass
class _Terms:
    stability: float
    connectivity: float
    objective: float


class _Refiner:
    """Objective, gradient and one backtracking step for one object."""

    def __init__(self, occluded: BinaryGrid, params: RefineParams):
        self.occluded = occluded
        self.mask = occluded.bits
        self.params = params

    def terms(self, V: ProbGrid, V_other: ProbGrid, anchors=None) -> _Terms:
        p = self.params
        s = stability_log_prob(V, V_other, p.stability) if p.w_stability > 0 else 0.0
        c = 0.0
        if p.w_connectivity > 0:
            try:
                c = connectivity_log_prob(V, p.connectivity, anchors=anchors)
            except NoAnchors:
                c = 0.0
        return _Terms(s, c, p.w_stability * s + p.w_connectivity * c)

    def gradient(self, V: ProbGrid, V_other: ProbGrid) -> np.ndarray:
        p = self.params
        grad = np.zeros(V.frame.dims)
        if p.w_stability > 0:
            grad += p.w_stability * stability_gradient(V, V_other, p.stability)
        if p.w_connectivity > 0:
            try:
                grad += p.w_connectivity * connectivity_gradient(V, self.occluded, p.connectivity)
            except NoAnchors:
                pass
        return np.where(self.mask, grad, 0.0)

    def step(self, V: ProbGrid, V_other: ProbGrid) -> Optional["_Step"]:
        """
        One ascent step with backtracking. The connectivity pair set is pinned to
        the current anchors while candidates are compared. Returns None when
        every halving lowers the objective.
        """
        p = self.params
        lo, hi = p.clamp
        anchors = connectivity_anchors(V, p.connectivity) if p.w_connectivity > 0 else None
        before = self.terms(V, V_other, anchors)
        grad = self.gradient(V, V_other)

        h = p.step
        for _ in range(p.max_halvings + 1):
            values = V.values.copy()
            values[self.mask] = np.clip(values[self.mask] + h * grad[self.mask], lo, hi)
            candidate = V.with_values(values)
            after = self.terms(candidate, V_other, anchors)
            if after.objective >= before.objective:
                # gain is measured on the pinned pair set; the report gets the re-anchored terms
                gain = after.objective - before.objective
                if anchors is not None and connectivity_anchors(candidate, p.connectivity) != anchors:
                    after = self.terms(candidate, V_other)
                return _Step(candidate, h, after, gain)
            h /= 2.0
        return None


@dataclass
class _Step:
    grid: ProbGrid
    size: float
    terms: _Terms
    gain: float


def _finalize(report: RefineReport, V: ProbGrid, V_other: ProbGrid, params: RefineParams) -> None:
    shape = binarize(V)
    _, report.components = connected_components(shape, 26)
    try:
        eq = check_static_equilibrium(shape, binarize(V_other), params.stability)
        report.stable, report.failing_directions = eq.stable, list(eq.failing)
    except EmptyShape:
        report.stable, report.failing_directions = False, list(range(params.stability.n_directions))


# -----------------------------
#  SCENE DRIVER
# -----------------------------
def _refine_objects(
    objects: Sequence[Tuple[ProbGrid, BinaryGrid]],
    params: RefineParams,
    others: Optional[ProbGrid] = None,
) -> Tuple[List[ProbGrid], List[RefineReport]]:
    if not objects:
        return [], []
    grids = [g for pair in objects for g in pair] + ([others] if others is not None else [])
    frame = require_same_frame(*grids)
    static = [others] if others is not None else []

    current = [V for V, _ in objects]
    refiners = [_Refiner(occ, params) for _, occ in objects]
    reports = [RefineReport() for _ in objects]
    done = [False] * len(objects)

    def other_grid(k: int, snapshot: List[ProbGrid]) -> ProbGrid:
        return combine_others([g for j, g in enumerate(snapshot) if j != k] + static, frame)

    no_priors = params.w_stability == 0.0 and params.w_connectivity == 0.0
    for k, refiner in enumerate(refiners):
        t = refiner.terms(current[k], other_grid(k, current))
        reports[k].initial_stability_logp = t.stability
        reports[k].initial_connectivity_logp = t.connectivity
        if refiner.mask.sum() == 0 or no_priors:
            done[k] = True
            reports[k].stop_reason = "converged"

    for it in tqdm(range(params.iterations), desc="refine", disable=not params.progress):
        if all(done):
            break
        snapshot = list(current)
        order = sorted(range(len(objects)), key=lambda j: (snapshot[j].mass, j))
        for k in order:
            if done[k]:
                continue
            step = refiners[k].step(current[k], other_grid(k, snapshot))
            if step is None:
                done[k] = True
                reports[k].stop_reason = "stalled"
                logger.warning("Object %d: no ascent step after %d halvings at iteration %d", k, params.max_halvings, it + 1)
                continue
            current[k] = step.grid
            reports[k].stability_logp.append(step.terms.stability)
            reports[k].connectivity_logp.append(step.terms.connectivity)
            reports[k].step_sizes.append(step.size)
            logger.debug(
                "Object %d iteration %d: step %.4g, stability %.6f, connectivity %.6f",
                k, it + 1, step.size, step.terms.stability, step.terms.connectivity,
            )
            if step.gain < params.stop_tol:
                done[k] = True
                reports[k].stop_reason = "converged"

    for k in range(len(objects)):
        _finalize(reports[k], current[k], other_grid(k, current), params)
        logger.info(
            "Object %d refined: %d iterations (%s), components=%d, stable=%s",
            k, reports[k].iterations_run, reports[k].stop_reason, reports[k].components, reports[k].stable,
        )
    return current, reports


def refine(
    V_o: ProbGrid,
    occluded: BinaryGrid,
    V_other: Optional[ProbGrid] = None,
    params: Optional[RefineParams] = None,
) -> Tuple[ProbGrid, RefineReport]:
    params = params or RefineParams()
    if V_other is None:
        V_other = ProbGrid.zeros(V_o.frame)
    grids, reports = _refine_objects([(V_o, occluded)], params, others=V_other)
    return grids[0], reports[0]


def refine_scene_with_reports(
    objects: Sequence[Tuple[ProbGrid, BinaryGrid]],
    params: Optional[RefineParams] = None,
    others: Optional[ProbGrid] = None,
) -> Tuple[List[ProbGrid], List[RefineReport]]:
    return _refine_objects(objects, params or RefineParams(), others)


def refine_scene(
    objects: Sequence[Tuple[ProbGrid, BinaryGrid]],
    params: Optional[RefineParams] = None,
    others: Optional[ProbGrid] = None,
) -> List[ProbGrid]:
    """
    Refine every object against the current estimates of all the others.
    Each sweep visits objects in ascending total occupancy and reads the
    estimates snapshotted at the start of the sweep.
    """
    return refine_scene_with_reports(objects, params, others)[0]
