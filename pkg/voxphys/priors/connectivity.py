"""
Connectivity prior over probabilistic occupancy grids.

The probability that a voxel path t exists is the product of its voxel
occupancies (endpoints included). Most likely paths are shortest paths on the
lattice graph with node cost -log V, found with networkx Dijkstra.

    log P(connected) = sum_{a<b} log(V(a) V(b) P(t*_ab) + 1 - V(a) V(b))

over anchor voxels of the coarsened grid.
"""
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field

from voxphys import config
from voxphys.errors import NoAnchors, Unreachable
from voxphys.grid.core import (
    BinaryGrid,
    Index,
    ProbGrid,
    coarsen,
    expand_blocks,
    neighbor_offsets,
    require_same_frame,
)

logger = logging.getLogger(__name__)

# relative slack when deciding that two path costs are equal
TIE_TOL = 1e-12


class ConnectivityParams(BaseModel):
    coarsen_factor: int = Field(config.COARSEN_FACTOR, ge=1)
    anchor_threshold: float = Field(0.5, gt=0.0, lt=1.0)
    neighborhood: Literal[6, 18, 26] = 26
    prob_clamp: float = Field(config.PROB_CLAMP, gt=0.0, lt=0.5)
    exact_pairs: bool = False
    clamp_zero: bool = True
    min_coarse_dim: int = Field(4, ge=1)

    def effective_factor(self, dims: Sequence[int]) -> int:
        """Largest factor <= coarsen_factor keeping min_coarse_dim voxels per axis (1 if none does)."""
        smallest = min(dims)
        for f in range(self.coarsen_factor, 1, -1):
            if -(-smallest // f) >= self.min_coarse_dim:
                return f
        return 1


@dataclass(frozen=True)
class Path:
    voxels: Tuple[Index, ...]
    log_prob: float

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)

    def __len__(self) -> int:
        return len(self.voxels)

    def __contains__(self, idx) -> bool:
        return tuple(idx) in set(self.voxels)


@lru_cache(maxsize=8)
def lattice_graph(dims: Tuple[int, int, int], neighborhood: int = 26) -> nx.Graph:
    """Voxel adjacency graph; nodes are index tuples added in lexicographic order."""
    G = nx.Graph()
    G.add_nodes_from(itertools.product(*(range(d) for d in dims)))
    idx = np.indices(dims).reshape(3, -1).T
    dims_arr = np.asarray(dims)
    for off in neighbor_offsets(neighborhood):
        if off <= (0, 0, 0):
            continue
        dst = idx + np.asarray(off)
        ok = np.all((dst >= 0) & (dst < dims_arr), axis=1)
        G.add_edges_from(zip(map(tuple, idx[ok].tolist()), map(tuple, dst[ok].tolist())))
    logger.debug("Built lattice graph %s: %d nodes, %d edges", dims, G.number_of_nodes(), G.number_of_edges())
    return G


class PathSearch:
    """
    Most-likely-path queries on one grid. One Dijkstra distance map is computed
    per source voxel and reused for every query from that source.

    Among equally likely paths the one with the fewest voxels wins, then the
    lexicographically smallest voxel sequence read from the query's source.
    """

    def __init__(self, V: ProbGrid, params: Optional[ConnectivityParams] = None):
        self.params = params or ConnectivityParams()
        self.V = V
        eps = self.params.prob_clamp
        values = V.values
        self.hidden = np.zeros(values.shape, dtype=bool) if self.params.clamp_zero else values < eps
        with np.errstate(divide="ignore"):
            self.log_v = np.log(np.maximum(values, eps)) if self.params.clamp_zero else np.log(values)
        self.graph = lattice_graph(V.frame.dims, self.params.neighborhood)
        self._dist: Dict[Index, Dict[Index, float]] = {}
        self._routes: Dict[Tuple[Index, Index], Tuple[Index, ...]] = {}

    def _cost(self, u, v, d):
        return None if self.hidden[v] else -self.log_v[v]

    def _check(self, idx: Index) -> Index:
        idx = tuple(int(c) for c in idx)
        if not all(0 <= c < n for c, n in zip(idx, self.V.frame.dims)):
            raise ValueError(f"voxel {idx} outside grid {self.V.frame.dims}")
        if self.hidden[idx]:
            raise Unreachable(f"voxel {idx} has zero probability")
        return idx

    def distances(self, source: Index) -> Dict[Index, float]:
        if source not in self._dist:
            self._dist[source] = nx.single_source_dijkstra_path_length(self.graph, source, weight=self._cost)
        return self._dist[source]

    @staticmethod
    def _tight(dist: Dict[Index, float], u: Index, w: Index, cost: float) -> bool:
        """Edge u -> w lies on some best path from the source."""
        return abs(dist[u] + cost - dist[w]) <= TIE_TOL * (1.0 + abs(dist[w]))

    def route(self, src: Index, dst: Index) -> Tuple[Index, ...]:
        """Canonical best voxel sequence src -> dst."""
        key = (src, dst)
        if key in self._routes:
            return self._routes[key]
        dist = self.distances(src)
        if dst not in dist:
            raise Unreachable(f"no path between {src} and {dst}")
        G = self.graph

        # hops to dst over tight edges, breadth first from dst
        hops = {dst: 0}
        queue = deque([dst])
        while queue:
            w = queue.popleft()
            cost = -self.log_v[w]
            for u in G[w]:
                if u not in hops and u in dist and self._tight(dist, u, w, cost):
                    hops[u] = hops[w] + 1
                    queue.append(u)

        voxels = [src]
        u = src
        while u != dst:
            u = min(
                w for w in G[u]
                if hops.get(w) == hops[u] - 1 and self._tight(dist, u, w, -self.log_v[w])
            )
            voxels.append(u)
        self._routes[key] = tuple(voxels)
        return self._routes[key]

    def log_prob_of(self, voxels: Sequence[Index]) -> float:
        """sum of log V over the distinct voxels of a voxel sequence."""
        return float(sum(self.log_v[v] for v in dict.fromkeys(voxels)))

    def path(self, a: Index, b: Index) -> Path:
        a, b = self._check(a), self._check(b)
        voxels = self.route(a, b)
        return Path(voxels, self.log_prob_of(voxels))

    def path_through(self, a: Index, b: Index, c: Index) -> Path:
        """The c -> b half is the reverse of the canonical b -> c route."""
        best = self.path(a, b)
        c = self._check(c)
        if c in best:
            return best
        try:
            to_c, from_b = self.route(a, c), self.route(b, c)
        except Unreachable:
            raise Unreachable(f"no path between {a} and {b} through {c}") from None
        voxels = to_c + tuple(reversed(from_b[:-1]))
        return Path(voxels, self.log_prob_of(voxels))


# -----------------------------
#  PATH OPERATIONS
# -----------------------------
def most_likely_path(V: ProbGrid, a: Index, b: Index, params: Optional[ConnectivityParams] = None) -> Path:
    return PathSearch(V, params).path(a, b)


def most_likely_path_through(
    V: ProbGrid, a: Index, b: Index, c: Index, params: Optional[ConnectivityParams] = None
) -> Path:
    """Best a->c path joined to the best c->b path; voxels shared by the halves count once."""
    return PathSearch(V, params).path_through(a, b, c)


def _union_prob(p_star: float, p_c: float) -> float:
    return 1.0 - (1.0 - p_star) * (1.0 - p_c)


def pair_connect_prob(
    V: ProbGrid,
    a: Index,
    b: Index,
    c: Optional[Index] = None,
    params: Optional[ConnectivityParams] = None,
    search: Optional[PathSearch] = None,
) -> float:
    search = search or PathSearch(V, params)
    best = search.path(a, b)
    if c is None:
        return best.prob
    through = search.path_through(a, b, c)
    if through.voxels == best.voxels:
        return best.prob
    return _union_prob(best.prob, through.prob)


# -----------------------------
#  OBJECTIVE / GRADIENT
# -----------------------------
def _coarse(V: ProbGrid, params: ConnectivityParams) -> Tuple[ProbGrid, int]:
    factor = params.effective_factor(V.frame.dims)
    return coarsen(V, factor), factor


def anchor_voxels(V: ProbGrid, params: ConnectivityParams) -> List[Index]:
    if params.exact_pairs:
        mask = np.ones(V.frame.dims, dtype=bool)
    else:
        mask = V.values >= params.anchor_threshold
    return [tuple(int(c) for c in idx) for idx in np.argwhere(mask)]


def connectivity_anchors(V: ProbGrid, params: Optional[ConnectivityParams] = None) -> List[Index]:
    """Anchor voxels of V, as indices into the coarsened grid."""
    params = params or ConnectivityParams()
    coarse, _ = _coarse(V, params)
    return anchor_voxels(coarse, params)


def _anchor_pairs(
    V: ProbGrid, params: ConnectivityParams, anchors: Optional[Sequence[Index]] = None
) -> List[Tuple[Index, Index]]:
    anchors = anchor_voxels(V, params) if anchors is None else sorted(tuple(a) for a in anchors)
    if not anchors:
        raise NoAnchors(f"no voxel reaches the anchor threshold {params.anchor_threshold}")
    return list(itertools.combinations(anchors, 2))


def connectivity_log_prob(
    V: ProbGrid,
    params: Optional[ConnectivityParams] = None,
    anchors: Optional[Sequence[Index]] = None,
) -> float:
    """
    Connectivity objective. `anchors` (coarse-grid indices) pins the pair set
    instead of thresholding V.
    """
    params = params or ConnectivityParams()
    coarse, factor = _coarse(V, params)
    pairs = _anchor_pairs(coarse, params, anchors)
    search = PathSearch(coarse, params)
    values = coarse.values

    total = 0.0
    for a, b in pairs:
        q = values[a] * values[b]
        total += math.log(max(q * search.path(a, b).prob + 1.0 - q, params.prob_clamp))
    logger.debug("Connectivity: factor %d, %d anchor pairs, log P = %.6f", factor, len(pairs), total)
    return total


def connectivity_gradient(
    V: ProbGrid, occluded: BinaryGrid, params: Optional[ConnectivityParams] = None
) -> np.ndarray:
    """
    Per-voxel derivative of the connectivity objective with the union of t* and
    t^c standing in for P(C(a, b)). Only occluded voxels receive a value; with
    coarsening, each coarse value is written to every fine voxel of its block.
    """
    params = params or ConnectivityParams()
    require_same_frame(V, occluded)
    coarse, factor = _coarse(V, params)
    pairs = _anchor_pairs(coarse, params)
    coarse_occluded = coarsen(occluded, factor)
    search = PathSearch(coarse, params)
    values = coarse.values
    eps = params.prob_clamp

    candidates = [
        c for c in (tuple(int(x) for x in idx) for idx in np.argwhere(coarse_occluded.bits))
        if not search.hidden[c]
    ]
    grad = np.zeros(coarse.frame.dims)
    if not candidates:
        return np.zeros(V.frame.dims)

    for a, b in pairs:
        q = values[a] * values[b]
        best = search.path(a, b)
        p_star = best.prob
        on_best = set(best.voxels)
        for c in candidates:
            v_c = max(values[c], eps)
            if c in on_best:
                dp, p_union = p_star / v_c, p_star
            else:
                p_c = search.path_through(a, b, c).prob
                dp, p_union = (p_c / v_c) * (1.0 - p_star), _union_prob(p_star, p_c)
            grad[c] += q * dp / max(q * p_union + 1.0 - q, eps)

    logger.debug("Connectivity gradient: %d pairs x %d occluded coarse voxels", len(pairs), len(candidates))
    return expand_blocks(grad, factor, V.frame.dims) * occluded.bits
