from voxphys.priors.connectivity import (
    ConnectivityParams,
    connectivity_anchors,
    Path,
    PathSearch,
    connectivity_gradient,
    connectivity_log_prob,
    most_likely_path,
    most_likely_path_through,
    pair_connect_prob,
)
from voxphys.priors.stability import (
    EquilibriumReport,
    StabilityParams,
    check_static_equilibrium,
    com_exceedance_prob,
    exceedance_field,
    stability_gradient,
    stability_log_prob,
    support_prob,
)

__all__ = [
    "ConnectivityParams",
    "connectivity_anchors",
    "EquilibriumReport",
    "Path",
    "PathSearch",
    "StabilityParams",
    "check_static_equilibrium",
    "com_exceedance_prob",
    "connectivity_gradient",
    "connectivity_log_prob",
    "exceedance_field",
    "most_likely_path",
    "most_likely_path_through",
    "pair_connect_prob",
    "stability_gradient",
    "stability_log_prob",
    "support_prob",
]
