"""Causal concept-based explanations for black-box classifiers over discrete SCMs."""

from conceptcause.credal import Interval, Pscm, counterfactual_bounds, unique_fscm
from conceptcause.explain import (
    ModelBundle,
    cbn_interventional,
    contrastive_search,
    global_interventional,
    independence_ps,
    local_ps,
    subgroup_ps,
)
from conceptcause.scm import Fscm, build_fscm, counterfactual, validate

__version__ = "0.1.0"

__all__ = [
    "Fscm", "Interval", "ModelBundle", "Pscm", "build_fscm", "cbn_interventional",
    "contrastive_search", "counterfactual", "counterfactual_bounds", "global_interventional",
    "independence_ps", "local_ps", "subgroup_ps", "unique_fscm", "validate",
]
