"""Sufficiency, interventional and contrastive explanations of a classifier.

A :class:`ModelBundle` chains the causal model over concepts, the map from
concepts (plus nuisance ``w``) to features, and the classifier.  Queries
intervene on concepts only; the classifier is reached through the map.

With a :class:`~conceptcause.credal.Pscm` as the causal model every query
returns an :class:`~conceptcause.credal.Interval` instead of a float.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from conceptcause.credal import BoundConfig, Interval, Pscm, counterfactual_bounds
from conceptcause.errors import CapacityError, QueryError
from conceptcause.scm import (
    Fscm,
    counterfactual_distribution,
    counterfactual_world,
    interventional,
    marginal,
    truncated_joint,
)
from conceptcause.world import (
    BlackBoxClassifier,
    ConceptToDataMap,
    Dataset,
    Instance,
    Nuisance,
    filter_dataset,
    uniform_nuisance,
)

DESCENDANT_CAP = 2**20
# p >= p* up to summation rounding, so exact thresholds like 1.0 behave
THRESHOLD_TOL = 1e-12

Value = Union[float, Interval]


@dataclass(frozen=True, eq=False)
class ModelBundle:
    model: Fscm | Pscm
    map: ConceptToDataMap
    classifier: BlackBoxClassifier
    w_distribution: Mapping[Nuisance, float] | None = None
    conditionals: Mapping[str, np.ndarray] | None = None
    bounds: BoundConfig = BoundConfig()

    def __post_init__(self):
        names = {c.name for c in self.map.concepts}
        if names != set(self.model.names):
            raise QueryError("map and causal model disagree on the concept vocabulary")

    @property
    def is_credal(self) -> bool:
        return isinstance(self.model, Pscm)

    @property
    def nuisance(self) -> Mapping[Nuisance, float]:
        return self.w_distribution or uniform_nuisance(self.map)

    def with_model(self, model) -> ModelBundle:
        return replace(self, model=model)

    def with_conditionals(self, conditionals: Mapping[str, np.ndarray]) -> ModelBundle:
        return replace(self, conditionals=conditionals)

    def predict(self, z: Mapping[str, int], w: Sequence[int]) -> int:
        return self.classifier.classify(self.map.decode(z, w))


@dataclass(frozen=True)
class LocalContext:
    instance: Instance


@dataclass(frozen=True)
class SubgroupContext:
    dataset: Dataset
    condition: Mapping[str, int]
    yhat: int | None = None


@dataclass(frozen=True)
class GlobalContext:
    pass


Context = LocalContext | SubgroupContext | GlobalContext


@dataclass(frozen=True)
class PsResult:
    value: Value
    query: Mapping[str, object]
    diagnostics: Mapping[str, object] = field(default_factory=dict)
    count: int | None = None

    @property
    def point(self) -> float:
        """The value, or the lower bound for interval answers."""
        return self.value.lower if isinstance(self.value, Interval) else self.value


@dataclass(frozen=True)
class ContrastiveExplanation:
    intervention: Mapping[str, int]
    probability: Value
    cardinality: int


@dataclass(frozen=True)
class AttributionRow:
    concept: str
    value: int
    ps: Value
    count: int | None = None


def _check_intervention(bundle: ModelBundle, intervention: Mapping[str, int]) -> None:
    if not intervention:
        raise QueryError("intervention must not be empty")
    for name, v in intervention.items():
        if name not in bundle.model.var:
            raise QueryError(f"only concept variables can be intervened on, got {name!r}")
        if not 0 <= v < bundle.model.var[name].cardinality:
            raise QueryError(f"intervention value {v} out of range for {name}")


def check_instance(bundle: ModelBundle, instance: Instance) -> None:
    """Raise unless ``x = decode(z, w)`` and ``yhat = h(x)``."""
    x = bundle.map.decode(instance.z, instance.w)
    if tuple(x) != tuple(instance.x):
        raise QueryError("instance features do not match decode(z, w)")
    if bundle.classifier.classify(x) != instance.yhat:
        raise QueryError("instance prediction does not match the classifier")


def _evaluate(bundle: ModelBundle, fn: Callable[[Fscm], float],
              relevant: Iterable[str] | None) -> Value:
    if not bundle.is_credal:
        return fn(bundle.model)
    if bundle.conditionals is None:
        raise QueryError("a PSCM bundle needs data conditionals")
    return counterfactual_bounds(bundle.model, bundle.conditionals, fn,
                                 relevant=relevant, config=bundle.bounds)


def _descendants(bundle: ModelBundle, intervention) -> list[str]:
    desc = bundle.model.graph.descendants(intervention) - set(intervention)
    return [n for n in bundle.model.order if n in desc]


def _unidentified(bundle: ModelBundle) -> set[str]:
    """Nodes whose conditionals the data leave open (unseen parent values)."""
    if not bundle.is_credal:
        return set()
    return {n for n, c in bundle.conditionals.items() if np.isnan(c).any()}


def _local_value(fscm: Fscm, bundle: ModelBundle, instance: Instance,
                 intervention: Mapping[str, int], target: int) -> float:
    names, dist = counterfactual_distribution(fscm, instance.z, intervention)
    total = 0.0
    for values, p in dist.items():
        world = counterfactual_world(instance.z, intervention, names, values)
        if bundle.predict(world, instance.w) == target:
            total += p
    return total


def local_ps(bundle: ModelBundle, instance: Instance,
             intervention: Mapping[str, int], target: int) -> PsResult:
    """p(yhat under do(intervention) = target | x, yhat) for one instance.

    Descendants of the intervened concepts are marginalized over their
    counterfactual distribution; every other concept and ``w`` stay at their
    observed values.
    """
    check_instance(bundle, instance)
    _check_intervention(bundle, intervention)
    desc = _descendants(bundle, intervention)
    space = math.prod(bundle.model.var[n].cardinality for n in desc)
    if space > DESCENDANT_CAP:
        raise CapacityError(f"{space} descendant assignments exceed cap {DESCENDANT_CAP}")
    value = _evaluate(
        bundle, lambda m: _local_value(m, bundle, instance, intervention, target), desc
    )
    return PsResult(
        value,
        {"context": "local", "z": dict(instance.z), "w": list(instance.w),
         "yhat": instance.yhat, "do": dict(intervention), "target": target},
        {"marginalized": desc, "descendant_assignments": space,
         "sufficiency_form": target != instance.yhat
         and any(instance.z[k] != v for k, v in intervention.items())},
    )


def subgroup_ps(bundle: ModelBundle, dataset: Dataset, condition: Mapping[str, int],
                yhat: int | None, intervention: Mapping[str, int], target: int,
                strict: bool = False) -> PsResult:
    """Mean of the local query over the members matching ``condition`` and ``yhat``.

    ``strict`` demands the sufficiency reading: every intervened concept is
    fixed by ``condition`` to a value different from the intervention.
    """
    _check_intervention(bundle, intervention)
    if strict:
        for k, v in intervention.items():
            if k not in condition or condition[k] == v:
                raise QueryError(f"sufficiency form needs {k} fixed by the subgroup to a different value")
    members = filter_dataset(dataset, condition, yhat)
    if not len(members):
        raise QueryError("subgroup is empty")
    unique: dict[tuple, Instance] = {}
    for inst in members:
        unique.setdefault(inst.key, inst)
    for inst in unique.values():
        check_instance(bundle, inst)

    def mean_value(fscm: Fscm) -> float:
        cache = {k: _local_value(fscm, bundle, inst, intervention, target)
                 for k, inst in unique.items()}
        return math.fsum(cache[inst.key] for inst in members) / len(members)

    value = _evaluate(bundle, mean_value, _descendants(bundle, intervention))
    return PsResult(
        value,
        {"context": "subgroup", "condition": dict(condition), "yhat": yhat,
         "do": dict(intervention), "target": target},
        {"distinct_members": len(unique), "marginalized": _descendants(bundle, intervention)},
        count=len(members),
    )


def _prediction_mass(bundle: ModelBundle, dist: Mapping[tuple, float], names: Sequence[str],
                     fixed: Mapping[str, int], target: int,
                     w: Sequence[int] | None = None) -> float:
    ws = {tuple(w): 1.0} if w is not None else bundle.nuisance
    total = 0.0
    for values, p in dist.items():
        z = dict(fixed)
        z.update(zip(names, values))
        for wv, pw in ws.items():
            if bundle.predict(z, wv) == target:
                total += p * pw
    return total


def global_interventional(bundle: ModelBundle, intervention: Mapping[str, int],
                          target: int) -> PsResult:
    """p(yhat = target | do(intervention)), ``z`` and ``w`` marginalized."""
    _check_intervention(bundle, intervention)

    def value(fscm: Fscm) -> float:
        names = fscm.order
        return _prediction_mass(bundle, truncated_joint(fscm, intervention, names), names, {}, target)

    return PsResult(
        _evaluate(bundle, value, _unidentified(bundle)),
        {"context": "global", "do": dict(intervention), "target": target},
    )


def cbn_interventional(bundle: ModelBundle, intervention: Mapping[str, int],
                       condition: Instance | Mapping[str, int], target: int,
                       w: Sequence[int] | None = None) -> PsResult:
    """Interventional stand-in for the local query.

    Descendants of the intervention are redrawn from ``p(. | do, condition)``
    instead of their counterfactual distribution.  Given an instance, the
    condition is its values on non-descendants and ``w`` is its nuisance.
    """
    _check_intervention(bundle, intervention)
    desc = set(_descendants(bundle, intervention))
    if isinstance(condition, Instance):
        check_instance(bundle, condition)
        w = condition.w if w is None else w
        condition = {k: v for k, v in condition.z.items()
                     if k not in desc and k not in intervention}
    condition = dict(condition)
    free = [n for n in bundle.model.order if n not in intervention and n not in condition]

    def value(fscm: Fscm) -> float:
        dist = interventional(fscm, intervention, condition, free)
        fixed = {**condition, **intervention}
        return _prediction_mass(bundle, dist, free, fixed, target, w)

    bad = sorted(set(condition) & desc)
    if bad:
        raise QueryError(f"counterfactual query required: condition on descendants {bad}")
    return PsResult(
        _evaluate(bundle, value, _unidentified(bundle)),
        {"context": "cbn", "condition": condition, "w": None if w is None else list(w),
         "do": dict(intervention), "target": target},
        {"resampled": free},
    )


def _independent_local(bundle: ModelBundle, instance: Instance,
                       intervention: Mapping[str, int], target: int) -> float:
    world = dict(instance.z)
    world.update(intervention)
    return 1.0 if bundle.predict(world, instance.w) == target else 0.0


def independence_ps(bundle: ModelBundle, context: Context,
                    intervention: Mapping[str, int], target: int) -> PsResult:
    """The same query with every concept treated as independent of the others.

    Intervening then has no downstream effect: locally the other concepts
    keep their observed values, globally each is drawn from its own marginal.
    """
    _check_intervention(bundle, intervention)
    query = {"context": type(context).__name__, "do": dict(intervention),
             "target": target, "model": "independence"}
    if isinstance(context, LocalContext):
        check_instance(bundle, context.instance)
        return PsResult(_independent_local(bundle, context.instance, intervention, target), query)
    if isinstance(context, SubgroupContext):
        members = filter_dataset(context.dataset, context.condition, context.yhat)
        if not len(members):
            raise QueryError("subgroup is empty")
        cache: dict[tuple, float] = {}
        for inst in members:
            if inst.key not in cache:
                check_instance(bundle, inst)
                cache[inst.key] = _independent_local(bundle, inst, intervention, target)
        value = math.fsum(cache[inst.key] for inst in members) / len(members)
        return PsResult(value, query, count=len(members))

    free = [n for n in bundle.model.order if n not in intervention]

    def value(fscm: Fscm) -> float:
        margs = [marginal(fscm, n) for n in free]
        dist = {}
        for values in itertools.product(*(range(len(m)) for m in margs)):
            p = math.prod(m[v] for m, v in zip(margs, values))
            if p > 0.0:
                dist[values] = p
        return _prediction_mass(bundle, dist, free, dict(intervention), target)

    return PsResult(_evaluate(bundle, value, _unidentified(bundle)), query)


def query_in_context(bundle: ModelBundle, context: Context,
                     intervention: Mapping[str, int], target: int) -> PsResult:
    if isinstance(context, LocalContext):
        return local_ps(bundle, context.instance, intervention, target)
    if isinstance(context, SubgroupContext):
        return subgroup_ps(bundle, context.dataset, context.condition, context.yhat,
                           intervention, target)
    return global_interventional(bundle, intervention, target)


def _sort_key(value: Value) -> tuple[float, float]:
    if isinstance(value, Interval):
        return (-value.lower, -value.upper)
    return (-value, -value)


def singleton_attributions(bundle: ModelBundle, context: Context, target: int,
                           candidates: Iterable[tuple[str, int]] | None = None) -> list[AttributionRow]:
    """Sufficiency of every single-concept intervention, highest first.

    By default every concept is tried at each value it does not already hold
    in the context.
    """
    if candidates is None:
        if isinstance(context, LocalContext):
            held = dict(context.instance.z)
        elif isinstance(context, SubgroupContext):
            held = dict(context.condition)
        else:
            held = {}
        candidates = [(n, v) for n in bundle.model.order
                      for v in range(bundle.model.var[n].cardinality) if held.get(n) != v]
    rows = []
    for name, v in candidates:
        res = query_in_context(bundle, context, {name: v}, target)
        rows.append(AttributionRow(name, v, res.value, res.count))
    rows.sort(key=lambda r: (_sort_key(r.ps), r.concept, r.value))
    return rows


def contrastive_search(bundle: ModelBundle, instance: Instance, target: int,
                       p_threshold: float, max_cardinality: int) -> list[ContrastiveExplanation]:
    """Every intervention of at most ``max_cardinality`` concepts, each moved off
    its observed value, whose sufficiency reaches ``p_threshold``.

    Ranked by size, then probability (descending), then the intervention
    itself.  Interval answers are judged by their lower bound.
    """
    if not 0.0 < p_threshold <= 1.0:
        raise QueryError("p_threshold must lie in (0, 1]")
    names = sorted(bundle.model.names)
    if not 0 <= max_cardinality <= len(names):
        raise QueryError(f"max_cardinality must lie in 0..{len(names)}")
    check_instance(bundle, instance)
    found = []
    for k in range(1, max_cardinality + 1):
        for subset in itertools.combinations(names, k):
            choices = [[v for v in range(bundle.model.var[n].cardinality) if v != instance.z[n]]
                       for n in subset]
            for values in itertools.product(*choices):
                intervention = dict(zip(subset, values))
                res = local_ps(bundle, instance, intervention, target)
                if res.point >= p_threshold - THRESHOLD_TOL:
                    found.append(ContrastiveExplanation(intervention, res.value, k))
    found.sort(key=lambda e: (e.cardinality, _sort_key(e.probability)[0],
                              tuple(sorted(e.intervention.items()))))
    return found


def _fmt(p: Value) -> str:
    if isinstance(p, Interval):
        return f"between {p.lower:.3f} and {p.upper:.3f}"
    return f"{p:.3f}"


def explanation_text(bundle: ModelBundle, instance: Instance, intervention: Mapping[str, int],
                     target: int, p: Value, p_threshold: float | None = None) -> str:
    """One-sentence contrastive reading of a local result.

    The probability is left out once it clears ``p_threshold``.
    """
    labels = bundle.classifier.labels
    var = bundle.model.var
    change = " and ".join(f"{n} were {var[n].domain[v]}" for n, v in intervention.items())
    observed = ", ".join(f"{n}={var[n].domain[v]}" for n, v in instance.z.items())
    head = (f"Given concepts {observed}, the classifier predicted {labels[instance.yhat]}; "
            f"it would have predicted {labels[target]}")
    lower = p.lower if isinstance(p, Interval) else p
    if p_threshold is not None and lower >= p_threshold - THRESHOLD_TOL:
        return f"{head} if {change}."
    return f"{head} with probability {_fmt(p)} if {change}."
