"""Brute-force reference answers for checking the engine.

Nothing here is used by the query path.  Each routine enumerates the full
joint over exogenous function indices and shares no inference code with
:mod:`conceptcause.scm`, :mod:`conceptcause.credal` or
:mod:`conceptcause.explain`; only the model data types are common.
Everything is exponential in the model size.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from conceptcause.credal import CredalPolytope, Interval, Pscm, credal_constraints
from conceptcause.errors import ImpossibleEvidenceError
from conceptcause.scm import Fscm


@dataclass(frozen=True)
class OracleReport:
    query: Mapping[str, object]
    oracle: float | Interval
    engine: float | Interval

    @property
    def difference(self) -> float:
        if isinstance(self.oracle, Interval):
            return max(abs(self.oracle.lower - self.engine.lower),
                       abs(self.oracle.upper - self.engine.upper))
        return abs(self.oracle - self.engine)


def _lookup(fscm: Fscm, node: str, u: int, values: Mapping[str, int]) -> int:
    table = fscm.tables[node]
    configs = list(itertools.product(*(range(fscm.var[p].cardinality) for p in table.parents)))
    return table.functions[u][configs.index(tuple(values[p] for p in table.parents))]


def _solve(fscm: Fscm, u: Mapping[str, int], intervention: Mapping[str, int]) -> dict[str, int]:
    values = dict(intervention)
    pending = [n for n in fscm.names if n not in values]
    while pending:
        for n in list(pending):
            if all(p in values for p in fscm.tables[n].parents):
                values[n] = _lookup(fscm, n, u[n], values)
                pending.remove(n)
    return values


def _joint(fscm: Fscm):
    names = fscm.names
    for combo in itertools.product(*(range(len(fscm.tables[n])) for n in names)):
        p = 1.0
        for n, u in zip(names, combo):
            p *= fscm.exogenous[n].probabilities[u]
        if p > 0.0:
            yield dict(zip(names, combo)), p


def naive_counterfactual(fscm: Fscm, observed: Mapping[str, int],
                         intervention: Mapping[str, int],
                         event: Callable[[Mapping[str, int]], bool] | Mapping[str, int]) -> float:
    """Condition the full exogenous joint on ``observed``, then replay under ``do``."""
    if not callable(event):
        target = dict(event)
        event = lambda a: all(a[k] == v for k, v in target.items())
    evidence = hit = 0.0
    for u, p in _joint(fscm):
        if _solve(fscm, u, {}) != dict(observed):
            continue
        evidence += p
        if event(_solve(fscm, u, intervention)):
            hit += p
    if evidence == 0.0:
        raise ImpossibleEvidenceError("impossible evidence")
    return hit / evidence


def naive_local_ps(bundle, instance, intervention: Mapping[str, int], target: int) -> float:
    def flips(world):
        return bundle.classifier.classify(bundle.map.decode(world, instance.w)) == target

    return naive_counterfactual(bundle.model, instance.z, intervention, flips)


def naive_subgroup_ps(bundle, dataset, condition, yhat, intervention, target) -> float:
    values = []
    for inst in dataset:
        if any(inst.z[k] != v for k, v in condition.items()):
            continue
        if yhat is not None and inst.yhat != yhat:
            continue
        values.append(naive_local_ps(bundle, inst, intervention, target))
    return math.fsum(values) / len(values)


def naive_contrastive(bundle, instance, target: int, p_threshold: float,
                      cap: int) -> dict[frozenset, float]:
    """Every qualifying intervention, keyed by its (concept, value) pairs."""
    names = bundle.model.names
    out = {}
    for mask in range(1, 2 ** len(names)):
        subset = [n for i, n in enumerate(names) if mask >> i & 1]
        if len(subset) > cap:
            continue
        for values in itertools.product(*(range(bundle.model.var[n].cardinality) for n in subset)):
            if any(v == instance.z[n] for n, v in zip(subset, values)):
                continue
            intervention = dict(zip(subset, values))
            p = naive_local_ps(bundle, instance, intervention, target)
            if p >= p_threshold - 1e-12:
                out[frozenset(intervention.items())] = p
    return out


def naive_vertices(poly: CredalPolytope, tol: float = 1e-9) -> list[np.ndarray]:
    """Vertices as feasible points whose support columns are independent."""
    A, b = poly.A, poly.b
    n = A.shape[1]
    rank = np.linalg.matrix_rank(A)
    found: list[np.ndarray] = []
    for size in range(1, rank + 1):
        for support in itertools.combinations(range(n), size):
            cols = A[:, support]
            if np.linalg.matrix_rank(cols) < size:
                continue
            sol, *_ = np.linalg.lstsq(cols, b, rcond=None)
            if sol.min() < -tol or np.abs(cols @ sol - b).max() > tol:
                continue
            x = np.zeros(n)
            x[list(support)] = np.clip(sol, 0.0, None)
            if not any(np.abs(x - v).max() <= tol for v in found):
                found.append(x)
    return found


def naive_bounds(pscm: Pscm, conditionals: Mapping[str, np.ndarray],
                 query: Callable[[Fscm], float], resolution: int = 20,
                 seed: int = 0) -> tuple[Interval, list[float]]:
    """Vertex-product bounds plus ``resolution`` random interior evaluations.

    Returns the interval spanned by every evaluated point and the interior
    values, which multilinearity says never leave the vertex interval.
    """
    verts = {n: naive_vertices(credal_constraints(pscm.families[n], conditionals[n]))
             for n in pscm.names}
    names = pscm.names
    values = []
    for combo in itertools.product(*(verts[n] for n in names)):
        values.append(query(pscm.to_fscm(dict(zip(names, combo)))))
    rng = np.random.default_rng(seed)
    interior = []
    for _ in range(resolution):
        weights = {}
        for n in names:
            mix = rng.dirichlet(np.ones(len(verts[n])))
            weights[n] = mix @ np.vstack(verts[n])
        interior.append(query(pscm.to_fscm(weights)))
    every = values + interior
    return Interval(max(min(every), 0.0), min(max(every), 1.0)), interior
