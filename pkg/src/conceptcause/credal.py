"""Partially specified SCMs and counterfactual bounds over their credal sets.

A PSCM fixes the graph and an allowed set of functions for every concept but
leaves the exogenous weights open.  Data pins down ``p(z | pa)``, which
restricts the weights of each node to a polytope.  A counterfactual query is
multilinear in the per-node weights, so its extremes over the product of
polytopes sit on products of vertices; :func:`counterfactual_bounds` simply
visits them all.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from conceptcause.errors import (
    CapacityError,
    InfeasibleError,
    ModelError,
    QueryError,
    UnderdeterminedError,
)
from conceptcause.scm import (
    CausalGraph,
    ConceptVariable,
    Event,
    ExogenousDistribution,
    Fscm,
    FunctionFamily,
    Violation,
    _check_structure,
    config_index,
    counterfactual,
    parent_configs,
    topological_order,
)

FAMILY_CAP = 2**20
VERTEX_TOL = 1e-9


def canonical_size(child_card: int, parent_cards: Sequence[int]) -> int:
    return child_card ** math.prod(parent_cards)


def canonical_functions(
    child_card: int, parent_cards: Sequence[int], cap: int = FAMILY_CAP
) -> tuple[tuple[int, ...], ...]:
    """Every map from parent assignments to child values.

    Functions are ordered as ``itertools.product`` over the child values of
    each parent assignment, so for binary child and parents ``(a, b)`` index
    ``u`` has bit ``f(1, 1)`` lowest and ``f(0, 0)`` highest.
    """
    if child_card < 1 or any(c < 1 for c in parent_cards):
        raise ModelError("domains must be non-empty")
    size = canonical_size(child_card, parent_cards)
    if size > cap:
        raise CapacityError(f"canonical family has {size} functions, cap is {cap}")
    return tuple(itertools.product(range(child_card), repeat=math.prod(parent_cards)))


def canonical_family(
    child: ConceptVariable, parents: Sequence[ConceptVariable], cap: int = FAMILY_CAP
) -> FunctionFamily:
    functions = canonical_functions(
        child.cardinality, [p.cardinality for p in parents], cap
    )
    return FunctionFamily(child.name, tuple(p.name for p in parents), functions)


@dataclass(frozen=True)
class Pscm:
    variables: tuple[ConceptVariable, ...]
    graph: CausalGraph
    families: Mapping[str, FunctionFamily]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "families", dict(self.families))

    @cached_property
    def var(self) -> dict[str, ConceptVariable]:
        return {v.name: v for v in self.variables}

    @cached_property
    def order(self) -> list[str]:
        return topological_order(self.graph)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def parent_cards(self, name: str) -> tuple[int, ...]:
        return tuple(self.var[p].cardinality for p in self.families[name].parents)

    def to_fscm(self, weights: Mapping[str, Sequence[float]]) -> Fscm:
        exo = {n: ExogenousDistribution(n, tuple(weights[n])) for n in self.names}
        return Fscm(self.variables, self.graph, self.families, exo)

    @classmethod
    def canonical(cls, variables: Sequence[ConceptVariable], graph: CausalGraph,
                  cap: int = FAMILY_CAP) -> Pscm:
        var = {v.name: v for v in variables}
        fams = {
            v.name: canonical_family(v, [var[p] for p in graph.parents(v.name)], cap)
            for v in variables
        }
        return cls(tuple(variables), graph, fams)

    @classmethod
    def of(cls, fscm: Fscm) -> Pscm:
        """The PSCM sharing ``fscm``'s families, weights forgotten."""
        return cls(fscm.variables, fscm.graph, fscm.tables)


def validate_pscm(pscm: Pscm) -> list[Violation]:
    return _check_structure(pscm.variables, pscm.graph, pscm.families)


def induced_conditional(
    family: FunctionFamily, weights: Sequence[float], child_card: int
) -> np.ndarray:
    """``p(z | pa)`` as a (parent assignments x child values) array."""
    funcs = np.asarray(family.functions, dtype=np.int64)
    w = np.asarray(weights, dtype=float)
    out = np.zeros((funcs.shape[1], child_card))
    for k in range(funcs.shape[1]):
        np.add.at(out[k], funcs[:, k], w)
    return out


def induced_conditionals(fscm: Fscm) -> dict[str, np.ndarray]:
    return {
        n: induced_conditional(fscm.tables[n], fscm.weights(n), fscm.var[n].cardinality)
        for n in fscm.names
    }


def empirical_conditionals(
    pscm: Pscm, rows: Iterable[Mapping[str, int]], smoothing: bool = False
) -> dict[str, np.ndarray]:
    """Maximum-likelihood ``p(z | pa)`` from concept rows.

    Parent assignments never observed give an all-NaN row, meaning
    unconstrained.  ``smoothing`` adds one pseudo-count to every cell, which
    makes every row observed.
    """
    counts = {
        n: np.zeros((math.prod(pscm.parent_cards(n)), pscm.var[n].cardinality))
        for n in pscm.names
    }
    for row in rows:
        for n in pscm.names:
            parents = pscm.families[n].parents
            k = config_index([row[p] for p in parents], pscm.parent_cards(n))
            counts[n][k, row[n]] += 1
    out = {}
    for n, c in counts.items():
        if smoothing:
            c = c + 1.0
        totals = c.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[n] = np.where(totals > 0, c / np.where(totals > 0, totals, 1.0), np.nan)
    return out


@dataclass(frozen=True, eq=False)
class CredalPolytope:
    """``{p >= 0 : A p = b}``; the last row of ``A`` is the sum-to-one row."""

    variable: str
    A: np.ndarray
    b: np.ndarray

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    def contains(self, p: Sequence[float], tol: float = VERTEX_TOL) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= -tol) and np.all(np.abs(self.A @ p - self.b) <= tol))


def credal_constraints(
    family: FunctionFamily, conditional: np.ndarray, check: bool = True
) -> CredalPolytope:
    """Equality system tying the weights of ``family`` to ``conditional``.

    One row per observed parent assignment and child value except the last
    value, whose row is implied by the sum-to-one row.
    """
    conditional = np.asarray(conditional, dtype=float)
    funcs = np.asarray(family.functions, dtype=np.int64)
    n_cfg, card = conditional.shape
    if funcs.shape[1] != n_cfg:
        raise ModelError(f"conditional of {family.child} has {n_cfg} rows, family expects {funcs.shape[1]}")
    rows, rhs = [], []
    for k in range(n_cfg):
        col = conditional[k]
        if np.any(np.isnan(col)):
            continue
        if abs(col.sum() - 1.0) > 1e-9:
            raise QueryError(f"conditional of {family.child} at parent assignment {k} does not sum to 1")
        for z in range(card - 1):
            rows.append((funcs[:, k] == z).astype(float))
            rhs.append(col[z])
    rows.append(np.ones(len(funcs)))
    rhs.append(1.0)
    poly = CredalPolytope(family.child, np.vstack(rows), np.asarray(rhs))
    if check and not is_feasible(poly):
        raise InfeasibleError(f"family inconsistent with data for {family.child}")
    return poly


def is_feasible(poly: CredalPolytope) -> bool:
    res = linprog(
        np.zeros(poly.dimension), A_eq=poly.A, b_eq=poly.b,
        bounds=(0, None), method="highs",
    )
    return res.status == 0


def _independent_rows(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep: list[int] = []
    for i in range(A.shape[0]):
        trial = keep + [i]
        if np.linalg.matrix_rank(A[trial]) == len(trial):
            keep = trial
    return A[keep], b[keep]


def enumerate_vertices(
    poly: CredalPolytope, cap: int = 10**6, tol: float = VERTEX_TOL
) -> list[np.ndarray]:
    """All vertices, found as the non-negative basic solutions of ``A p = b``.

    Candidates are checked against the full system, so rows made redundant
    during rank reduction still constrain the result.
    """
    A_r, b_r = _independent_rows(poly.A, poly.b)
    r, n = A_r.shape
    if math.comb(n, r) > cap:
        raise CapacityError(
            f"{poly.variable}: {math.comb(n, r)} candidate bases exceed cap {cap}; "
            f"use sampling mode"
        )
    vertices: list[np.ndarray] = []
    for cols in itertools.combinations(range(n), r):
        B = A_r[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b_r)
        if xb.min() < -tol:
            continue
        x = np.zeros(n)
        x[list(cols)] = np.clip(xb, 0.0, None)
        if np.max(np.abs(poly.A @ x - poly.b)) > tol:
            continue
        if any(np.max(np.abs(x - v)) <= tol for v in vertices):
            continue
        vertices.append(x)
    return vertices


def sample_vertices(poly: CredalPolytope, n: int, seed: int) -> list[np.ndarray]:
    """Vertices reached by minimizing random linear objectives.

    An inner approximation of the vertex set for polytopes too large to sweep.
    """
    rng = np.random.default_rng(seed)
    vertices: list[np.ndarray] = []
    for _ in range(n):
        res = linprog(rng.standard_normal(poly.dimension), A_eq=poly.A, b_eq=poly.b,
                      bounds=(0, None), method="highs-ds")
        if res.status != 0:
            raise InfeasibleError(f"family inconsistent with data for {poly.variable}")
        x = np.clip(res.x, 0.0, None)
        if not any(np.max(np.abs(x - v)) <= VERTEX_TOL for v in vertices):
            vertices.append(x)
    return vertices


def any_point(poly: CredalPolytope) -> np.ndarray:
    res = linprog(np.zeros(poly.dimension), A_eq=poly.A, b_eq=poly.b,
                  bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise InfeasibleError(f"family inconsistent with data for {poly.variable}")
    return np.clip(res.x, 0.0, None)


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    exact: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not (-1e-12 <= self.lower <= self.upper + 1e-12 and self.upper <= 1.0 + 1e-12):
            raise ValueError(f"invalid interval [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol


@dataclass(frozen=True)
class BoundConfig:
    """Budgets for exhaustive bounding; beyond them sampling takes over."""

    budget: int = 10**6
    basis_cap: int = 10**6
    samples: int = 10_000
    vertex_samples: int = 200
    seed: int = 0
    allow_sampling: bool = True


@dataclass(frozen=True)
class CounterfactualQuery:
    """p(event under do(intervention) | observed), callable on any FSCM."""

    observed: Mapping[str, int]
    intervention: Mapping[str, int]
    event: Event

    def __call__(self, fscm: Fscm) -> float:
        return counterfactual(fscm, self.observed, self.intervention, self.event)

    def relevant(self, graph: CausalGraph) -> set[str]:
        return graph.descendants(self.intervention) - set(self.intervention)


def credal_sets(
    pscm: Pscm, conditionals: Mapping[str, np.ndarray]
) -> dict[str, CredalPolytope]:
    return {n: credal_constraints(pscm.families[n], conditionals[n]) for n in pscm.names}


def vertex_sets(
    pscm: Pscm,
    conditionals: Mapping[str, np.ndarray],
    relevant: Iterable[str] | None = None,
    config: BoundConfig = BoundConfig(),
) -> tuple[dict[str, list[np.ndarray]], bool]:
    """Per-node vertex lists and whether they are complete.

    Nodes outside ``relevant`` get a single feasible point since the query
    does not depend on their weights.
    """
    polys = credal_sets(pscm, conditionals)
    relevant = set(pscm.names if relevant is None else relevant)
    exact = True
    out = {}
    for n in pscm.order:
        if n not in relevant:
            out[n] = [any_point(polys[n])]
            continue
        try:
            out[n] = enumerate_vertices(polys[n], cap=config.basis_cap)
        except CapacityError:
            if not config.allow_sampling:
                raise
            out[n] = sample_vertices(polys[n], config.vertex_samples, config.seed)
            exact = False
        if not out[n]:
            raise InfeasibleError(f"family inconsistent with data for {n}")
    return out, exact


def bound_over_vertices(
    pscm: Pscm,
    vertices: Mapping[str, Sequence[np.ndarray]],
    query: Callable[[Fscm], float],
    config: BoundConfig = BoundConfig(),
    exact: bool = True,
) -> Interval:
    names = pscm.order
    sizes = [len(vertices[n]) for n in names]
    total = math.prod(sizes)
    if total <= config.budget:
        combos: Iterable[Sequence[int]] = itertools.product(*(range(s) for s in sizes))
    else:
        if not config.allow_sampling:
            raise CapacityError(f"{total} vertex products exceed budget {config.budget}")
        rng = np.random.default_rng(config.seed)
        combos = (
            [int(rng.integers(s)) for s in sizes] for _ in range(config.samples)
        )
        exact = False
    lo, hi = math.inf, -math.inf
    for combo in combos:
        fscm = pscm.to_fscm({n: vertices[n][i] for n, i in zip(names, combo)})
        value = query(fscm)
        lo = min(lo, value)
        hi = max(hi, value)
    return Interval(max(lo, 0.0), min(hi, 1.0), exact)


def counterfactual_bounds(
    pscm: Pscm,
    data: Mapping[str, np.ndarray] | Iterable[Mapping[str, int]],
    query: Callable[[Fscm], float],
    relevant: Iterable[str] | None = None,
    config: BoundConfig = BoundConfig(),
) -> Interval:
    """Bounds of ``query`` over every FSCM in the PSCM's credal set.

    ``data`` is either per-node conditionals or an iterable of concept rows.
    ``query`` maps an FSCM to a probability; a :class:`CounterfactualQuery`
    also reports which nodes it depends on, narrowing the sweep.
    """
    conditionals = _as_conditionals(pscm, data)
    if relevant is None and hasattr(query, "relevant"):
        relevant = query.relevant(pscm.graph)
    vertices, exact = vertex_sets(pscm, conditionals, relevant, config)
    return bound_over_vertices(pscm, vertices, query, config, exact)


def _as_conditionals(pscm, data):
    if isinstance(data, Mapping):
        return {n: np.asarray(data[n], dtype=float) for n in pscm.names}
    return empirical_conditionals(pscm, data)


def unique_fscm(
    pscm: Pscm, data: Mapping[str, np.ndarray] | Iterable[Mapping[str, int]],
    config: BoundConfig = BoundConfig(),
) -> Fscm:
    """The single FSCM consistent with the data, if the families pin it down."""
    conditionals = _as_conditionals(pscm, data)
    vertices, _ = vertex_sets(pscm, conditionals, None, BoundConfig(
        basis_cap=config.basis_cap, allow_sampling=False))
    weights = {}
    for n in pscm.names:
        vs = vertices[n]
        if len(vs) > 1:
            raise UnderdeterminedError(
                f"underdetermined: {len(vs)} vertices for {n}, e.g. "
                f"{np.round(vs[0], 12).tolist()} and {np.round(vs[1], 12).tolist()}"
            )
        w = vs[0]
        weights[n] = w / w.sum()
    return pscm.to_fscm(weights)
