"""Discrete Markovian structural causal models.

Every concept ``z_i`` is produced by one deterministic function drawn from a
finite table ``f_{i,u}`` indexed by its own exogenous variable ``u_i``.  The
exogenous variables are mutually independent, so all the query routines below
factorize per node.

Values are always handled as domain *indices* (``int``), never labels.
An assignment is a plain ``dict`` mapping concept names to indices.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from conceptcause.errors import ImpossibleEvidenceError, ModelError, QueryError

Assignment = dict[str, int]
Function = tuple[int, ...]
Event = Callable[[Mapping[str, int]], bool] | Mapping[str, int]

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ConceptVariable:
    name: str
    domain: tuple[str, ...]
    is_target_concept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(str(v) for v in self.domain))

    @property
    def cardinality(self) -> int:
        return len(self.domain)

    def index(self, label) -> int:
        """Domain index of ``label``, compared by its string form."""
        label = str(label)
        try:
            return self.domain.index(label)
        except ValueError:
            raise QueryError(
                f"value {label!r} not in domain of {self.name} {list(self.domain)}"
            ) from None


@dataclass(frozen=True)
class CausalGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(p for p, c in self.edges if c == node))

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(c for p, c in self.edges if p == node))

    def descendants(self, nodes: Iterable[str]) -> set[str]:
        """Strict descendants of ``nodes`` (the nodes themselves excluded unless
        reachable from another member)."""
        start = set(nodes)
        seen: set[str] = set()
        stack = [c for n in start for c in self.children(n)]
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self.children(n))
        return seen

    def ancestors(self, nodes: Iterable[str]) -> set[str]:
        seen: set[str] = set()
        stack = [p for n in nodes for p in self.parents(n)]
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self.parents(n))
        return seen

    def find_cycle(self) -> list[str] | None:
        """Return the nodes of one directed cycle, or ``None`` if acyclic."""
        color = dict.fromkeys(self.nodes, 0)
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        for p, c in self.edges:
            if p in succ and c in succ:
                succ[p].append(c)
        path: list[str] = []

        def visit(n):
            color[n] = 1
            path.append(n)
            for c in sorted(succ[n]):
                if color[c] == 1:
                    return path[path.index(c):]
                if color[c] == 0:
                    found = visit(c)
                    if found:
                        return found
            color[n] = 2
            path.pop()
            return None

        for n in sorted(self.nodes):
            if color[n] == 0:
                found = visit(n)
                if found:
                    return found
        return None


def topological_order(graph: CausalGraph) -> list[str]:
    """Parents before children; nodes grouped by longest distance from a root
    and sorted by name within a group."""
    cycle = graph.find_cycle()
    if cycle:
        raise ModelError(f"causal graph has a cycle through {cycle[0]!r}: {' -> '.join(cycle + cycle[:1])}")
    depth: dict[str, int] = {}

    def node_depth(n):
        if n not in depth:
            depth[n] = max((node_depth(p) + 1 for p in graph.parents(n)), default=0)
        return depth[n]

    return sorted(graph.nodes, key=lambda n: (node_depth(n), n))


@dataclass(frozen=True)
class FunctionTable:
    """Deterministic functions from parent assignments to child values.

    ``functions[u][k]`` is the child value index produced by function ``u`` on
    the ``k``-th parent assignment, parent assignments being enumerated
    lexicographically with the last parent varying fastest.
    """

    child: str
    parents: tuple[str, ...]
    functions: tuple[Function, ...]

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(
            self, "functions", tuple(tuple(int(v) for v in f) for f in self.functions)
        )

    def __len__(self):
        return len(self.functions)


# Same structure, used for the unweighted families of a PSCM.
FunctionFamily = FunctionTable


@dataclass(frozen=True)
class ExogenousDistribution:
    variable: str
    probabilities: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "probabilities", tuple(float(p) for p in self.probabilities)
        )


def parent_configs(cards: Sequence[int]) -> list[tuple[int, ...]]:
    return list(itertools.product(*(range(c) for c in cards)))


def config_index(values: Sequence[int], cards: Sequence[int]) -> int:
    idx = 0
    for v, c in zip(values, cards):
        idx = idx * c + v
    return idx


@dataclass(frozen=True)
class Fscm:
    """Fully specified Markovian SCM over discrete concepts."""

    variables: tuple[ConceptVariable, ...]
    graph: CausalGraph
    tables: Mapping[str, FunctionTable]
    exogenous: Mapping[str, ExogenousDistribution]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "tables", dict(self.tables))
        object.__setattr__(self, "exogenous", dict(self.exogenous))

    @cached_property
    def var(self) -> dict[str, ConceptVariable]:
        return {v.name: v for v in self.variables}

    @cached_property
    def order(self) -> list[str]:
        return topological_order(self.graph)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def cards(self, names: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.var[n].cardinality for n in names)

    def weights(self, name: str) -> np.ndarray:
        return np.asarray(self.exogenous[name].probabilities, dtype=float)

    def apply(self, name: str, u: int, assignment: Mapping[str, int]) -> int:
        table = self.tables[name]
        k = config_index([assignment[p] for p in table.parents], self.cards(table.parents))
        return table.functions[u][k]

    def conditional(self, name: str, assignment: Mapping[str, int]) -> np.ndarray:
        """p(name | parents as in ``assignment``) induced by the exogenous weights."""
        table = self.tables[name]
        k = config_index([assignment[p] for p in table.parents], self.cards(table.parents))
        out = np.zeros(self.var[name].cardinality)
        for f, w in zip(table.functions, self.exogenous[name].probabilities):
            out[f[k]] += w
        return out

    def with_weights(self, weights: Mapping[str, Sequence[float]]) -> Fscm:
        exo = dict(self.exogenous)
        for name, w in weights.items():
            exo[name] = ExogenousDistribution(name, tuple(w))
        return Fscm(self.variables, self.graph, self.tables, exo)

    def label_assignment(self, assignment: Mapping[str, int]) -> dict[str, str]:
        return {n: self.var[n].domain[v] for n, v in assignment.items()}

    def index_assignment(self, labels: Mapping[str, object]) -> Assignment:
        out = {}
        for n, v in labels.items():
            if n not in self.var:
                raise QueryError(f"unknown concept {n!r}")
            out[n] = self.var[n].index(v)
        return out


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


def _check_structure(variables, graph, tables) -> list[Violation]:
    out: list[Violation] = []
    names = [v.name for v in variables]
    var = {v.name: v for v in variables}
    if len(set(names)) != len(names):
        out.append(Violation("duplicate-name", "concept names are not unique"))
    for v in variables:
        if len(v.domain) < 2:
            out.append(Violation("domain", f"{v.name} needs at least 2 values"))
        if len(set(v.domain)) != len(v.domain):
            out.append(Violation("domain", f"{v.name} has repeated domain values"))
    if set(graph.nodes) != set(names):
        out.append(Violation("graph", "graph nodes differ from declared concepts"))
    for p, c in graph.edges:
        for end in (p, c):
            if end not in var:
                out.append(Violation("graph", f"edge endpoint {end!r} is not a node"))
    cycle = graph.find_cycle()
    if cycle:
        out.append(Violation("cycle", f"cycle through {' -> '.join(cycle + cycle[:1])}"))
    for n in names:
        table = tables.get(n)
        if table is None:
            out.append(Violation("missing-family", f"no function family for {n}"))
            continue
        if set(table.parents) != set(graph.parents(n)):
            out.append(
                Violation("parents", f"family of {n} lists parents {list(table.parents)}, graph has {list(graph.parents(n))}")
            )
            continue
        if any(p not in var for p in table.parents):
            continue
        n_cfg = math.prod(var[p].cardinality for p in table.parents)
        if not table.functions:
            out.append(Violation("empty-family", f"family of {n} is empty"))
        if len(set(table.functions)) != len(table.functions):
            out.append(Violation("duplicate-function", f"family of {n} repeats a function"))
        for u, f in enumerate(table.functions):
            if len(f) != n_cfg:
                out.append(Violation("domain-mismatch", f"function {u} of {n} has {len(f)} entries, expected {n_cfg}"))
            elif any(not 0 <= v < var[n].cardinality for v in f):
                out.append(Violation("domain-mismatch", f"function {u} of {n} outputs a value outside the domain"))
    return out


def validate(fscm: Fscm) -> list[Violation]:
    """List every structural or numeric problem; empty iff well formed."""
    out = _check_structure(fscm.variables, fscm.graph, fscm.tables)
    for n in fscm.names:
        exo = fscm.exogenous.get(n)
        table = fscm.tables.get(n)
        if exo is None:
            out.append(Violation("missing-exogenous", f"no exogenous distribution for {n}"))
            continue
        if table is not None and len(exo.probabilities) != len(table.functions):
            out.append(Violation("weight-length", f"{n} has {len(exo.probabilities)} weights for {len(table.functions)} functions"))
        if any(p < 0 or not math.isfinite(p) for p in exo.probabilities):
            out.append(Violation("weight-sign", f"{n} has a negative or non-finite weight"))
        total = math.fsum(exo.probabilities)
        if abs(total - 1.0) > WEIGHT_TOL:
            out.append(Violation("weight-sum", f"weights of {n} sum to {total!r}"))
    return out


def _check_intervention(fscm: Fscm, intervention: Mapping[str, int]) -> None:
    for n, v in intervention.items():
        if n not in fscm.var:
            raise QueryError(f"intervention target {n!r} is not a concept variable")
        if not 0 <= v < fscm.var[n].cardinality:
            raise QueryError(f"intervention value {v} out of range for {n}")


def _check_total(fscm: Fscm, assignment: Mapping[str, int]) -> None:
    missing = [n for n in fscm.names if n not in assignment]
    if missing:
        raise QueryError(f"assignment is not total; missing {missing}")
    for n in fscm.names:
        if not 0 <= assignment[n] < fscm.var[n].cardinality:
            raise QueryError(f"value {assignment[n]} out of range for {n}")


def evaluate(
    fscm: Fscm, u: Mapping[str, int], intervention: Mapping[str, int] | None = None
) -> Assignment:
    """Endogenous values determined by function indices ``u``."""
    intervention = intervention or {}
    _check_intervention(fscm, intervention)
    out: Assignment = {}
    for n in fscm.order:
        if n in intervention:
            out[n] = intervention[n]
            continue
        if not 0 <= u[n] < len(fscm.tables[n]):
            raise QueryError(f"function index {u[n]} out of range for {n}")
        out[n] = fscm.apply(n, u[n], out)
    return out


def joint_probability(fscm: Fscm, assignment: Mapping[str, int]) -> float:
    _check_total(fscm, assignment)
    p = 1.0
    for n in fscm.order:
        p *= fscm.conditional(n, assignment)[assignment[n]]
    return p


def abduct(fscm: Fscm, observed: Mapping[str, int]) -> dict[str, np.ndarray]:
    """Posterior over function indices per node given a total observation."""
    _check_total(fscm, observed)
    posterior = {}
    for n in fscm.order:
        table = fscm.tables[n]
        k = config_index([observed[p] for p in table.parents], fscm.cards(table.parents))
        w = fscm.weights(n).copy()
        for u, f in enumerate(table.functions):
            if f[k] != observed[n]:
                w[u] = 0.0
        total = math.fsum(w)
        if total <= 0.0:
            raise ImpossibleEvidenceError(
                f"impossible evidence: no function of {n} with positive weight "
                f"produces the observed value"
            )
        posterior[n] = w / total
    return posterior


def _event_fn(event: Event) -> Callable[[Mapping[str, int]], bool]:
    if callable(event):
        return event
    target = dict(event)
    return lambda a: all(a[k] == v for k, v in target.items())


def counterfactual_distribution(
    fscm: Fscm,
    observed: Mapping[str, int],
    intervention: Mapping[str, int],
) -> tuple[list[str], dict[tuple[int, ...], float]]:
    """Distribution of the intervention's descendants in the counterfactual world.

    Returns the descendant names (topological order) and a map from their joint
    values to probabilities.  Every other concept keeps its observed value (or
    the intervened one), so this fully describes the counterfactual world.
    """
    _check_intervention(fscm, intervention)
    posterior = abduct(fscm, observed)
    desc = fscm.graph.descendants(intervention) - set(intervention)
    names = [n for n in fscm.order if n in desc]
    base = dict(observed)
    base.update(intervention)
    dist: dict[tuple[int, ...], float] = {}

    def walk(i, current, prob, values):
        if i == len(names):
            key = tuple(values)
            dist[key] = dist.get(key, 0.0) + prob
            return
        n = names[i]
        table = fscm.tables[n]
        k = config_index([current[p] for p in table.parents], fscm.cards(table.parents))
        mass = np.zeros(fscm.var[n].cardinality)
        for u, f in enumerate(table.functions):
            mass[f[k]] += posterior[n][u]
        for v in range(len(mass)):
            if mass[v] > 0.0:
                current[n] = v
                walk(i + 1, current, prob * mass[v], values + [v])
        current[n] = base[n]

    walk(0, dict(base), 1.0, [])
    return names, dist


def counterfactual_world(
    observed: Mapping[str, int], intervention: Mapping[str, int],
    names: Sequence[str], values: Sequence[int],
) -> Assignment:
    world = dict(observed)
    world.update(intervention)
    world.update(zip(names, values))
    return world


def counterfactual(
    fscm: Fscm,
    observed: Mapping[str, int],
    intervention: Mapping[str, int],
    event: Event,
) -> float:
    """Abduction, action, prediction: p(event in the intervened world | observed)."""
    if not intervention:
        raise QueryError("intervention must not be empty")
    test = _event_fn(event)
    names, dist = counterfactual_distribution(fscm, observed, intervention)
    total = 0.0
    for values, p in dist.items():
        if test(counterfactual_world(observed, intervention, names, values)):
            total += p
    return total


def truncated_joint(
    fscm: Fscm, intervention: Mapping[str, int], nodes: Iterable[str] | None = None
) -> dict[tuple[int, ...], float]:
    """Joint over ``nodes`` (default all, topological order) under ``do``.

    Nodes outside the ancestral closure of ``nodes`` are never enumerated.
    """
    _check_intervention(fscm, intervention)
    wanted = set(fscm.names if nodes is None else nodes)
    keep = wanted | fscm.graph.ancestors(wanted)
    order = [n for n in fscm.order if n in keep]
    out_names = [n for n in order if n in wanted]
    dist: dict[tuple[int, ...], float] = {}

    def walk(i, current, prob):
        if i == len(order):
            key = tuple(current[n] for n in out_names)
            dist[key] = dist.get(key, 0.0) + prob
            return
        n = order[i]
        if n in intervention:
            current[n] = intervention[n]
            walk(i + 1, current, prob)
            return
        cond = fscm.conditional(n, current)
        for v, p in enumerate(cond):
            if p > 0.0:
                current[n] = v
                walk(i + 1, current, prob * p)
        current.pop(n, None)

    walk(0, {}, 1.0)
    return dist


def interventional(
    fscm: Fscm,
    intervention: Mapping[str, int],
    condition: Mapping[str, int],
    query: Sequence[str],
) -> dict[tuple[int, ...], float]:
    """p(query | do(intervention), condition) by truncated factorization.

    ``condition`` may only mention non-descendants of the intervened
    variables; anything else is a counterfactual question.
    """
    if not intervention:
        raise QueryError("intervention must not be empty")
    desc = fscm.graph.descendants(intervention) - set(intervention)
    bad = sorted(set(condition) & desc)
    if bad:
        raise QueryError(
            f"counterfactual query required: condition on {bad} which are "
            f"descendants of the intervention"
        )
    for n in list(condition) + list(query):
        if n not in fscm.var:
            raise QueryError(f"unknown concept {n!r}")
    joint_names = [n for n in fscm.order if n in set(condition) | set(query)]
    joint = truncated_joint(fscm, intervention, joint_names)
    pos = {n: i for i, n in enumerate(joint_names)}
    out: dict[tuple[int, ...], float] = {}
    norm = 0.0
    for key, p in joint.items():
        if all(key[pos[n]] == v for n, v in condition.items()):
            norm += p
            qk = tuple(key[pos[n]] for n in query)
            out[qk] = out.get(qk, 0.0) + p
    if norm <= 0.0:
        raise ImpossibleEvidenceError("conditioning event has probability zero")
    return {k: out[k] / norm for k in sorted(out)}


def marginal(fscm: Fscm, name: str) -> np.ndarray:
    dist = truncated_joint(fscm, {}, [name])
    out = np.zeros(fscm.var[name].cardinality)
    for (v,), p in dist.items():
        out[v] += p
    return out


def sample(fscm: Fscm, seed: int, n: int) -> list[Assignment]:
    """``n`` i.i.d. draws of the endogenous concepts, reproducible from ``seed``."""
    if n < 0:
        raise QueryError("n must be non-negative")
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    cols: dict[str, np.ndarray] = {}
    for name in fscm.order:
        table = fscm.tables[name]
        funcs = np.asarray(table.functions, dtype=np.int64)
        u = rng.choice(len(table.functions), size=n, p=fscm.weights(name))
        k = np.zeros(n, dtype=np.int64)
        for p, c in zip(table.parents, fscm.cards(table.parents)):
            k = k * c + cols[p]
        cols[name] = funcs[u, k]
    names = fscm.names
    stacked = np.stack([cols[nm] for nm in names], axis=1).tolist()
    return [dict(zip(names, row)) for row in stacked]


def all_assignments(fscm: Fscm) -> Iterable[Assignment]:
    names = fscm.names
    for values in itertools.product(*(range(fscm.var[n].cardinality) for n in names)):
        yield dict(zip(names, values))


def root_table(name: str, card: int) -> FunctionTable:
    """Family of constant functions, one per value, for a parentless concept."""
    return FunctionTable(name, (), tuple((v,) for v in range(card)))


def build_fscm(
    variables: Sequence[ConceptVariable],
    edges: Iterable[tuple[str, str]],
    families: Mapping[str, tuple[Sequence[Function], Sequence[float]]],
) -> Fscm:
    """Convenience constructor; parents of each family follow sorted graph order."""
    graph = CausalGraph(tuple(v.name for v in variables), tuple(edges))
    tables, exo = {}, {}
    for name, (functions, weights) in families.items():
        tables[name] = FunctionTable(name, graph.parents(name), tuple(functions))
        exo[name] = ExogenousDistribution(name, tuple(weights))
    return Fscm(tuple(variables), graph, tables, exo)
