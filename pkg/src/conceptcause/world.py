"""Concept-to-feature maps, black-box classifiers and datasets.

The feature vector ``x`` is integer coded.  A :class:`SlotMap` lays the
concepts out first (one slot each by default) and appends ``k`` nuisance
slots holding ``w``; concepts and nuisance never share a slot, which keeps
``z`` and ``w`` independent by construction.
"""

from __future__ import annotations

import abc
import csv
import io
import itertools
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from conceptcause.errors import ModelError, QueryError
from conceptcause.rules import Pred, Rule, evaluate_rule, format_rule, parse_rule, predicates
from conceptcause.scm import ConceptVariable, Fscm, sample

Features = tuple[int, ...]
Nuisance = tuple[int, ...]


class ConceptToDataMap(abc.ABC):
    """Deterministic decoder ``(z, w) -> x`` with its exact inverse."""

    concepts: tuple[ConceptVariable, ...]

    @abc.abstractmethod
    def decode(self, z: Mapping[str, int], w: Sequence[int]) -> Features: ...

    @abc.abstractmethod
    def encode(self, x: Sequence[int]) -> tuple[dict[str, int], Nuisance]: ...

    @property
    @abc.abstractmethod
    def slot_domains(self) -> dict[str, tuple[str, ...]]:
        """Slot name to slot value labels, in feature order."""

    @property
    def dimension(self) -> int:
        return len(self.slot_domains)

    @abc.abstractmethod
    def nuisance_space(self) -> list[Nuisance]: ...


@dataclass(frozen=True)
class SlotMap(ConceptToDataMap):
    """Concept slots followed by ``n_nuisance`` nuisance slots ``w0, w1, ...``.

    ``composite`` spreads a concept over several slots: the concept's value
    index is written in mixed radix over ``(slot, cardinality)`` pairs, first
    slot most significant.  This lets a coarse concept stand for several
    fine-grained features.
    """

    concepts: tuple[ConceptVariable, ...]
    n_nuisance: int = 3
    nuisance_card: int = 2
    composite: Mapping[str, tuple[tuple[str, int], ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        object.__setattr__(self, "composite", {k: tuple(tuple(s) for s in v) for k, v in self.composite.items()})
        for c in self.concepts:
            if c.name in self.composite:
                size = math.prod(card for _, card in self.composite[c.name])
                if size != c.cardinality:
                    raise ModelError(f"slots of {c.name} encode {size} values, domain has {c.cardinality}")
        names = list(self.slot_domains)
        if len(set(names)) != len(names):
            raise ModelError("feature slot names collide")

    @classmethod
    def for_model(cls, model, n_nuisance: int = 3, nuisance_card: int = 2, composite=None):
        """Concept slots in the model's topological order."""
        return cls(tuple(model.var[n] for n in model.order), n_nuisance, nuisance_card, composite or {})

    @cached_property
    def slot_domains(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, tuple[str, ...]] = {}
        for c in self.concepts:
            if c.name in self.composite:
                for slot, card in self.composite[c.name]:
                    out[slot] = tuple(str(i) for i in range(card))
            else:
                out[c.name] = c.domain
        for i in range(self.n_nuisance):
            out[f"w{i}"] = tuple(str(v) for v in range(self.nuisance_card))
        return out

    @property
    def concept_names(self) -> list[str]:
        return [c.name for c in self.concepts]

    def nuisance_space(self) -> list[Nuisance]:
        return list(itertools.product(range(self.nuisance_card), repeat=self.n_nuisance))

    def decode(self, z: Mapping[str, int], w: Sequence[int]) -> Features:
        if len(w) != self.n_nuisance:
            raise QueryError(f"w has {len(w)} entries, map declares {self.n_nuisance}")
        x: list[int] = []
        for c in self.concepts:
            if c.name not in z:
                raise QueryError(f"z is missing concept {c.name}")
            v = z[c.name]
            if not 0 <= v < c.cardinality:
                raise QueryError(f"value {v} outside domain of {c.name}")
            if c.name in self.composite:
                digits = []
                for _, card in reversed(self.composite[c.name]):
                    digits.append(v % card)
                    v //= card
                x.extend(reversed(digits))
            else:
                x.append(v)
        for v in w:
            if not 0 <= v < self.nuisance_card:
                raise QueryError(f"nuisance value {v} outside 0..{self.nuisance_card - 1}")
        return tuple(x) + tuple(int(v) for v in w)

    def encode(self, x: Sequence[int]) -> tuple[dict[str, int], Nuisance]:
        if len(x) != self.dimension:
            raise QueryError(f"x has {len(x)} slots, map declares {self.dimension}")
        for v, labels in zip(x, self.slot_domains.values()):
            if not 0 <= v < len(labels):
                raise QueryError(f"malformed feature vector {tuple(x)}")
        z: dict[str, int] = {}
        i = 0
        for c in self.concepts:
            if c.name in self.composite:
                v = 0
                for _, card in self.composite[c.name]:
                    v = v * card + x[i]
                    i += 1
                z[c.name] = v
            else:
                z[c.name] = int(x[i])
                i += 1
        return z, tuple(int(v) for v in x[i:])


class BlackBoxClassifier(abc.ABC):
    """Deterministic ``h(x)``; returns an index into ``labels``."""

    labels: tuple[str, ...]

    @abc.abstractmethod
    def classify(self, x: Sequence[int]) -> int: ...

    def __call__(self, x: Sequence[int]) -> int:
        return self.classify(x)


class RuleClassifier(BlackBoxClassifier):
    """Predicts ``true_label`` where the rule holds and ``false_label`` elsewhere."""

    def __init__(self, rule: str | Rule, slots: Mapping[str, Sequence[str]],
                 true_label: str = "1", false_label: str = "0",
                 labels: Sequence[str] = ("0", "1")):
        self.rule = parse_rule(rule) if isinstance(rule, str) else rule
        self.labels = tuple(str(v) for v in labels)
        self.slots = {k: tuple(v) for k, v in slots.items()}
        for lab in (true_label, false_label):
            if str(lab) not in self.labels:
                raise ModelError(f"output {lab!r} not among labels {list(self.labels)}")
        self.true_label, self.false_label = str(true_label), str(false_label)
        self._true = self.labels.index(self.true_label)
        self._false = self.labels.index(self.false_label)
        position = {name: i for i, name in enumerate(self.slots)}
        self._tests: dict[Pred, tuple[int, int]] = {}
        for p in predicates(self.rule):
            if p.name not in self.slots:
                raise ModelError(f"rule references undeclared slot {p.name!r}")
            if p.value not in self.slots[p.name]:
                raise ModelError(f"rule compares {p.name} with {p.value!r}, not in {list(self.slots[p.name])}")
            self._tests[p] = (position[p.name], self.slots[p.name].index(p.value))

    @property
    def text(self) -> str:
        return format_rule(self.rule)

    def classify(self, x: Sequence[int]) -> int:
        def holds(p):
            i, v = self._tests[p]
            return x[i] == v

        return self._true if evaluate_rule(self.rule, holds) else self._false


class LookupClassifier(BlackBoxClassifier):
    """Table-driven classifier; unlisted inputs get ``default``."""

    def __init__(self, table: Mapping[Features, int], labels: Sequence[str] = ("0", "1"), default: int = 0):
        self.table = {tuple(k): int(v) for k, v in table.items()}
        self.labels = tuple(labels)
        self.default = default

    def classify(self, x):
        return self.table.get(tuple(x), self.default)


class FunctionClassifier(BlackBoxClassifier):
    def __init__(self, fn: Callable[[Sequence[int]], int], labels: Sequence[str] = ("0", "1")):
        self.fn = fn
        self.labels = tuple(labels)

    def classify(self, x):
        return int(self.fn(tuple(x)))


@dataclass(frozen=True)
class Instance:
    z: Mapping[str, int]
    w: Nuisance
    x: Features
    yhat: int

    @property
    def key(self) -> tuple:
        return tuple(sorted(self.z.items())), self.w


def make_instance(map_: ConceptToDataMap, h: BlackBoxClassifier,
                  z: Mapping[str, int], w: Sequence[int]) -> Instance:
    x = map_.decode(z, w)
    return Instance(dict(z), tuple(w), x, h.classify(x))


@dataclass(frozen=True)
class Dataset:
    instances: tuple[Instance, ...]
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def concept_rows(self) -> list[Mapping[str, int]]:
        return [inst.z for inst in self.instances]


def uniform_nuisance(map_: ConceptToDataMap) -> dict[Nuisance, float]:
    space = map_.nuisance_space()
    return {w: 1.0 / len(space) for w in space}


def generate_dataset(
    fscm: Fscm,
    map_: ConceptToDataMap,
    h: BlackBoxClassifier,
    n: int,
    seed: int,
    w_distribution: Mapping[Nuisance, float] | None = None,
) -> Dataset:
    """Sample ``z`` from the FSCM and ``w`` independently, then decode and classify."""
    if n < 0:
        raise QueryError("n must be non-negative")
    w_distribution = w_distribution or uniform_nuisance(map_)
    z_seed, w_seed = np.random.SeedSequence(seed).spawn(2)
    rows = sample(fscm, z_seed, n)
    space = list(w_distribution)
    probs = np.asarray([w_distribution[w] for w in space], dtype=float)
    picks = np.random.default_rng(w_seed).choice(len(space), size=n, p=probs / probs.sum()) if n else []
    cache: dict[tuple, Instance] = {}
    out = []
    for z, k in zip(rows, picks):
        key = (tuple(z.items()), int(k))
        inst = cache.get(key)
        if inst is None:
            inst = cache[key] = make_instance(map_, h, z, space[int(k)])
        out.append(inst)
    return Dataset(tuple(out), {"seed": seed, "n": n})


def filter_dataset(dataset: Dataset, condition: Mapping[str, int], yhat: int | None = None) -> Dataset:
    """Members matching every concept value in ``condition`` and, if given, ``yhat``."""
    kept = tuple(
        inst for inst in dataset.instances
        if all(inst.z.get(k) == v for k, v in condition.items())
        and (yhat is None or inst.yhat == yhat)
    )
    return Dataset(kept, dict(dataset.metadata))


def write_csv(dataset: Dataset, concept_names: Sequence[str], n_nuisance: int, out=None) -> str:
    """Integer-coded CSV, header ``concept:<name>,...,w:<i>,...,yhat``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"concept:{n}" for n in concept_names]
                    + [f"w:{i}" for i in range(n_nuisance)] + ["yhat"])
    for inst in dataset:
        writer.writerow([inst.z[n] for n in concept_names] + list(inst.w) + [inst.yhat])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text, encoding="utf-8", newline="")
    return text


def read_csv(source: str | Path, map_: ConceptToDataMap) -> Dataset:
    """Load a dataset written by :func:`write_csv`; ``x`` is rebuilt by decoding.

    ``source`` is a path, or CSV text when it contains a newline.
    """
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise QueryError("dataset CSV is empty")
    concepts, nuisance, y_col = [], [], None
    for i, col in enumerate(header):
        if col.startswith("concept:"):
            concepts.append((i, col[len("concept:"):]))
        elif col.startswith("w:"):
            nuisance.append(i)
        elif col == "yhat":
            y_col = i
        else:
            raise QueryError(f"unknown CSV column {col!r}")
    if y_col is None:
        raise QueryError("dataset CSV has no yhat column")
    declared = {c.name for c in map_.concepts}
    unknown = sorted({name for _, name in concepts} - declared)
    if unknown:
        raise QueryError(f"unknown concept column {unknown[0]!r}")
    if {name for _, name in concepts} != declared or len(nuisance) != map_.n_nuisance:
        raise QueryError(f"CSV columns do not match the map: need concepts {sorted(declared)} "
                         f"and {map_.n_nuisance} nuisance columns")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            z = {name: int(row[i]) for i, name in concepts}
            w = tuple(int(row[i]) for i in nuisance)
            yhat = int(row[y_col])
        except (ValueError, IndexError):
            raise QueryError(f"malformed dataset row at line {lineno}") from None
        out.append(Instance(z, w, map_.decode(z, w), yhat))
    return Dataset(tuple(out), {"source": str(source) if "\n" not in str(source) else "<text>"})
