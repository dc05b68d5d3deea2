"""JSON model spec files: parsing to a bundle and emitting back.

A spec lists the concepts, the edges, one function family per concept as
truth tables (keys are comma-joined parent values, ``""`` for roots), the
slot map and the rule classifier.  Families with weights make an FSCM; a
spec without any weights is a PSCM whose weights come from data.  A family
given as ``{"canonical": true}`` (or left out in PSCM mode) allows every
function.
"""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Mapping
from importlib import resources
from pathlib import Path

from conceptcause.credal import Pscm, canonical_functions, validate_pscm
from conceptcause.errors import ModelError
from conceptcause.explain import ModelBundle
from conceptcause.rules import RuleSyntaxError
from conceptcause.scm import (
    CausalGraph,
    ConceptVariable,
    ExogenousDistribution,
    Fscm,
    FunctionTable,
    Violation,
    validate,
)
from conceptcause.world import RuleClassifier, SlotMap

FORMAT_VERSION = 1


class SpecError(ModelError):
    """Spec file problem; ``line``/``column`` locate it in the source text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 violations: list[Violation] | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line, self.column = line, column
        self.violations = violations or []


def _locate(text: str, token: str) -> tuple[int | None, int | None]:
    pos = text.find(json.dumps(token))
    if pos < 0:
        return None, None
    line = text.count("\n", 0, pos) + 1
    column = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, column


def _fail(text: str, message: str, token: str | None = None, violations=None):
    line, column = _locate(text, token) if token else (None, None)
    raise SpecError(message, line, column, violations)


def shipped_models() -> list[str]:
    root = resources.files("conceptcause") / "models"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_model(name_or_path: str) -> str:
    """Spec text for a shipped model name or a file path."""
    if name_or_path in shipped_models():
        return (resources.files("conceptcause") / "models" / f"{name_or_path}.json").read_text(encoding="utf-8")
    path = Path(name_or_path)
    if not path.exists():
        raise SpecError(f"no shipped model or file named {name_or_path!r}")
    return path.read_text(encoding="utf-8")


def _truth_table(text, name, table, parents, var) -> tuple[int, ...]:
    if not isinstance(table, Mapping):
        _fail(text, f"family of {name}: truth table must be an object", name)
    configs = list(itertools.product(*(var[p].domain for p in parents)))
    values = []
    for cfg in configs:
        key = ",".join(cfg)
        if key not in table:
            _fail(text, f"family of {name}: truth table lacks parent assignment {key!r}", name)
        label = str(table[key])
        if label not in var[name].domain:
            _fail(text, f"family of {name}: value {label!r} not in domain", name)
        values.append(var[name].domain.index(label))
    extra = set(table) - {",".join(c) for c in configs}
    if extra:
        _fail(text, f"family of {name}: unknown parent assignment {sorted(extra)[0]!r}", name)
    return tuple(values)


def parse_model_spec(text: str) -> ModelBundle:
    """Parse and validate; the first problem raises :class:`SpecError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, Mapping):
        _fail(text, "spec must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        _fail(text, f"format_version must be {FORMAT_VERSION}", "format_version")

    variables = []
    for c in doc.get("concepts", []):
        try:
            variables.append(ConceptVariable(c["name"], tuple(c["domain"]), bool(c.get("target", False))))
        except (KeyError, TypeError):
            _fail(text, "each concept needs a name and a domain", "concepts")
    var = {v.name: v for v in variables}
    edges = []
    for e in doc.get("edges", []):
        if not (isinstance(e, list) and len(e) == 2):
            _fail(text, f"edge {e!r} must be a [parent, child] pair", "edges")
        for end in e:
            if end not in var:
                _fail(text, f"edge refers to undeclared concept {end!r}", end)
        edges.append((e[0], e[1]))
    graph = CausalGraph(tuple(var), tuple(edges))

    families_doc = doc.get("families", {})
    for name in families_doc:
        if name not in var:
            _fail(text, f"family given for undeclared concept {name!r}", name)
    weighted = {n for n, f in families_doc.items() if "weights" in f}
    fscm_mode = bool(weighted)
    if fscm_mode and weighted != set(var):
        missing = sorted(set(var) - weighted)
        _fail(text, f"weights given for some families but not for {missing}", missing[0] if missing[0] in families_doc else None)

    tables, exo = {}, {}
    for name in var:
        fam = families_doc.get(name, {"canonical": True})
        parents = tuple(fam.get("parents", graph.parents(name)))
        for p in parents:
            if p not in var:
                _fail(text, f"family of {name} names undeclared parent {p!r}", p)
        if set(parents) != set(graph.parents(name)):
            _fail(text, f"family of {name} lists parents {list(parents)}, edges give {list(graph.parents(name))}", name)
        if fam.get("canonical"):
            functions = canonical_functions(var[name].cardinality, [var[p].cardinality for p in parents])
        else:
            if "functions" not in fam:
                _fail(text, f"family of {name} needs functions or canonical", name)
            functions = tuple(_truth_table(text, name, t, parents, var) for t in fam["functions"])
        tables[name] = FunctionTable(name, parents, functions)
        if fscm_mode:
            exo[name] = ExogenousDistribution(name, tuple(float(w) for w in fam["weights"]))

    if fscm_mode:
        model = Fscm(tuple(variables), graph, tables, exo)
        violations = validate(model)
    else:
        model = Pscm(tuple(variables), graph, tables)
        violations = validate_pscm(model)
    if violations:
        first = violations[0]
        token = next((n for n in var if n in first.message), None)
        _fail(text, f"invalid model: {first}", token, violations)

    map_doc = doc.get("map", {})
    map_ = SlotMap.for_model(
        model, int(map_doc.get("nuisance_slots", 3)), int(map_doc.get("nuisance_cardinality", 2)),
        {k: tuple(tuple(s) for s in v) for k, v in map_doc.get("composite", {}).items()},
    )
    cdoc = doc.get("classifier")
    if not cdoc or "rule" not in cdoc:
        _fail(text, "classifier.rule is required", "classifier")
    try:
        h = RuleClassifier(cdoc["rule"], map_.slot_domains, str(cdoc.get("true", "1")),
                           str(cdoc.get("false", "0")), tuple(cdoc.get("labels", ("0", "1"))))
    except RuleSyntaxError as exc:
        line, col = _locate(text, cdoc["rule"])
        raise SpecError(str(exc), line, None if col is None else col + exc.column) from None
    except ModelError as exc:
        _fail(text, str(exc), cdoc["rule"])
    return ModelBundle(model, map_, h)


def spec_dict(bundle: ModelBundle) -> dict:
    model = bundle.model
    families = {}
    for name in model.names:
        table = model.tables[name] if isinstance(model, Fscm) else model.families[name]
        var = model.var
        configs = list(itertools.product(*(var[p].domain for p in table.parents)))
        fam = {
            "parents": list(table.parents),
            "functions": [
                {",".join(cfg): var[name].domain[v] for cfg, v in zip(configs, f)}
                for f in table.functions
            ],
        }
        if isinstance(model, Fscm):
            fam["weights"] = list(model.exogenous[name].probabilities)
        families[name] = fam
    map_ = bundle.map
    h = bundle.classifier
    return {
        "format_version": FORMAT_VERSION,
        "concepts": [
            {"name": v.name, "domain": list(v.domain), "target": v.is_target_concept}
            for v in model.variables
        ],
        "edges": [list(e) for e in model.graph.edges],
        "families": families,
        "map": {
            "nuisance_slots": map_.n_nuisance,
            "nuisance_cardinality": map_.nuisance_card,
            "composite": {k: [list(s) for s in v] for k, v in map_.composite.items()},
        },
        "classifier": {"rule": h.text, "true": h.true_label, "false": h.false_label,
                       "labels": list(h.labels)},
    }


def emit_model_spec(bundle: ModelBundle) -> str:
    return json.dumps(spec_dict(bundle), indent=2) + "\n"
