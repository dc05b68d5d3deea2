"""Command-line entry point: ``conceptcause <command> ...``.

Every command prints one JSON report on stdout (``sample`` prints CSV unless
``--out`` is given).  Exit status is 0 on success, 1 when a query cannot be
answered and 2 when the model spec is invalid.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Mapping, Sequence

import numpy as np

from conceptcause import explain
from conceptcause.credal import (
    BoundConfig,
    CounterfactualQuery,
    Interval,
    counterfactual_bounds,
    empirical_conditionals,
    unique_fscm,
    validate_pscm,
)
from conceptcause.errors import ModelError, QueryError, UnderdeterminedError
from conceptcause.explain import GlobalContext, LocalContext, ModelBundle, SubgroupContext
from conceptcause.scm import validate
from conceptcause.spec_io import FORMAT_VERSION, SpecError, parse_model_spec, resolve_model
from conceptcause.tcav import fit_surrogate, tcav_score, train_probe
from conceptcause.world import (
    Dataset,
    Instance,
    filter_dataset,
    generate_dataset,
    make_instance,
    read_csv,
    write_csv,
)


def _pairs(items: Sequence[str] | None) -> list[tuple[str, str]]:
    out = []
    for item in items or []:
        for part in item.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise QueryError(f"expected NAME=VALUE, got {part!r}")
            name, value = part.split("=", 1)
            out.append((name.strip(), value.strip()))
    return out


def _assignment(bundle: ModelBundle, items) -> dict[str, int]:
    model = bundle.model
    out = {}
    for name, value in _pairs(items) if not isinstance(items, Mapping) else items.items():
        if name not in model.var:
            raise QueryError(f"unknown concept {name!r}")
        out[name] = model.var[name].index(value)
    return out


def _label_index(bundle: ModelBundle, label) -> int:
    labels = bundle.classifier.labels
    if str(label) not in labels:
        raise QueryError(f"prediction label {label!r} not among {list(labels)}")
    return labels.index(str(label))


def _labels(bundle: ModelBundle, assignment: Mapping[str, int]) -> dict[str, str]:
    return {n: bundle.model.var[n].domain[v] for n, v in assignment.items()}


def _value_field(value) -> dict:
    if isinstance(value, Interval):
        return {"interval": {"lower": value.lower, "upper": value.upper, "exact": value.exact}}
    return {"value": float(value)}


def _report(command: str, query: dict, value=None, count=None, diagnostics=None,
            explanation_text=None, **extra) -> dict:
    out = {"format_version": FORMAT_VERSION, "command": command, "query": query}
    if value is not None:
        out.update(_value_field(value))
    out.update(extra)
    if count is not None:
        out["count"] = count
    out["diagnostics"] = diagnostics or {}
    out["explanation_text"] = explanation_text
    return out


def _load_bundle(args) -> ModelBundle:
    return parse_model_spec(resolve_model(args.model))


def _load_data(bundle: ModelBundle, path: str | None, required: bool = True) -> Dataset | None:
    if path is None:
        if required:
            raise QueryError("--data is required for this command")
        return None
    return read_csv(path, bundle.map)


def _resolve_credal(bundle: ModelBundle, data: Dataset | None) -> tuple[ModelBundle, str]:
    """FSCM bundles pass through; PSCM bundles get a unique FSCM or bounds."""
    if not bundle.is_credal:
        return bundle, "fscm"
    if data is None:
        raise QueryError("a model without weights needs --data")
    conditionals = empirical_conditionals(bundle.model, data.concept_rows())
    try:
        return bundle.with_model(unique_fscm(bundle.model, conditionals)), "pscm-unique"
    except UnderdeterminedError:
        return bundle.with_conditionals(conditionals), "pscm-bounds"


def _load_instance(bundle: ModelBundle, path: str) -> Instance:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    z = _assignment(bundle, {k: str(v) for k, v in doc["z"].items()})
    missing = set(bundle.model.names) - set(z)
    if missing:
        raise QueryError(f"instance lacks concepts {sorted(missing)}")
    w = tuple(int(v) for v in doc.get("w", [0] * bundle.map.n_nuisance))
    inst = make_instance(bundle.map, bundle.classifier, z, w)
    if "yhat" in doc and _label_index(bundle, doc["yhat"]) != inst.yhat:
        raise QueryError("instance yhat does not match the classifier output")
    return inst


def cmd_validate(args) -> tuple[dict | str, int]:
    try:
        bundle = _load_bundle(args)
    except SpecError as exc:
        violations = [str(v) for v in exc.violations] or [str(exc)]
        return _report("validate", {"model": args.model}, valid=False, violations=violations), 2
    model = bundle.model
    violations = validate(model) if not bundle.is_credal else validate_pscm(model)
    report = _report("validate", {"model": args.model}, valid=not violations,
                     violations=[str(v) for v in violations],
                     diagnostics={"mode": "pscm" if bundle.is_credal else "fscm",
                                  "concepts": model.order})
    return report, (2 if violations else 0)


def cmd_sample(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    bundle, mode = _resolve_credal(bundle, _load_data(bundle, args.data, required=False))
    if bundle.is_credal:
        raise QueryError("sampling needs a uniquely determined FSCM")
    data = generate_dataset(bundle.model, bundle.map, bundle.classifier, args.n, args.seed)
    text = write_csv(data, bundle.map.concept_names, bundle.map.n_nuisance, args.out)
    if args.out is None:
        return text, 0
    return _report("sample", {"model": args.model, "n": args.n, "seed": args.seed},
                   diagnostics={"mode": mode, "out": args.out}), 0


def cmd_local(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    bundle, mode = _resolve_credal(bundle, _load_data(bundle, args.data, required=False))
    inst = _load_instance(bundle, args.instance)
    do = _assignment(bundle, args.do)
    target = _label_index(bundle, args.target)
    res = explain.local_ps(bundle, inst, do, target)
    text = explain.explanation_text(bundle, inst, do, target, res.value, args.threshold)
    query = {"z": _labels(bundle, inst.z), "w": list(inst.w),
             "yhat": bundle.classifier.labels[inst.yhat], "do": _labels(bundle, do),
             "target": args.target}
    diag = {"mode": mode, **res.diagnostics}
    return _report("query-local-ps", query, res.value, diagnostics=diag, explanation_text=text), 0


def cmd_subgroup(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    data = _load_data(bundle, args.data)
    bundle, mode = _resolve_credal(bundle, data)
    cond = _assignment(bundle, args.given)
    yhat = None if args.yhat is None else _label_index(bundle, args.yhat)
    do = _assignment(bundle, args.do)
    target = _label_index(bundle, args.target)
    res = explain.subgroup_ps(bundle, data, cond, yhat, do, target, strict=args.strict)
    query = {"given": _labels(bundle, cond), "yhat": args.yhat, "do": _labels(bundle, do),
             "target": args.target}
    return _report("query-subgroup-ps", query, res.value, res.count,
                   {"mode": mode, **res.diagnostics}), 0


def cmd_interventional(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    bundle, mode = _resolve_credal(bundle, _load_data(bundle, args.data, required=False))
    do = _assignment(bundle, args.do)
    target = _label_index(bundle, args.target)
    query = {"do": _labels(bundle, do), "target": args.target}
    if args.instance:
        inst = _load_instance(bundle, args.instance)
        res = explain.cbn_interventional(bundle, do, inst, target)
        query.update(given=_labels(bundle, res.query["condition"]), w=list(inst.w))
    elif args.given or args.w:
        cond = _assignment(bundle, args.given)
        w = tuple(int(v) for v in args.w.split(",")) if args.w else None
        res = explain.cbn_interventional(bundle, do, cond, target, w)
        query.update(given=_labels(bundle, cond), w=None if w is None else list(w))
    else:
        res = explain.global_interventional(bundle, do, target)
    return _report("query-interventional", query, res.value,
                   diagnostics={"mode": mode, **res.diagnostics}), 0


def cmd_interval(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    if not bundle.is_credal:
        raise QueryError("interval needs a model without weights (a PSCM)")
    data = _load_data(bundle, args.data)
    with open(args.query, encoding="utf-8") as fh:
        doc = json.load(fh)
    observed = _assignment(bundle, {k: str(v) for k, v in doc["observed"].items()})
    do = _assignment(bundle, {k: str(v) for k, v in doc["do"].items()})
    event = _assignment(bundle, {k: str(v) for k, v in doc["event"].items()})
    config = BoundConfig(budget=args.budget, seed=args.seed)
    conditionals = empirical_conditionals(bundle.model, data.concept_rows())
    interval = counterfactual_bounds(bundle.model, conditionals,
                                     CounterfactualQuery(observed, do, event), config=config)
    query = {"observed": _labels(bundle, observed), "do": _labels(bundle, do),
             "event": _labels(bundle, event)}
    return _report("interval", query, interval, diagnostics={"rows": len(data)}), 0


def _context(bundle, args, data):
    if args.instance:
        return LocalContext(_load_instance(bundle, args.instance))
    if data is not None:
        yhat = None if args.yhat is None else _label_index(bundle, args.yhat)
        return SubgroupContext(data, _assignment(bundle, args.given), yhat)
    return GlobalContext()


def cmd_attribute(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    data = _load_data(bundle, args.data, required=False)
    bundle, mode = _resolve_credal(bundle, data)
    context = _context(bundle, args, data)
    target = _label_index(bundle, args.target)
    candidates = None
    if args.candidates:
        _assignment(bundle, args.candidates)  # validates names
        candidates = [(n, bundle.model.var[n].index(v)) for n, v in _pairs(args.candidates)]
    rows = explain.singleton_attributions(bundle, context, target, candidates)
    table = []
    for r in rows:
        row = {"concept": r.concept, "value": bundle.model.var[r.concept].domain[r.value]}
        row.update(_value_field(r.ps))
        if r.count is not None:
            row["count"] = r.count
        table.append(row)
    query = {"context": type(context).__name__, "target": args.target}
    return _report("attribute", query, rows=table, diagnostics={"mode": mode}), 0


def cmd_contrastive(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    bundle, mode = _resolve_credal(bundle, _load_data(bundle, args.data, required=False))
    inst = _load_instance(bundle, args.instance)
    target = _label_index(bundle, args.target)
    found = explain.contrastive_search(bundle, inst, target, args.threshold, args.max_cardinality)
    rows = []
    for e in found:
        row = {"do": _labels(bundle, e.intervention), "cardinality": e.cardinality}
        row.update(_value_field(e.probability))
        row["explanation_text"] = explain.explanation_text(
            bundle, inst, e.intervention, target, e.probability, args.threshold)
        rows.append(row)
    query = {"z": _labels(bundle, inst.z), "target": args.target, "threshold": args.threshold,
             "max_cardinality": args.max_cardinality}
    best = rows[0]["explanation_text"] if rows else None
    return _report("contrastive", query, explanations=rows, diagnostics={"mode": mode},
                   explanation_text=best), 0


def cmd_tcav(args) -> tuple[dict | str, int]:
    bundle = _load_bundle(args)
    data = _load_data(bundle, args.data)
    var = bundle.model.var.get(args.concept)
    if var is None:
        raise QueryError(f"unknown concept {args.concept!r}")
    value = var.index(args.value)
    cls = _label_index(bundle, args.cls)
    xs = [inst.x for inst in data]
    scorer = fit_surrogate(xs, bundle.classifier)
    acts = np.vstack([scorer.activation(x) for x in xs])
    labels = [1 if inst.z[args.concept] == value else 0 for inst in data]
    direction = train_probe(acts, labels, args.concept, seed=args.seed)
    background = data
    if args.given or args.yhat is not None:
        yhat = None if args.yhat is None else _label_index(bundle, args.yhat)
        background = filter_dataset(data, _assignment(bundle, args.given), yhat)
    score = tcav_score(scorer, cls, direction, background)
    flipped = tcav_score(scorer, cls, direction, background, flip=True)
    query = {"concept": args.concept, "value": args.value, "class": args.cls, "seed": args.seed}
    return _report("tcav", query, score, len(background),
                   {"probe_accuracy": direction.accuracy, "flipped_score": flipped}), 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conceptcause", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--model", required=True, help="shipped model name or spec path")
        p.set_defaults(fn=fn)
        return p

    command("validate", cmd_validate, "check a model spec")

    p = command("sample", cmd_sample, "generate a dataset CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.add_argument("--data", help="data fixing the weights of a PSCM spec")

    p = command("query-local-ps", cmd_local, "sufficiency for one instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--do", action="append", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--data")

    p = command("query-subgroup-ps", cmd_subgroup, "sufficiency averaged over a subgroup")
    p.add_argument("--data", required=True)
    p.add_argument("--given", action="append")
    p.add_argument("--yhat")
    p.add_argument("--do", action="append", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--strict", action="store_true")

    p = command("query-interventional", cmd_interventional, "p(yhat | do(...))")
    p.add_argument("--do", action="append", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--given", action="append")
    p.add_argument("--w", help="comma-separated nuisance values held fixed")
    p.add_argument("--instance", help="condition on an instance's non-descendant values and w")
    p.add_argument("--data")

    p = command("interval", cmd_interval, "counterfactual bounds for a PSCM")
    p.add_argument("--data", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--budget", type=int, default=10**6)
    p.add_argument("--seed", type=int, default=0, help="used only when sampling kicks in")

    p = command("attribute", cmd_attribute, "single-concept sufficiency table")
    p.add_argument("--target", required=True)
    p.add_argument("--instance")
    p.add_argument("--data")
    p.add_argument("--given", action="append")
    p.add_argument("--yhat")
    p.add_argument("--candidates", action="append")

    p = command("contrastive", cmd_contrastive, "smallest sufficient interventions")
    p.add_argument("--instance", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--max-cardinality", type=int, default=2)
    p.add_argument("--data")

    p = command("tcav", cmd_tcav, "TCAV score of a concept on a surrogate scorer")
    p.add_argument("--data", required=True)
    p.add_argument("--concept", required=True)
    p.add_argument("--value", default="1")
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--given", action="append")
    p.add_argument("--yhat")
    return parser


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        report, code = args.fn(args)
    except ModelError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except (QueryError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    if isinstance(report, str):
        stdout.write(report)
    elif report is not None:
        stdout.write(json.dumps(report, indent=2) + "\n")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
