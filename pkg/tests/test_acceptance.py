"""Acceptance suite: one test per criterion, summarized at the end of the run."""

import itertools
import math
import time

import numpy as np
import pytest

from conceptcause import fixtures as F
from conceptcause import oracle
from conceptcause.credal import (
    CounterfactualQuery,
    Pscm,
    canonical_family,
    canonical_functions,
    canonical_size,
    counterfactual_bounds,
    induced_conditional,
    induced_conditionals,
    unique_fscm,
    vertex_sets,
)
from conceptcause.explain import (
    GlobalContext,
    LocalContext,
    cbn_interventional,
    contrastive_search,
    global_interventional,
    independence_ps,
    local_ps,
    subgroup_ps,
)
from conceptcause.scm import CausalGraph, ConceptVariable, FunctionTable, config_index, counterfactual, sample
from conceptcause.tcav import (
    DifferentiableScorer,
    LinearScorer,
    finite_difference_gradient,
    sensitivity,
    tcav_score,
    train_probe,
)
from conceptcause.world import filter_dataset, generate_dataset


def _random_intervention(rng, model, instance_z, k=None):
    names = model.names
    k = k or int(rng.integers(1, len(names) + 1))
    chosen = sorted(rng.choice(len(names), size=k, replace=False).tolist())
    return {names[i]: int(rng.integers(model.var[names[i]].cardinality)) for i in chosen}


@pytest.mark.criterion(1, "GrayHair family: induced conditionals and weight recovery")
def test_c1_gray_hair_family(note):
    t0 = time.perf_counter()
    functions, weights = F.gray_hair_family()
    family = FunctionTable("GrayHair", ("Gender", "Young"), tuple(functions))
    cond = induced_conditional(family, weights, 2)
    g1y0 = cond[config_index((1, 0), (2, 2)), 1]
    g0y1 = cond[config_index((0, 1), (2, 2)), 1]
    assert g1y0 == pytest.approx(0.226, abs=1e-9)
    assert g0y1 == pytest.approx(0.001, abs=1e-9)

    fscm = F.age_toy()
    recovered = unique_fscm(Pscm.of(fscm), induced_conditionals(fscm))
    got = recovered.weights("GrayHair")
    np.testing.assert_allclose(got, [0.774, 0.151, 0.071, 0.003, 0.001], atol=1e-9)
    # the restricted functions are exactly u0, u2, u10, u11, u15 of the canonical order
    full = canonical_functions(2, (2, 2))
    assert [full.index(f) for f in recovered.tables["GrayHair"].functions] == [0, 2, 10, 11, 15]
    elapsed = time.perf_counter() - t0
    note(f"{g1y0:.9f}, {g0y1:.9f}, {elapsed:.3f}s")
    assert elapsed < 1.0


def _domain_combos(limit=2**16, max_card=16, max_parents=4):
    for child in range(2, max_card + 1):
        for k in range(max_parents + 1):
            for parents in itertools.combinations_with_replacement(range(2, max_card + 1), k):
                if child ** math.prod(parents) <= limit:
                    yield child, parents


def _var(name, card):
    return ConceptVariable(name, tuple(str(v) for v in range(card)))


@pytest.mark.criterion(2, "canonical family sizes")
def test_c2_canonical_counts(note):
    t0 = time.perf_counter()
    n = 0
    for child, parents in _domain_combos():
        fam = canonical_family(_var("c", child), [_var(f"p{i}", c) for i, c in enumerate(parents)])
        expected = child ** math.prod(parents)
        assert len(fam.functions) == expected == canonical_size(child, parents)
        assert len(set(fam.functions)) == expected
        n += 1
    assert len(canonical_functions(2, (2, 2))) == 16
    elapsed = time.perf_counter() - t0
    note(f"{n} combinations, {elapsed:.2f}s")
    assert elapsed < 10.0


@pytest.mark.criterion(3, "engine equals oracle on 200 random models")
def test_c3_oracle_equivalence(note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        bundle = F.random_bundle(rng, n_nodes=int(rng.integers(1, 5)))
        model = bundle.model
        inst = F.random_instance(bundle, rng)
        do = _random_intervention(rng, model, inst.z)
        event = {n: int(rng.integers(2)) for n in model.names if rng.random() < 0.5}
        event = event or {model.names[-1]: 1}
        engine = counterfactual(model, inst.z, do, event)
        ref = oracle.naive_counterfactual(model, inst.z, do, event)
        worst = max(worst, abs(engine - ref))

        target = 1 - inst.yhat
        worst = max(worst, abs(local_ps(bundle, inst, do, target).value
                               - oracle.naive_local_ps(bundle, inst, do, target)))

        data = generate_dataset(model, bundle.map, bundle.classifier, 12,
                                int(rng.integers(2**31)))
        cond = {model.names[0]: data[0].z[model.names[0]]}
        res = subgroup_ps(bundle, data, cond, None, do, target)
        worst = max(worst, abs(res.value - oracle.naive_subgroup_ps(
            bundle, data, cond, None, do, target)))
        assert res.count == len(filter_dataset(data, cond))

        p_star = float(rng.choice([0.1, 0.5, 0.9, 1.0]))
        cap = int(rng.integers(0, min(2, len(model.names)) + 1))
        found = contrastive_search(bundle, inst, target, p_star, cap)
        expected = oracle.naive_contrastive(bundle, inst, target, p_star, cap)
        assert {frozenset(e.intervention.items()) for e in found} == set(expected)
        for e in found:
            worst = max(worst, abs(e.probability - expected[frozenset(e.intervention.items())]))
    elapsed = time.perf_counter() - t0
    note(f"max |diff| {worst:.1e}, {elapsed:.1f}s")
    assert worst <= 1e-12
    assert elapsed < 120


def _first_child(fscm, x):
    return min(fscm.graph.children(x), key=fscm.order.index)


def _response_projection(pscm, y, observed, intervention, weights):
    """Joint mass of (value at observed parents, value at counterfactual parents).

    With the event on ``y`` and ``y``'s other parents unaffected by the
    intervention, the counterfactual depends on ``y``'s weights only through
    this matrix.
    """
    fam = pscm.families[y]
    cards = pscm.parent_cards(y)
    cf = {**observed, **intervention}
    k_obs = config_index([observed[p] for p in fam.parents], cards)
    k_cf = config_index([cf[p] for p in fam.parents], cards)
    card = pscm.var[y].cardinality
    m = np.zeros((card, card))
    for f, w in zip(fam.functions, weights):
        m[f[k_obs], f[k_cf]] += w
    return m


@pytest.mark.criterion(4, "canonical PSCM intervals contain FSCM values; zero width iff the query sees a singleton credal set")
def test_c4_interval_containment(note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    done = zero = singleton = literal_gaps = 0
    while done < 100:
        fscm = F.random_fscm(rng, n_nodes=int(rng.integers(2, 5)))
        causes = [n for n in fscm.names if fscm.graph.children(n)]
        if not causes:
            continue
        x = causes[int(rng.integers(len(causes)))]
        observed = sample(fscm, int(rng.integers(2**31)), 1)[0]
        do = {x: 1 - observed[x]}
        pscm = Pscm.canonical(fscm.variables, fscm.graph)
        cond = induced_conditionals(fscm)

        # containment for an event over every descendant
        desc = sorted(fscm.graph.descendants([x]) - {x})
        wide = CounterfactualQuery(observed, do, {n: int(rng.integers(2)) for n in desc})
        assert counterfactual_bounds(pscm, cond, wide).contains(wide(fscm), tol=1e-9)

        # zero-width analysis for an event on the first child
        y = _first_child(fscm, x)
        query = CounterfactualQuery(observed, do, {y: int(rng.integers(2))})
        interval = counterfactual_bounds(pscm, cond, query)
        assert interval.contains(query(fscm), tol=1e-9)
        verts, exact = vertex_sets(pscm, cond, {y})
        assert exact
        is_zero = interval.width <= 1e-9
        is_singleton = len(verts[y]) == 1
        projections = [_response_projection(pscm, y, observed, do, v) for v in verts[y]]
        projected_singleton = all(np.abs(p - projections[0]).max() <= 1e-9 for p in projections)
        if is_singleton:
            assert is_zero
        assert is_zero == projected_singleton
        literal_gaps += is_zero != is_singleton
        zero += is_zero
        singleton += is_singleton
        done += 1
    elapsed = time.perf_counter() - t0
    note(f"{zero} zero-width, {singleton} singleton, {literal_gaps} zero-width with "
         f"non-singleton set but singleton query projection, {elapsed:.1f}s")
    assert elapsed < 180


@pytest.mark.xfail(strict=True, reason="zero width does not imply a singleton credal set: "
                   "ambiguity the query cannot see leaves the interval degenerate")
def test_c4_literal_reading_has_counterexamples():
    # y = f(g, x); y=1 is certain at (g=0, x=1) while the g=1 rows are free,
    # so the credal set of y is a polytope but every vertex answers alike
    variables = [F.binary("g"), F.binary("x"), F.binary("y")]
    pscm = Pscm.canonical(variables, CausalGraph(("g", "x", "y"), (("g", "y"), ("x", "y"))))
    half = [0.5, 0.5]
    cond = {"g": np.array([half]), "x": np.array([half]),
            "y": np.array([half, [0.0, 1.0], half, half])}
    query = CounterfactualQuery({"g": 0, "x": 0, "y": 0}, {"x": 1}, {"y": 1})
    interval = counterfactual_bounds(pscm, cond, query)
    verts, _ = vertex_sets(pscm, cond, {"y"})
    assert interval.width <= 1e-9
    assert len(verts["y"]) == 1


@pytest.mark.criterion(5, "toy chain canonical bound [0.75, 1.00]")
def test_c5_toy_chain_bound(note):
    interval = counterfactual_bounds(
        F.toy_chain_canonical(), F.toy_chain_conditionals(0.2, 0.8),
        CounterfactualQuery({"z1": 0, "z2": 0}, {"z1": 1}, {"z2": 1}))
    note(f"[{interval.lower:.12f}, {interval.upper:.12f}]")
    assert interval.lower == pytest.approx(0.75, abs=1e-9)
    assert interval.upper == pytest.approx(1.0, abs=1e-9)
    assert interval.exact


@pytest.mark.criterion(6, "age fixture: counterfactual vs CBN vs independence")
def test_c6_age_trio(note):
    bundle = F.age_bundle()
    inst = F.age_instance(bundle)
    do = {"Young": 0}
    ps = local_ps(bundle, inst, do, 0).value
    cbn = cbn_interventional(bundle, do, inst, 0).value
    ind = independence_ps(bundle, LocalContext(inst), do, 0).value
    note(f"{ps:.4f} / {cbn:.4f} / {ind}")
    assert ps == pytest.approx(0.4819, abs=1e-3)
    assert cbn == pytest.approx(0.5356, abs=1e-3)
    assert ind == 0.0
    assert ps != cbn != ind


@pytest.mark.criterion(7, "abstraction invariance of the interventional query")
def test_c7_abstraction(note):
    fine, coarse = F.abstraction_pair()
    for target in (0, 1):
        a = global_interventional(fine, {"Young": 0}, target).value
        b = global_interventional(coarse, {"Young": 0}, target).value
        assert abs(a - b) <= 1e-9
    ia = independence_ps(fine, GlobalContext(), {"Young": 0}, 1).value
    ib = independence_ps(coarse, GlobalContext(), {"Young": 0}, 1).value
    note(f"interventional {a:.6f} both; independence {ia:.4f} vs {ib:.4f}")
    assert abs(ia - ib) > 0.05


@pytest.mark.criterion(8, "subgroup value is the exact mean of member values")
def test_c8_subgroup_linearity(note):
    bundle = F.age_bundle()
    data = generate_dataset(bundle.model, bundle.map, bundle.classifier, 20_000, seed=8)
    cond, yhat, do = {"Gender": 1}, 1, {"Young": 0}
    res = subgroup_ps(bundle, data, cond, yhat, do, 0)
    members = filter_dataset(data, cond, yhat)
    values = {}
    for inst in members:
        if inst.key not in values:
            values[inst.key] = local_ps(bundle, inst, do, 0).value
    mean = math.fsum(values[inst.key] for inst in members) / len(members)
    note(f"value {res.value:.6f}, count {res.count}")
    assert res.value == mean
    assert res.count == len(members)
    assert 0 < res.count < len(data)


class _TanhScorer(DifferentiableScorer):
    """Tiny two-layer network with a hand-written gradient."""

    def __init__(self, rng, dim, hidden=6):
        self.W1 = rng.normal(size=(hidden, dim))
        self.b1 = rng.normal(size=hidden)
        self.W2 = rng.normal(size=(2, hidden))

    def activation(self, x):
        return np.asarray(x, dtype=float)

    def logit(self, a, cls):
        return float(self.W2[cls] @ np.tanh(self.W1 @ a + self.b1))

    def analytic(self, a, cls):
        h = np.tanh(self.W1 @ a + self.b1)
        return self.W1.T @ (self.W2[cls] * (1 - h**2))


@pytest.mark.criterion(9, "TCAV complementarity, scaling, gradient agreement")
def test_c9_tcav(note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    bundle = F.age_bundle()
    data = generate_dataset(bundle.model, bundle.map, bundle.classifier, 2000, seed=9)
    xs = np.asarray([inst.x for inst in data], dtype=float)
    labels = [inst.z["Glasses"] for inst in data]
    direction = train_probe(xs, labels, "Glasses", seed=0)
    worst_rel = 0.0
    for trial in range(20):
        scorer = _TanhScorer(rng, xs.shape[1])
        background = xs[rng.choice(len(xs), size=200, replace=False)]
        sens = [sensitivity(scorer, x, 1, direction) for x in background]
        assert all(s != 0.0 for s in sens)
        up = tcav_score(scorer, 1, direction, background)
        down = tcav_score(scorer, 1, direction, background, flip=True)
        assert up + down == 1.0
        for c in (1e-3, 0.5, 7.0, 1e4):
            assert tcav_score(scorer, 1, c * direction.vector, background) == up
        for x in background[:20]:
            exact = scorer.analytic(x, 1)
            fd = finite_difference_gradient(scorer, x, 1)
            rel = np.abs(fd - exact).max() / max(np.abs(exact).max(), 1e-12)
            worst_rel = max(worst_rel, rel)
    lin = LinearScorer(rng.normal(size=(2, xs.shape[1])), rng.normal(size=2))
    for x in xs[:20]:
        fd = finite_difference_gradient(lin, lin.activation(x), 0)
        exact = lin.gradient(lin.activation(x), 0)
        worst_rel = max(worst_rel, np.abs(fd - exact).max() / np.abs(exact).max())
    elapsed = time.perf_counter() - t0
    note(f"max relative gradient error {worst_rel:.1e}, {elapsed:.1f}s")
    assert worst_rel <= 1e-6
    assert elapsed < 30


def _consistency_cases(rng):
    cases = [F.age_bundle()]
    cases.extend(F.abstraction_pair())
    chain = F.toy_chain()
    from conceptcause.world import RuleClassifier, SlotMap
    from conceptcause.explain import ModelBundle
    m = SlotMap.for_model(chain, 1)
    cases.append(ModelBundle(chain, m, RuleClassifier("z2=1", m.slot_domains)))
    for _ in range(100):
        cases.append(F.random_bundle(rng, n_nodes=int(rng.integers(1, 5))))
    return cases


@pytest.mark.criterion(10, "consistency: intervening with observed values changes nothing")
def test_c10_consistency(note):
    rng = np.random.default_rng(10)
    checked = 0
    for bundle in _consistency_cases(rng):
        model = bundle.model
        for _ in range(3):
            inst = F.random_instance(bundle, rng)
            names = model.names
            k = int(rng.integers(1, len(names) + 1))
            chosen = rng.choice(len(names), size=k, replace=False)
            do = {names[i]: inst.z[names[i]] for i in chosen}
            assert counterfactual(model, inst.z, do, inst.z) == pytest.approx(1.0, abs=1e-12)
            for target in range(len(bundle.classifier.labels)):
                if target != inst.yhat:
                    assert local_ps(bundle, inst, do, target).value == 0.0
            checked += 1
    note(f"{checked} instance/intervention pairs")
