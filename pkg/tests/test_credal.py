import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptcause import fixtures as F
from conceptcause import oracle
from conceptcause.credal import (
    BoundConfig,
    CounterfactualQuery,
    Interval,
    Pscm,
    canonical_functions,
    counterfactual_bounds,
    credal_constraints,
    empirical_conditionals,
    enumerate_vertices,
    induced_conditional,
    induced_conditionals,
    sample_vertices,
    unique_fscm,
    vertex_sets,
)
from conceptcause.errors import CapacityError, InfeasibleError, UnderdeterminedError
from conceptcause.scm import FunctionTable, build_fscm, sample

seeds = st.integers(min_value=0, max_value=2**32 - 1)
CHAIN_QUERY = CounterfactualQuery({"z1": 0, "z2": 0}, {"z1": 1}, {"z2": 1})


def _binary_family(functions, name="z", parents=("p",)):
    return FunctionTable(name, parents, tuple(functions))


def test_canonical_sizes_and_order():
    assert len(canonical_functions(2, (2, 2))) == 16
    assert list(canonical_functions(2, ())) == [(0,), (1,)]
    assert len(canonical_functions(3, (2,))) == 9
    # first parent most significant, as in the gray-hair table: u2 = G and not Y
    assert canonical_functions(2, (2, 2))[2] == (0, 0, 1, 0)


def test_canonical_cap():
    with pytest.raises(CapacityError):
        canonical_functions(2, (2, 2, 2, 2, 2), cap=2**16)


def test_induced_conditional_examples():
    functions, weights = F.gray_hair_family()
    cond = induced_conditional(_binary_family(functions, "GrayHair", ("Gender", "Young")), weights, 2)
    assert cond[2, 1] == pytest.approx(0.226, abs=1e-12)
    assert cond[1, 1] == pytest.approx(0.001, abs=1e-12)
    const = induced_conditional(_binary_family([(0, 0), (1, 1)]), [0.5, 0.5], 2)
    np.testing.assert_allclose(const[:, 1], [0.5, 0.5])


def test_polytope_for_canonical_one_parent():
    fam = _binary_family(canonical_functions(2, (2,)))
    poly = credal_constraints(fam, np.array([[0.8, 0.2], [0.2, 0.8]]))
    # functions: const0 (0,0), id (0,1), neg (1,0), const1 (1,1)
    assert poly.contains([0.0, 0.8, 0.2, 0.0])
    assert poly.contains([0.2, 0.6, 0.0, 0.2])
    assert not poly.contains([0.25, 0.25, 0.25, 0.25])
    verts = sorted(tuple(np.round(v, 12)) for v in enumerate_vertices(poly))
    assert verts == [(0.0, 0.8, 0.2, 0.0), (0.2, 0.6, 0.0, 0.2)]


def test_polytope_degenerate_cases():
    const0 = _binary_family([(0, 0)])
    assert len(enumerate_vertices(credal_constraints(const0, np.array([[1.0, 0.0], [1.0, 0.0]])))) == 1
    with pytest.raises(InfeasibleError, match="inconsistent"):
        credal_constraints(const0, np.array([[0.7, 0.3], [0.7, 0.3]]))
    canon = _binary_family(canonical_functions(2, (2,)))
    (v,) = enumerate_vertices(credal_constraints(canon, np.array([[1.0, 0.0], [1.0, 0.0]])))
    np.testing.assert_allclose(v, [1, 0, 0, 0], atol=1e-12)


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_vertices_satisfy_constraints_and_match_naive(seed):
    fscm = F.random_fscm(np.random.default_rng(seed), restrict=False)
    pscm = Pscm.of(fscm)
    cond = induced_conditionals(fscm)
    for n in fscm.names:
        poly = credal_constraints(pscm.families[n], cond[n])
        verts = enumerate_vertices(poly)
        for v in verts:
            assert poly.contains(v, tol=1e-9)
            got = induced_conditional(pscm.families[n], v, 2)
            np.testing.assert_allclose(got, cond[n], atol=1e-9)
        naive = oracle.naive_vertices(poly)
        key = lambda vs: sorted(tuple(np.round(x, 9)) for x in vs)
        assert key(verts) == key(naive)


def test_toy_chain_bound():
    iv = counterfactual_bounds(F.toy_chain_canonical(), F.toy_chain_conditionals(), CHAIN_QUERY)
    assert iv.lower == pytest.approx(0.75, abs=1e-9)
    assert iv.upper == pytest.approx(1.0, abs=1e-9)
    ref, interior = oracle.naive_bounds(F.toy_chain_canonical(), F.toy_chain_conditionals(), CHAIN_QUERY)
    assert ref.lower == pytest.approx(iv.lower) and ref.upper == pytest.approx(iv.upper)
    assert all(iv.contains(v) for v in interior)


def test_bounds_from_rows_match_conditionals():
    rows = [{"z1": 0, "z2": 0}] * 4 + [{"z1": 0, "z2": 1}] + [{"z1": 1, "z2": 0}] + [{"z1": 1, "z2": 1}] * 4
    iv = counterfactual_bounds(F.toy_chain_canonical(), rows, CHAIN_QUERY)
    assert (iv.lower, iv.upper) == pytest.approx((0.75, 1.0))


def test_empirical_conditionals_leave_unseen_rows_open():
    pscm = F.toy_chain_canonical()
    cond = empirical_conditionals(pscm, [{"z1": 0, "z2": 1}, {"z1": 0, "z2": 0}])
    np.testing.assert_allclose(cond["z2"][0], [0.5, 0.5])
    assert np.isnan(cond["z2"][1]).all()


def test_singleton_sets_give_point_interval():
    fscm = F.age_toy()
    pscm = Pscm.of(fscm)
    obs = {"Gender": 1, "Young": 1, "GrayHair": 0, "Glasses": 0, "Makeup": 0}
    q = CounterfactualQuery(obs, {"Young": 0}, {"GrayHair": 1})
    iv = counterfactual_bounds(pscm, induced_conditionals(fscm), q)
    assert iv.width == pytest.approx(0.0, abs=1e-12)
    assert iv.contains(q(fscm), tol=1e-12)


def test_unique_fscm_examples():
    fscm = F.age_toy()
    got = unique_fscm(Pscm.of(fscm), induced_conditionals(fscm))
    np.testing.assert_allclose(got.weights("GrayHair"), [0.774, 0.151, 0.071, 0.003, 0.001], atol=1e-9)
    v = [F.binary("z")]
    consts = build_fscm(v, [], {"z": ([(0,), (1,)], [0.7, 0.3])})
    np.testing.assert_allclose(unique_fscm(Pscm.of(consts), induced_conditionals(consts)).weights("z"),
                               [0.7, 0.3], atol=1e-12)
    with pytest.raises(UnderdeterminedError):
        unique_fscm(F.toy_chain_canonical(), F.toy_chain_conditionals())


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_restriction_never_widens(seed):
    rng = np.random.default_rng(seed)
    fscm = F.random_fscm(rng, n_nodes=int(rng.integers(2, 4)))
    x = next((n for n in fscm.names if fscm.graph.children(n)), None)
    if x is None:
        return
    obs = sample(fscm, seed, 1)[0]
    y = fscm.graph.children(x)[0]
    q = CounterfactualQuery(obs, {x: 1 - obs[x]}, {y: 1})
    cond = induced_conditionals(fscm)
    wide = counterfactual_bounds(Pscm.canonical(fscm.variables, fscm.graph), cond, q)
    narrow = counterfactual_bounds(Pscm.of(fscm), cond, q)
    assert wide.lower <= narrow.lower + 1e-9
    assert narrow.upper <= wide.upper + 1e-9
    assert narrow.contains(q(fscm), tol=1e-9)


def test_sampled_interval_inside_exhaustive():
    pscm = Pscm.canonical(F.age_toy().variables, F.age_toy().graph)
    cond = induced_conditionals(F.age_toy())
    obs = {"Gender": 1, "Young": 1, "GrayHair": 0, "Glasses": 0, "Makeup": 0}
    q = CounterfactualQuery(obs, {"Young": 0}, {"GrayHair": 0, "Glasses": 0})
    full = counterfactual_bounds(pscm, cond, q)
    assert full.exact
    sampled = counterfactual_bounds(pscm, cond, q, config=BoundConfig(budget=3, samples=50, seed=1))
    assert not sampled.exact
    assert full.lower - 1e-9 <= sampled.lower <= sampled.upper <= full.upper + 1e-9
    again = counterfactual_bounds(pscm, cond, q, config=BoundConfig(budget=3, samples=50, seed=1))
    assert again == sampled


def test_sample_vertices_are_feasible():
    fam = _binary_family(canonical_functions(2, (2, 2)), "z", ("a", "b"))
    cond = np.array([[0.7, 0.3], [0.4, 0.6], [0.5, 0.5], [0.1, 0.9]])
    poly = credal_constraints(fam, cond)
    for v in sample_vertices(poly, 20, seed=0):
        assert poly.contains(v, tol=1e-8)


def test_vertex_sets_strict_capacity():
    fam_pscm = F.toy_chain_canonical()
    with pytest.raises(CapacityError):
        vertex_sets(fam_pscm, F.toy_chain_conditionals(), None,
                    BoundConfig(basis_cap=1, allow_sampling=False))


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(0.6, 0.4)
    iv = Interval(0.25, 0.75)
    assert iv.width == 0.5 and iv.contains(0.25) and not iv.contains(0.8)
