"""Reference models used by the tests, the CLI and the examples in the README."""

from __future__ import annotations

import itertools

import numpy as np

from conceptcause.credal import Pscm, canonical_functions
from conceptcause.explain import ModelBundle
from conceptcause.scm import ConceptVariable, Fscm, build_fscm, sample
from conceptcause.world import (
    Instance,
    LookupClassifier,
    RuleClassifier,
    SlotMap,
    make_instance,
)

BINARY = ("0", "1")

IDENTITY, NEGATION = (0, 1), (1, 0)
CONST0_1P, CONST1_1P = (0, 0), (1, 1)
CONST0, CONST1 = (0,), (1,)

# Gray hair given (Gender, Young): canonical index -> published weight.
GRAY_HAIR_WEIGHTS = {0: 0.774, 2: 0.151, 10: 0.071, 11: 0.003, 15: 0.001}
CANONICAL_2X2 = canonical_functions(2, (2, 2))

H_AGE_RULE = "GrayHair=0 & (Glasses=0 | Makeup=1)"


def binary(name: str, target: bool = False) -> ConceptVariable:
    return ConceptVariable(name, BINARY, target)


def toy_chain(identity_weight: float = 0.8) -> Fscm:
    """Binary ``z1 -> z2``; z1 uniform, z2 copies z1 or is constantly 0."""
    return build_fscm(
        [binary("z1"), binary("z2")],
        [("z1", "z2")],
        {
            "z1": ([CONST0, CONST1], [0.5, 0.5]),
            "z2": ([IDENTITY, CONST0_1P], [identity_weight, 1 - identity_weight]),
        },
    )


def toy_chain_canonical() -> Pscm:
    fscm = toy_chain()
    return Pscm.canonical(fscm.variables, fscm.graph)


def toy_chain_conditionals(a: float = 0.2, b: float = 0.8) -> dict[str, np.ndarray]:
    """``p(z2=1 | z1=0) = a`` and ``p(z2=1 | z1=1) = b``."""
    return {
        "z1": np.array([[0.5, 0.5]]),
        "z2": np.array([[1 - a, a], [1 - b, b]]),
    }


def gray_hair_family() -> tuple[list[tuple[int, ...]], list[float]]:
    """The restricted gray-hair family: functions with positive weight only."""
    idx = sorted(GRAY_HAIR_WEIGHTS)
    return [CANONICAL_2X2[u] for u in idx], [GRAY_HAIR_WEIGHTS[u] for u in idx]


def age_toy() -> Fscm:
    """Gender and Young as independent roots driving GrayHair, Glasses, Makeup."""
    variables = [binary("Gender"), binary("Young", target=True), binary("GrayHair"),
                 binary("Glasses"), binary("Makeup")]
    edges = [("Gender", "GrayHair"), ("Young", "GrayHair"), ("Gender", "Glasses"),
             ("Young", "Glasses"), ("Gender", "Makeup")]
    # Glasses functions over (Gender, Young) in order (0,0), (0,1), (1,0), (1,1).
    not_young = (1, 0, 1, 0)
    return build_fscm(variables, edges, {
        "Gender": ([CONST0, CONST1], [0.5, 0.5]),
        "Young": ([CONST0, CONST1], [0.3, 0.7]),
        "GrayHair": gray_hair_family(),
        "Glasses": ([(0, 0, 0, 0), not_young, (1, 1, 1, 1)], [0.6, 0.3, 0.1]),
        "Makeup": ([NEGATION, CONST0_1P], [0.7, 0.3]),
    })


def age_map(fscm: Fscm | None = None, n_nuisance: int = 3) -> SlotMap:
    return SlotMap.for_model(fscm or age_toy(), n_nuisance)


def h_age(map_: SlotMap | None = None) -> RuleClassifier:
    """Predicts young (1) unless gray hair, or glasses without makeup."""
    map_ = map_ or age_map()
    return RuleClassifier(H_AGE_RULE, map_.slot_domains, "1", "0", BINARY)


def age_bundle(**kwargs) -> ModelBundle:
    fscm = age_toy()
    map_ = age_map(fscm)
    return ModelBundle(fscm, map_, h_age(map_), **kwargs)


def age_instance(bundle: ModelBundle | None = None, w=(0, 1, 0)) -> Instance:
    """Young woman-coded Gender=1 without gray hair, glasses or makeup."""
    bundle = bundle or age_bundle()
    z = {"Gender": 1, "Young": 1, "GrayHair": 0, "Glasses": 0, "Makeup": 0}
    return make_instance(bundle.map, bundle.classifier, z, w)


ABSTRACTION_RULE = "Wrinkles=0 & GrayHair=0"


def abstraction_pair() -> tuple[ModelBundle, ModelBundle]:
    """Two bundles describing the same world at different granularity.

    Fine: ``Young -> Wrinkles -> GrayHair``.  Coarse: ``Young -> Appearance``
    where the four-valued Appearance concept decodes to the same Wrinkles and
    GrayHair feature slots.  Both induce the same distribution over features.
    """
    fine = build_fscm(
        [binary("Young"), binary("Wrinkles"), binary("GrayHair")],
        [("Young", "Wrinkles"), ("Wrinkles", "GrayHair")],
        {
            "Young": ([CONST0, CONST1], [0.5, 0.5]),
            "Wrinkles": ([NEGATION, CONST0_1P], [0.8, 0.2]),
            "GrayHair": ([IDENTITY, CONST0_1P], [0.7, 0.3]),
        },
    )
    # p(Appearance | Young), Appearance coded as 2 * Wrinkles + GrayHair.
    cond = {0: [0.2, 0.0, 0.8 * 0.3, 0.8 * 0.7], 1: [1.0, 0.0, 0.0, 0.0]}
    functions, weights = [], []
    for f in itertools.product(range(4), repeat=2):
        w = cond[0][f[0]] * cond[1][f[1]]
        if w > 0:
            functions.append(f)
            weights.append(w)
    coarse = build_fscm(
        [binary("Young"), ConceptVariable("Appearance", ("smooth", "gray-only", "wrinkled", "aged"))],
        [("Young", "Appearance")],
        {"Young": ([CONST0, CONST1], [0.5, 0.5]), "Appearance": (functions, weights)},
    )
    fine_map = SlotMap.for_model(fine, n_nuisance=1)
    coarse_map = SlotMap.for_model(coarse, n_nuisance=1,
                                   composite={"Appearance": (("Wrinkles", 2), ("GrayHair", 2))})
    bundles = []
    for model, map_ in ((fine, fine_map), (coarse, coarse_map)):
        h = RuleClassifier(ABSTRACTION_RULE, map_.slot_domains, "1", "0", BINARY)
        bundles.append(ModelBundle(model, map_, h))
    return bundles[0], bundles[1]


def random_fscm(rng: np.random.Generator, n_nodes: int | None = None, max_parents: int = 2,
                max_family: int = 16, restrict: bool = True) -> Fscm:
    """Random binary Markovian FSCM over nodes ``a, b, c, ...``.

    ``restrict`` keeps a random non-empty subset of each canonical family
    (at most ``max_family`` functions); otherwise families are canonical.
    Weights are Dirichlet(1) draws.
    """
    n_nodes = n_nodes or int(rng.integers(1, 5))
    names = [chr(ord("a") + i) for i in range(n_nodes)]
    edges = []
    families = {}
    for i, name in enumerate(names):
        k = int(rng.integers(0, min(i, max_parents) + 1))
        parents = sorted(rng.choice(i, size=k, replace=False).tolist()) if k else []
        edges.extend((names[p], name) for p in parents)
        funcs = canonical_functions(2, [2] * len(parents))
        if restrict or len(funcs) > max_family:
            size = int(rng.integers(1, min(len(funcs), max_family) + 1)) if restrict else max_family
            keep = sorted(rng.choice(len(funcs), size=size, replace=False).tolist())
            funcs = [funcs[u] for u in keep]
        weights = rng.dirichlet(np.ones(len(funcs)))
        families[name] = (list(funcs), weights.tolist())
    return build_fscm([binary(n) for n in names], edges, families)


def random_bundle(rng: np.random.Generator, n_nodes: int | None = None,
                  n_nuisance: int = 1, **kwargs) -> ModelBundle:
    """Random FSCM with a random lookup-table classifier over all features."""
    fscm = random_fscm(rng, n_nodes, **kwargs)
    map_ = SlotMap.for_model(fscm, n_nuisance)
    space = itertools.product(*(range(len(d)) for d in map_.slot_domains.values()))
    table = {x: int(rng.integers(2)) for x in space}
    return ModelBundle(fscm, map_, LookupClassifier(table, BINARY))


def random_instance(bundle: ModelBundle, rng: np.random.Generator) -> Instance:
    z = sample(bundle.model, int(rng.integers(2**31)), 1)[0]
    w = tuple(int(v) for v in rng.integers(0, bundle.map.nuisance_card, bundle.map.n_nuisance))
    return make_instance(bundle.map, bundle.classifier, z, w)
