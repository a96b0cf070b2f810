import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from stallings_lab.bgraph import cycle_graph, enumerate_morphisms, find_coverings_in_pullback, pullback
from stallings_lab.errors import PreconditionError
from stallings_lab.polymatroid import (
    GammaPolymatroid,
    LogRational,
    Polymatroid,
    check_morphism,
    check_polymatroid,
    contraction,
    covering_image_polymatroid,
    cycle_word,
    image_polymatroid,
    is_compact,
    marginal_gains,
    pullback_polymatroid,
    shearer_check,
    tree_bound,
    verify_gap_certificate,
)
from stallings_lab.stacking import find_stacking

from conftest import DELTA_PRIME, XY, cored_graphs, subgroup


def coverage(sets):
    """``h(U) = |union of sets[i] for i in U|``, a standard polymatroid."""
    n = len(sets)
    return Polymatroid.from_function(
        n, lambda m: Fraction(len(set().union(*(sets[i] for i in range(n) if m >> i & 1))))
    )


set_families = st.lists(st.frozensets(st.integers(0, 5), max_size=4), min_size=1, max_size=5)


def cardinality(n):
    return Polymatroid.from_function(n, lambda m: Fraction(bin(m).count("1")))


def rank_one(n):
    return Polymatroid.from_function(n, lambda m: Fraction(1 if m else 0))


def rank_one_gamma(g):
    return GammaPolymatroid(g, rank_one(g.n), [rank_one(len(l)) for l in g.edges])


def cardinality_gamma(g):
    return GammaPolymatroid(g, cardinality(g.n), [cardinality(len(l)) for l in g.edges])


# ---------------------------------------------------------------------------
# set functions


def test_log_rational_arithmetic():
    a, b = LogRational(4), LogRational(2)
    assert a == b.scale(2)
    assert a - b == b
    assert LogRational(8, 3) == LogRational(2)
    assert LogRational(3) > LogRational(2)
    assert math.isclose(float(LogRational(9, 2)), math.log(3))
    with pytest.raises(PreconditionError):
        LogRational(0)


@given(set_families)
def test_coverage_functions_are_polymatroids(sets):
    assert check_polymatroid(coverage(sets), exhaustive=True).ok


@given(st.integers(1, 4).flatmap(lambda n: st.lists(st.integers(0, 4), min_size=1 << n, max_size=1 << n)))
def test_local_check_agrees_with_global(vals):
    n = len(vals).bit_length() - 1
    p = Polymatroid(n, [Fraction(v) for v in vals])
    assert check_polymatroid(p).ok == check_polymatroid(p, exhaustive=True).ok


def test_violations_are_named():
    p = Polymatroid(2, [Fraction(v) for v in (0, 2, 2, 5)])
    rep = check_polymatroid(p)
    assert not rep.ok and rep.violations[0].kind == "submodularity"
    q = Polymatroid(1, [Fraction(1), Fraction(1)])
    assert check_polymatroid(q).violations[0].kind == "normalisation"


@given(set_families, st.data())
def test_contraction_is_a_polymatroid(sets, data):
    p = coverage(sets)
    t = data.draw(st.integers(0, p.full))
    assert check_polymatroid(contraction(p, t)).ok


@given(set_families, st.data())
def test_marginal_gains_telescope(sets, data):
    p = coverage(sets)
    order = data.draw(st.permutations(range(p.n)))
    gains = marginal_gains(p, order)
    assert sum(gains) == p(p.full)
    assert all(g >= 0 for g in gains)


@given(set_families)
def test_compactness_means_no_private_items(sets):
    private = any(s - set().union(*(t for j, t in enumerate(sets) if j != i)) for i, s in enumerate(sets))
    assert is_compact(coverage(sets)) == (not private)


@given(set_families)
def test_shearer_for_pair_cover(sets):
    p = coverage(sets)
    n = p.n
    if n < 2:
        return
    # every element lies in exactly two of the n cyclic pairs
    weights = {(1 << i) | (1 << ((i + 1) % n)): Fraction(1, 2) for i in range(n)}
    if n == 2:
        weights = {3: Fraction(1)}
    assert shearer_check(p, weights) >= 0


def test_shearer_needs_a_cover():
    with pytest.raises(PreconditionError):
        shearer_check(cardinality(2), {1: Fraction(1)})


def test_morphism_check_on_projection():
    # coverage along the map that merges two elements with identical sets
    sets = [{0}, {0}, {1}]
    p1 = coverage(sets)
    p2 = coverage([{0}, {1}])
    assert check_morphism(p1, p2, [0, 0, 1]).ok
    assert not check_morphism(cardinality(2), Polymatroid(1, [Fraction(0), Fraction(3)]), [0, 0]).ok


def test_json_round_trip():
    p = coverage([{0, 1}, {1}])
    assert Polymatroid.from_json(p.to_json()) == p


# ---------------------------------------------------------------------------
# graph-indexed polymatroids


def test_cardinality_gamma_polymatroid(gamma):
    gp = cardinality_gamma(gamma)
    assert gp.check().ok and not gp.is_compact()
    assert gp.chi() == gamma.euler_char()


def test_pullback_along_morphism(gamma):
    g = gamma.with_basepoint(None)
    target = cardinality_gamma(DELTA_PRIME)
    for m in enumerate_morphisms(g, DELTA_PRIME):
        back = pullback_polymatroid(g, m.vertex_map, m.edge_map, target)
        assert back.check().ok


def test_plain_image_can_fail_to_be_gamma_polymatroid(gamma):
    gp = image_polymatroid(gamma.with_basepoint(None), DELTA_PRIME)
    assert gp.chi() == -2
    assert not gp.check().ok
    with pytest.raises(PreconditionError):
        verify_gap_certificate(gp)


def test_covering_image_certifies_gap(gamma):
    g = gamma.with_basepoint(None)
    sub = find_coverings_in_pullback(g, DELTA_PRIME, 2)[0]
    gp = covering_image_polymatroid(g, DELTA_PRIME, sub)
    assert gp.check().ok
    cert = verify_gap_certificate(gp)
    assert cert.chi + cert.edge_value <= 0


@given(cored_graphs(min_rank=2), cored_graphs())
def test_covering_images_are_gamma_polymatroids(g, delta):
    if g.n > 6 or any(len(l) > 8 for l in g.edges) or pullback(g, delta).graph.n > 14:
        return
    for d in (1, 2):
        for sub in find_coverings_in_pullback(g, delta, d)[:3]:
            gp = covering_image_polymatroid(g, delta, sub)
            assert gp.check().ok
            verify_gap_certificate(gp)


def test_gap_needs_rank_two():
    gp = cardinality_gamma(cycle_graph("xy", XY))
    with pytest.raises(PreconditionError):
        verify_gap_certificate(gp)


def test_nonpower_gap_on_compact_cycle():
    g = cycle_graph("xyXY", XY)
    assert cycle_word(g)
    gp = rank_one_gamma(g)
    assert gp.is_compact()
    with pytest.raises(PreconditionError):
        verify_gap_certificate(cardinality_gamma(g), mode="nonpower")
    cert = verify_gap_certificate(gp, mode="nonpower")
    assert (cert.chi, cert.edge_value) == (-1, 1)


def test_nonpower_gap_rejects_power():
    g = cycle_graph("xyxy", XY)
    with pytest.raises(PreconditionError):
        verify_gap_certificate(rank_one_gamma(g), mode="nonpower")


@pytest.mark.parametrize("word", ["xy", "xyXY", "xxy", "xyyXY", "xxYxy"])
def test_tree_bound_dominates_chi(word):
    g = cycle_graph(word, XY)
    heights = find_stacking(g).heights
    gp = cardinality_gamma(g)
    edges = [(b, i) for b, lst in enumerate(g.edges) for i in range(len(lst))]
    # drop each edge in turn to get every spanning tree of the cycle
    for skip in edges:
        bound = tree_bound(gp, heights, [e for e in edges if e != skip])
        assert gp.chi() <= bound


def test_tree_bound_rejects_non_tree():
    g = cycle_graph("xyXY", XY)
    with pytest.raises(PreconditionError):
        tree_bound(cardinality_gamma(g), find_stacking(g).heights, [])


def test_covering_image_for_index_two_pair():
    g = subgroup(["xx", "xy", "yy"]).with_basepoint(None)
    h = subgroup(["x", "yy", "yxY"]).with_basepoint(None)
    subs = find_coverings_in_pullback(g, h, 1)
    for sub in subs:
        gp = covering_image_polymatroid(g, h, sub)
        assert gp.check().ok
