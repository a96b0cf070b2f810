import random

import pytest
from hypothesis import given, strategies as st

from stallings_lab.bgraph import BGraph, basis_words, bouquet, parse_word
from stallings_lab.errors import CapExceeded, PreconditionError
from stallings_lab.fqalg import (
    GF,
    FqModule,
    Rep,
    augmentation_module,
    classify_exploration,
    codim_and_transversal,
    expected_inter,
    gaussian_binomial,
    general_linear,
    grassmann_fixed_bruteforce,
    inter_count,
    is_efficient,
    khnc_probe,
    lewin_basis,
    m_beta,
    m_beta_ambient,
    mat_identity,
    mat_inverse,
    mat_mul,
    module_rank,
    random_invertible,
    rank_by_exploration,
    reduce_coordinates,
    reduced_rank,
    sbarpi_q_probe,
    subspaces,
    to_sym,
    word_matrix,
)

from conftest import XY, cyclic_coset_graph, subgroup

FIELDS = [2, 3, 4, 5, 9, 25]


def mono(i, text, letters=XY):
    return (i, to_sym(parse_word(text, letters)))


def element(field, *terms):
    """Sum of ``c * e_i w`` from ``(c, i, word)`` triples with ``c`` a field element."""
    out = {}
    for c, i, w in terms:
        key = mono(i, w)
        v = field.add(out.get(key, 0), c)
        if v:
            out[key] = v
        else:
            out.pop(key, None)
    return out


def augmentation_ideal(field):
    minus = field.neg(1)
    return FqModule(field, 1, 2, [element(field, (1, 0, "x"), (minus, 0, "")), element(field, (1, 0, "y"), (minus, 0, ""))])


# ---------------------------------------------------------------------------
# finite fields


@pytest.mark.parametrize("q", FIELDS)
def test_field_axioms(q):
    f = GF(q)
    for a in range(q):
        assert f.add(a, f.neg(a)) == 0
        if a:
            assert f.mul(a, f.inv(a)) == 1
        for b in range(q):
            assert f.add(a, b) == f.add(b, a)
            assert f.mul(a, b) == f.mul(b, a)
            for c in range(q):
                assert f.mul(a, f.add(b, c)) == f.add(f.mul(a, b), f.mul(a, c))


@pytest.mark.parametrize("q", [6, 8, 1])
def test_field_rejects_unsupported_orders(q):
    with pytest.raises(PreconditionError):
        GF(q)


@pytest.mark.parametrize("q,n,order", [(2, 2, 6), (3, 2, 48), (2, 3, 168)])
def test_general_linear_order(q, n, order):
    assert len(general_linear(GF(q), n)) == order


@given(st.integers(0, 10**6), st.sampled_from([2, 3, 4]), st.integers(1, 3))
def test_random_invertible(seed, q, n):
    f = GF(q)
    m = random_invertible(f, n, random.Random(seed))
    assert mat_mul(f, m, mat_inverse(f, m)) == mat_identity(n)


def test_word_matrix_respects_inverses():
    f = GF(3)
    rng = random.Random(1)
    imgs = [random_invertible(f, 2, rng) for _ in range(2)]
    w = parse_word("xyX", XY)
    wi = parse_word("xYX", XY)
    assert mat_mul(f, word_matrix(f, imgs, w, 2), word_matrix(f, imgs, wi, 2)) == mat_identity(2)


# ---------------------------------------------------------------------------
# Schreier transversals, Lewin bases, ranks


@pytest.mark.parametrize("q", [2, 3, 4])
def test_augmentation_ideal(q):
    f = GF(q)
    mod = augmentation_ideal(f)
    c, st_ = codim_and_transversal(mod)
    assert c == 1 and st_.monomials == [(0, ())]
    assert len(lewin_basis(mod, st_)) == 2
    assert module_rank(mod) == 2
    assert reduced_rank(mod) == 1
    assert codim_and_transversal(augmentation_module(f, bouquet(XY)))[0] == 1


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_augmentation_module_of_finite_index(k):
    mod = augmentation_module(GF(2), cyclic_coset_graph(k, 0))
    assert codim_and_transversal(mod)[0] == k
    assert module_rank(mod) == 1 + k


def test_zero_module_has_infinite_codimension():
    with pytest.raises(CapExceeded):
        codim_and_transversal(FqModule(GF(2), 1, 2, []), cap=8, max_radius=3)


def test_lewin_basis_generates_same_module():
    f = GF(3)
    mod = augmentation_module(f, cyclic_coset_graph(3, 0))
    c, st_ = codim_and_transversal(mod)
    again = FqModule(f, 1, 2, lewin_basis(mod, st_))
    assert codim_and_transversal(again)[0] == c
    assert module_rank(again) == module_rank(mod)


def test_coordinate_reduction():
    f = GF(2)
    # e_1 - e_0 x kills the second coordinate modulo the first
    gens = [element(f, (1, 1, ""), (1, 0, "x"))] + [
        {(0, w): 1, (0, ()): 1} for w in (to_sym(parse_word("x", XY)), to_sym(parse_word("y", XY)))
    ]
    mod = FqModule(f, 2, 2, gens)
    red = reduce_coordinates(mod)
    assert red.rank_full == red.rank_reduced + len(red.dropped)
    assert red.dropped == [1]


def test_json_round_trip():
    f = GF(4)
    mod = augmentation_ideal(f)
    back = FqModule.from_json(mod.to_json())
    assert back.generators == mod.generators and back.q == 4


# ---------------------------------------------------------------------------
# M_beta


def _rep(words, q, images):
    g = subgroup(words)
    return g, Rep(GF(q), XY, basis_words(g), images)


def test_trivial_rep_of_free_group():
    g, rep = _rep(["x", "y"], 2, [[[1]], [[1]]])
    mod = m_beta(rep)
    assert codim_and_transversal(mod)[0] == 1
    assert module_rank(mod) == 2


@pytest.mark.parametrize("words", [["xx", "y", "xyX"], ["xx", "xy", "yy"], ["x", "yy", "yxY"]])
@pytest.mark.parametrize("d", [1, 2])
def test_ambient_m_beta_of_finite_index_subgroup(words, d):
    f = GF(2)
    g = subgroup(words)
    rng = random.Random(len(words) * 10 + d)
    images = [random_invertible(f, d, rng) for _ in basis_words(g)]
    rep = Rep(f, XY, basis_words(g), images)
    amb = m_beta_ambient(rep)
    assert codim_and_transversal(amb)[0] == d * g.n
    assert module_rank(amb) - d == d * g.n


def test_rep_needs_invertible_images():
    with pytest.raises(PreconditionError):
        _rep(["x", "y"], 2, [[[0]], [[1]]])


# ---------------------------------------------------------------------------
# explorations


def test_exploration_of_augmentation_ideal():
    mod = augmentation_ideal(GF(2))
    rk, rep = rank_by_exploration(mod, [mono(0, ""), mono(0, "x"), mono(0, "y")])
    assert rep.labels == ["free", "coincidence", "coincidence"]
    assert rk == 2 and rep.saturated
    assert is_efficient(mod)[0]


def test_module_containing_a_constant_is_inefficient():
    f = GF(2)
    mod = FqModule(f, 1, 2, [{(0, ()): 1}])
    assert not is_efficient(mod)[0]


def test_exploration_order_must_match_forest():
    with pytest.raises(PreconditionError):
        classify_exploration(augmentation_ideal(GF(2)), [(0, ())], order=[(0, (0,))])


# ---------------------------------------------------------------------------
# intertwiners and invariant subspaces


def test_inter_count_of_identity():
    f = GF(2)
    one = [[1]]
    assert inter_count(f, [one], [one], 1, 1) == (2, 1)
    ident = mat_identity(2)
    # every 1x2 matrix intertwines identities; the nonzero ones are injective
    assert inter_count(f, [ident], [one], 1, 2) == (4, 3)


def test_inter_count_cap():
    f = GF(2)
    with pytest.raises(CapExceeded):
        inter_count(f, [mat_identity(3)], [mat_identity(3)], 3, 3, enum_cap=8)


def test_expected_inter_modes():
    g, rep = _rep(["x", "y"], 2, [[[1]], [[1]]])
    tot, inj = expected_inter(g, rep, 2)
    assert tot >= inj > 0
    a = expected_inter(g, rep, 2, mode="mc", samples=50, seed=3)
    assert a == expected_inter(g, rep, 2, mode="mc", samples=50, seed=3)
    with pytest.raises(PreconditionError):
        expected_inter(g, rep, 2, mode="sample")


@pytest.mark.parametrize("n,d,q", [(2, 1, 2), (3, 1, 2), (3, 2, 2), (2, 1, 3)])
def test_subspace_enumeration_size(n, d, q):
    assert len(subspaces(GF(q), n, d)) == gaussian_binomial(n, d, q)


@pytest.mark.parametrize("n,d,q", [(2, 1, 2), (3, 1, 2), (3, 2, 2), (2, 1, 3)])
def test_trivial_subgroup_fixes_every_subspace(n, d, q):
    g = BGraph(XY, 1, [[], []], basepoint=0)
    assert grassmann_fixed_bruteforce(g, n, q, d) == gaussian_binomial(n, d, q)


@pytest.mark.parametrize("words", [["x", "y"], ["xy"], ["xx", "y"]])
def test_full_dimension_is_always_fixed(words):
    assert grassmann_fixed_bruteforce(subgroup(words), 2, 2, 2) == 1


def test_gaussian_binomial_values():
    assert gaussian_binomial(4, 2, 2) == 35
    assert gaussian_binomial(3, 1, 3) == 13


# ---------------------------------------------------------------------------
# probes


def test_sbarpi_q_probe_on_free_group():
    rep = sbarpi_q_probe(subgroup(["x", "y"]), 1, 2)
    assert rep.value is not None and rep.value >= 1
    assert rep.certified > 0 and rep.min_rank >= 2


def test_sbarpi_q_probe_support_cap():
    with pytest.raises(CapExceeded):
        sbarpi_q_probe(subgroup(["xyx", "yxx"]), 1, 2)


def test_khnc_probe_with_whole_group():
    mod = augmentation_module(GF(2), cyclic_coset_graph(3, 0))
    rep = khnc_probe([parse_word("x", XY), parse_word("y", XY)], mod)
    assert rep.codim_intersection == rep.codim_m == 3
    assert rep.lhs == rep.rhs == 3


def test_khnc_probe_cyclic_subgroup_has_no_rhs():
    mod = augmentation_module(GF(2), cyclic_coset_graph(2, 0))
    rep = khnc_probe([parse_word("xy", XY)], mod)
    assert rep.rhs == 0 and rep.lhs == 0
