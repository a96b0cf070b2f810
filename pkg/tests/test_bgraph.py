import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from stallings_lab.bgraph import (
    BGraph,
    accepts,
    basis_words,
    bouquet,
    closed_partitions,
    closed_partitions_rgs,
    core,
    count_morphisms,
    covering_from_perms,
    cycle_graph,
    enumerate_coverings,
    enumerate_morphisms,
    fiber_product,
    find_coverings_bruteforce,
    find_coverings_in_pullback,
    fold_words,
    inverse_word,
    is_covering_map,
    is_morphism,
    is_proper_power,
    monodromy,
    multiply,
    parse_word,
    primitive_root,
    pullback,
    quotients,
    reduce_word,
    shnc_ratio,
    word_to_str,
)
from stallings_lab.errors import CapExceeded, PreconditionError

from conftest import (
    DELTA_NONSTRICT,
    DELTA_PRIME,
    PULLBACK_LEFT,
    PULLBACK_RIGHT,
    XY,
    cored_graphs,
    cyclic_coset_graph,
    folded_graphs,
    subgroup,
    word_lists,
    words,
)


def all_reduced_words(max_len, letters=2):
    out = [()]
    frontier = [()]
    for _ in range(max_len):
        nxt = []
        for w in frontier:
            for b in range(letters):
                for s in (1, -1):
                    if w and w[-1] == (b, -s):
                        continue
                    nxt.append(w + ((b, s),))
        out += nxt
        frontier = nxt
    return out


# ---------------------------------------------------------------------------
# words


def test_parse_and_print_round_trip():
    w = parse_word("xyX^2z^3", ("x", "y", "z"))
    assert word_to_str(w, ("x", "y", "z")) == "xyXXzzz"
    assert parse_word("xX", XY) == ()
    with pytest.raises(PreconditionError):
        parse_word("xq", XY)


def test_proper_powers():
    assert is_proper_power(parse_word("xyxy", XY))
    assert not is_proper_power(parse_word("xyXY", XY))
    root, k = primitive_root(parse_word("xyxyxy", XY))
    assert (word_to_str(root, XY), k) == ("xy", 3)


@given(words, words)
def test_inverse_is_two_sided(u, v):
    assert multiply(u, inverse_word(u)) == ()
    assert inverse_word(multiply(u, v)) == multiply(inverse_word(v), inverse_word(u))


# ---------------------------------------------------------------------------
# folding and cores


def test_fold_single_loop():
    g = subgroup(["x"])
    assert (g.n, g.num_edges) == (1, 1)
    assert g.edges[0] == ((0, 0),)


def test_fold_index_two_subgroup():
    g = subgroup(["xx", "xy", "yy"])
    assert (g.n, g.num_edges, g.rank()) == (2, 4, 3)
    assert all(s != t for lst in g.edges for s, t in lst)


def test_fold_worked_example(gamma):
    assert (gamma.n, gamma.num_edges, gamma.euler_char()) == (4, 5, -1)
    for w in ("xyx", "yxx", "xyxXXY"):
        assert accepts(gamma, parse_word(w, XY))
    assert not accepts(gamma, parse_word("x", XY))


def test_core_of_tree_is_empty():
    path = BGraph(XY, 3, {"x": [(0, 1)], "y": [(1, 2)]})
    assert core(path, keep_basepoint=False).n == 0


def test_euler_characteristics():
    assert bouquet(XY).euler_char() == -1
    assert DELTA_PRIME.euler_char() == -2
    assert DELTA_NONSTRICT.euler_char() == -3
    assert BGraph(XY, 0, [[], []]).euler_char() == 0


def test_non_strict_graph_needs_flag():
    with pytest.raises(PreconditionError):
        BGraph.from_json(DELTA_NONSTRICT.to_json())
    assert BGraph.from_json(DELTA_NONSTRICT.to_json(), strict=False).n == 6


@given(word_lists)
def test_fold_is_idempotent_on_basis(ws):
    g = fold_words(ws, XY)
    again = fold_words(basis_words(g), XY)
    assert again.canonical_key(True) == g.canonical_key(True)


@given(cored_graphs())
def test_core_is_idempotent(g):
    assert core(g, keep_basepoint=False).canonical_key(False) == g.canonical_key(False)


@given(folded_graphs())
def test_json_round_trip(g):
    assert BGraph.from_json(g.to_json()).canonical_key() == g.canonical_key()


# ---------------------------------------------------------------------------
# pullbacks


def test_pullback_with_bouquet_is_identity():
    g = core(subgroup(["xyX", "yyx"]), keep_basepoint=False)
    assert pullback(g, bouquet(XY)).graph.canonical_key(False) == g.canonical_key(False)


def test_pullback_figure():
    fp = fiber_product(PULLBACK_LEFT, PULLBACK_RIGHT)
    assert (fp.n, fp.num_edges) == (12, 8)
    p = pullback(PULLBACK_LEFT, PULLBACK_RIGHT).graph
    assert (p.n, p.num_edges) == (6, 6)
    comps = p.components()
    assert sorted(len(c) for c in comps) == [3, 3]
    assert all(p.induced(c)[0].rank() == 1 for c in comps)


def test_cyclic_coset_graphs_intersect_tightly():
    h2, h3, h6 = cyclic_coset_graph(2, 0), cyclic_coset_graph(3, 0), cyclic_coset_graph(6, 0)
    pb = pullback(h2, h3, keep_basepoint=True).graph
    assert pb.rank() == 7
    assert pb.canonical_key(True) == h6.canonical_key(True)
    assert shnc_ratio(h2.with_basepoint(None), h3.with_basepoint(None)) == 1


def test_pullback_accepts_exactly_the_intersection():
    a = subgroup(["xx", "yxY"])
    b = subgroup(["xy", "xxx", "yy"])
    pb = pullback(a, b, keep_basepoint=True).graph
    for w in all_reduced_words(6):
        assert accepts(pb, w) == (accepts(a, w) and accepts(b, w))


@given(word_lists, word_lists)
def test_pullback_intersection_property(u, v):
    a, b = fold_words(u, XY), fold_words(v, XY)
    pb = pullback(a, b, keep_basepoint=True).graph
    for w in all_reduced_words(4):
        assert accepts(pb, w) == (accepts(a, w) and accepts(b, w))


@given(cored_graphs(), cored_graphs())
def test_pullback_components_have_nonpositive_chi(a, b):
    p = pullback(a, b).graph
    for comp in p.components():
        assert p.induced(comp)[0].euler_char() <= 0


@given(cored_graphs(min_rank=2), cored_graphs(min_rank=2))
def test_strengthened_neumann_bound(a, b):
    assert -pullback(a, b).graph.euler_char() <= a.euler_char() * b.euler_char()


# ---------------------------------------------------------------------------
# morphisms


def test_worked_example_morphism_counts(gamma):
    g = gamma.with_basepoint(None)
    assert count_morphisms(g, DELTA_PRIME) == 2
    assert count_morphisms(g, DELTA_NONSTRICT) == 2
    for m in enumerate_morphisms(g, DELTA_PRIME):
        assert is_morphism(g, DELTA_PRIME, m)


def test_identity_is_a_morphism(gamma):
    ms = enumerate_morphisms(gamma, gamma, basepointed=True)
    assert [m.vertex_map for m in ms] == [tuple(range(gamma.n))]


def _sections(a, b):
    """Vertex maps a -> b found as sections of the fiber product, by brute force."""
    count = 0
    for vmap in itertools.product(range(b.n), repeat=a.n):
        ok = all(
            any((vmap[s], vmap[t]) == e for e in b.edges[k]) for k, lst in enumerate(a.edges) for s, t in lst
        )
        count += ok
    return count


@given(folded_graphs(max_vertices=4), folded_graphs(max_vertices=4))
def test_morphism_count_matches_sections(a, b):
    assert count_morphisms(a, b) == _sections(a, b)


# ---------------------------------------------------------------------------
# quotients


def test_quotients_of_single_vertex():
    assert len(quotients(bouquet(XY))) == 1


def test_worked_example_quotients_contain_two_morphism_graph(gamma):
    chis = sorted(q.euler_char() for q in quotients(gamma))
    assert chis[0] == -2 or -2 in chis
    assert any(q.euler_char() == -2 for q in quotients(gamma))


def _bell(n):
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


@given(folded_graphs(max_vertices=6))
def test_closed_partitions_match_reference(g):
    fast = sorted(closed_partitions(g))
    assert len(set(fast)) == len(fast)
    assert fast == sorted(closed_partitions_rgs(g))
    assert len(fast) <= _bell(g.n)


def test_separated_groups_are_respected():
    g = cyclic_coset_graph(4)
    for labels in closed_partitions(g, separate=[[0, 2]]):
        assert labels[0] != labels[2]


def test_quotient_cap():
    with pytest.raises(CapExceeded):
        list(closed_partitions(cyclic_coset_graph(5), cap=4))


# ---------------------------------------------------------------------------
# coverings


def test_degree_one_covering_is_identity(gamma):
    covs = list(enumerate_coverings(gamma, 1))
    assert len(covs) == 1 and covs[0].total.canonical_key(True) == gamma.canonical_key(True)


def test_coverings_of_a_loop():
    loop = subgroup(["x"])
    totals = sorted(c.total.n - len(c.total.components()) for c in enumerate_coverings(loop, 2))
    assert totals == [0, 1]


@pytest.mark.parametrize("d", [1, 2, 3])
def test_covering_count_and_local_bijectivity(gamma, d):
    covs = list(enumerate_coverings(gamma, d))
    assert len(covs) == math.factorial(d) ** gamma.rank()
    for c in covs:
        proj = [c.vertex_projection(x) for x in range(c.total.n)]
        assert is_covering_map(c.total, gamma, proj)


@given(st.data())
def test_monodromy_round_trip(data):
    g = subgroup(["xyx", "yxx", "yy"])
    d = data.draw(st.integers(1, 4))
    perms = [tuple(data.draw(st.permutations(range(d)))) for _ in range(g.rank())]
    cov = covering_from_perms(g, perms, d)
    assert monodromy(cov) == perms


def test_covering_cap(gamma):
    with pytest.raises(CapExceeded):
        list(enumerate_coverings(gamma, 4, cap=10))


def test_coverings_in_pullback(gamma):
    g = gamma.with_basepoint(None)
    assert any(s.degree == 1 for s in find_coverings_in_pullback(g, g, 1))
    found = find_coverings_in_pullback(g, DELTA_PRIME, 2)
    assert found
    assert len(found) == find_coverings_bruteforce(g, DELTA_PRIME, 2)


@given(cored_graphs(), cored_graphs())
def test_coverings_in_pullback_match_bruteforce(a, b):
    p = pullback(a, b).graph
    if p.n > 12 or a.n > 4:
        return
    for d in (1, 2):
        assert len(find_coverings_in_pullback(a, b, d)) == find_coverings_bruteforce(a, b, d)


def test_shnc_ratio_self_pair():
    g = core(subgroup(["xyX", "yxx"]), keep_basepoint=False)
    assert shnc_ratio(g, g) >= 1
    assert isinstance(shnc_ratio(g, g), Fraction)
