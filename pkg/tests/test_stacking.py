import random

import pytest
from hypothesis import given

from stallings_lab.bgraph import (
    BGraph,
    bouquet,
    core,
    cycle_graph,
    fold_words,
    is_morphism,
    is_proper_power,
    parse_word,
    reduce_word,
)
from stallings_lab.errors import PreconditionError
from stallings_lab.stacking import (
    Stacking,
    all_minimal_stackings,
    all_stackings,
    all_stackings_bruteforce,
    bridges,
    find_stackable_subgroup,
    find_stacking,
    is_stacking,
    lowest_vertex_bridge_ok,
    minimal_stacking,
    normalize_heights,
    sigma_min_nonbridge,
    sigma_minimal_edges,
    stacking_length,
)

from conftest import XY, cored_graphs, folded_graphs

# a stacking whose bottom leaf cannot simply be moved under its neighbour
LEAF_GRAPH = BGraph(
    XY,
    6,
    {"x": [(5, 2), (2, 3), (0, 5), (1, 0), (4, 1)], "y": [(5, 2), (1, 0), (0, 5)]},
)
LEAF_HEIGHTS = (2, 1, 4, 5, 0, 3)


def test_two_letter_cycle():
    g = cycle_graph("xy", XY)
    st_ = find_stacking(g)
    assert st_ is not None and is_stacking(g, st_.heights)
    assert stacking_length(g, minimal_stacking(g).heights) == 2


def test_commutator_cycle_is_stackable():
    g = cycle_graph("xyXY", XY)
    assert find_stacking(g) is not None
    assert all_stackings_bruteforce(g)


def test_power_cycle_is_not_stackable():
    g = cycle_graph("xx", XY)
    assert g.n == 2
    assert find_stacking(g) is None
    assert all_stackings_bruteforce(g) == []


def test_heights_must_be_distinct():
    with pytest.raises(PreconditionError):
        normalize_heights([0, 1, 1])
    assert normalize_heights([10, -3, 7]) == (2, 0, 1)
    assert Stacking.from_json({"heights": [5, 1]}).heights == (1, 0)


@given(folded_graphs(max_vertices=6))
def test_search_matches_bruteforce(g):
    assert sorted(all_stackings(g)) == sorted(all_stackings_bruteforce(g))
    found = find_stacking(g)
    assert (found is None) == (not all_stackings_bruteforce(g))


@given(folded_graphs(max_vertices=6))
def test_minimal_stacking_is_minimal(g):
    stacks = all_stackings_bruteforce(g)
    best = minimal_stacking(g)
    if not stacks:
        assert best is None
        return
    assert best.certified
    assert stacking_length(g, best.heights) == min(stacking_length(g, h) for h in stacks)


@given(folded_graphs(max_vertices=7))
def test_minimal_stackings_isolate_bottom_bridge(g):
    for h in all_minimal_stackings(g):
        assert lowest_vertex_bridge_ok(g, h)


def _random_cycle_word(rng, length):
    while True:
        w = [(rng.randrange(2), rng.choice((1, -1))) for _ in range(length)]
        g = cycle_graph(tuple(w), XY)
        if g.n:
            return tuple(w), g


@pytest.mark.parametrize("seed", range(10))
def test_non_power_cycles_are_stackable(seed):
    rng = random.Random(seed)
    for _ in range(10):
        w, g = _random_cycle_word(rng, rng.randint(2, 10))
        if is_proper_power(reduce_word(w)):
            continue
        assert find_stacking(g) is not None


def test_theta_graph_has_visible_edge():
    g = core(fold_words([parse_word(w, XY) for w in ("xy", "yx")], XY).with_basepoint(None), keep_basepoint=False)
    assert (g.n, g.rank()) == (3, 2)
    h = find_stacking(g).heights
    wit = sigma_min_nonbridge(g, h)
    assert wit.edge in sigma_minimal_edges(g, wit.heights)
    assert wit.edge not in wit.tree
    assert is_stacking(g, wit.heights)


def test_leaf_graph_replays_reordering():
    assert is_stacking(LEAF_GRAPH, LEAF_HEIGHTS)
    wit = sigma_min_nonbridge(LEAF_GRAPH, LEAF_HEIGHTS)
    assert is_stacking(LEAF_GRAPH, wit.heights)
    assert wit.edge not in bridges(LEAF_GRAPH)
    assert wit.edge in sigma_minimal_edges(LEAF_GRAPH, wit.heights)


def test_leaf_move_alone_can_break_the_stacking():
    from stallings_lab.stacking import _leaf_reorder

    low = min(range(LEAF_GRAPH.n), key=lambda v: LEAF_HEIGHTS[v])
    assert LEAF_GRAPH.degree(low) == 1
    assert _leaf_reorder(LEAF_GRAPH, list(LEAF_HEIGHTS), low, bridges(LEAF_GRAPH)) is None


@given(cored_graphs(min_rank=2))
def test_visible_non_bridge_edge_exists(g):
    first = find_stacking(g)
    if first is None or g.n > 9:
        return
    wit = sigma_min_nonbridge(g, first.heights)
    assert is_stacking(g, wit.heights)
    assert wit.edge not in wit.tree and len(wit.tree) == g.n - 1
    assert wit.edge in sigma_minimal_edges(g, wit.heights)


def test_nonbridge_rejects_bad_input():
    g = cycle_graph("xy", XY)
    with pytest.raises(PreconditionError):
        sigma_min_nonbridge(g, (0, 0))


def test_stackable_subgroup_in_bouquet():
    found = find_stackable_subgroup(bouquet(XY), seed=0)
    assert found.graph.euler_char() < 0
    assert is_stacking(found.graph, found.stacking.heights)
    sigma = fold_words(found.words, XY)
    assert is_morphism(sigma, bouquet(XY), found.morphism)
