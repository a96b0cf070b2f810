import random

import pytest
from hypothesis import HealthCheck, settings, strategies as st

from stallings_lab.bgraph import BGraph, core, fold_words, parse_word, reduce_word

settings.register_profile("lab", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

XY = ("x", "y")
XYZ = ("x", "y", "z")


def subgroup(words, letters=XY):
    return fold_words([parse_word(w, letters) for w in words], letters)


def cyclic_coset_graph(n, basepoint=None):
    """Graph of H_n: both letters act as the same n-cycle."""
    cyc = [(i, (i + 1) % n) for i in range(n)]
    return BGraph(XY, n, [cyc, cyc], basepoint)


# graphs drawn from the worked example of two subgroups with two morphisms
GAMMA_WORDS = ["xyx", "yxx"]
DELTA_PRIME = BGraph(XY, 5, {"x": [(0, 3), (1, 4), (3, 1), (4, 2)], "y": [(1, 0), (2, 1), (4, 3)]})
DELTA_NONSTRICT = BGraph(
    XY,
    6,
    {"x": [(0, 1), (1, 2), (3, 4), (4, 0), (4, 5), (5, 1)], "y": [(0, 3), (1, 4), (2, 5)]},
    strict=False,
)

# the two factors of the pullback figure
PULLBACK_LEFT = BGraph(XY, 4, {"x": [(0, 1), (1, 2), (2, 3)], "y": [(2, 0), (3, 1)]})
PULLBACK_RIGHT = BGraph(XY, 3, {"x": [(0, 1), (2, 0)], "y": [(1, 2)]})


@pytest.fixture
def gamma():
    return subgroup(GAMMA_WORDS)


@pytest.fixture
def rng():
    return random.Random(12345)


# ---------------------------------------------------------------------------
# hypothesis strategies

syllable = st.tuples(st.integers(0, 1), st.sampled_from((1, -1)))
words = st.lists(syllable, min_size=1, max_size=6).map(reduce_word).filter(bool)
word_lists = st.lists(words, min_size=1, max_size=3)


@st.composite
def folded_graphs(draw, max_vertices=6, connected=True):
    n = draw(st.integers(1, max_vertices))
    edges = []
    for _ in range(2):
        k = draw(st.integers(0, n))
        srcs = draw(st.permutations(range(n)))[:k]
        tgts = draw(st.permutations(range(n)))[:k]
        edges.append(list(zip(srcs, tgts)))
    g = BGraph(XY, n, edges)
    if connected:
        from hypothesis import assume

        assume(g.is_connected())
    return g


@st.composite
def cored_graphs(draw, min_rank=1):
    ws = draw(word_lists)
    g = core(fold_words(ws, XY), keep_basepoint=False)
    from hypothesis import assume

    assume(g.n > 0 and g.is_connected() and g.rank() >= min_rank)
    return g


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for result in sorted(test_acceptance.RESULTS, key=lambda r: r.number):
            terminalreporter.write_line(result.line())
