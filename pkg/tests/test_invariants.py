from fractions import Fraction

import pytest

from stallings_lab.bgraph import BGraph, bouquet, shnc_ratio
from stallings_lab.errors import PreconditionError
from stallings_lab.invariants import (
    crit_lattice_check,
    join_graph,
    meet_graph,
    pibar_exact,
    replay_certificate,
    sbar_pi_d_exact,
    sbar_pi_d_triv_exact,
    spi_d_upper,
)
from stallings_lab.wordmeasure import expected_fixed_subsets_symbolic, trivial_group

from conftest import GAMMA_WORDS, XY, XYZ, subgroup


# ---------------------------------------------------------------------------
# compressed rank


def test_pibar_of_free_group():
    value, crit = pibar_exact(subgroup(["x", "y"]))
    assert value == 2 and len(crit) == 1 and crit[0].n == 1


def test_pibar_of_worked_example():
    value, crit = pibar_exact(subgroup(GAMMA_WORDS))
    assert value == 2
    assert all(c.rank() == 2 for c in crit)


@pytest.mark.parametrize("words", [["xx", "xy", "yy"], ["xx", "y", "xyX"], ["x", "yy", "yxY"]])
def test_pibar_of_finite_index_subgroup(words):
    assert pibar_exact(subgroup(words))[0] == 2


def test_pibar_of_two_letter_subgroup_in_three_letter_group():
    assert pibar_exact(subgroup(["x", "y"], XYZ))[0] == 2


def test_pibar_needs_basepoint():
    with pytest.raises(PreconditionError):
        pibar_exact(subgroup(["x", "y"]).with_basepoint(None))


# ---------------------------------------------------------------------------
# stable compressed ranks


@pytest.mark.parametrize("d", [1, 2, 3])
def test_free_group_value(d):
    rep = sbar_pi_d_exact(bouquet(XY), d)
    assert rep.value == 1 and rep.method == "exact"


def test_worked_example_at_degree_two():
    g = subgroup(GAMMA_WORDS)
    rep = sbar_pi_d_exact(g, 2)
    assert rep.value == 1
    delta = BGraph.from_json(rep.certificate["delta"])
    assert delta.euler_char() == -2
    assert replay_certificate(g, rep, 2)


@pytest.mark.parametrize("words", [["x"], ["xyXY"], ["xyxy"]])
@pytest.mark.parametrize("d", [1, 2])
def test_cyclic_subgroups_have_value_zero(words, d):
    assert sbar_pi_d_exact(subgroup(words), d).value == 0


@pytest.mark.parametrize("words", [GAMMA_WORDS, ["xx", "yy"], ["xy", "yx"], ["x", "yy"]])
def test_degree_one_is_pibar_minus_one(words):
    g = subgroup(words)
    assert sbar_pi_d_exact(g, 1).value == pibar_exact(g)[0] - 1
    assert sbar_pi_d_triv_exact(g, 1).value == pibar_exact(g)[0] - 1


@pytest.mark.parametrize("words", [GAMMA_WORDS, ["xx", "yy"], ["xyXY", "xx"]])
@pytest.mark.parametrize("d", [1, 2])
def test_chain_of_inequalities(words, d):
    g = subgroup(words)
    c = g.with_basepoint(None)
    s = sbar_pi_d_exact(g, d).value
    t = sbar_pi_d_triv_exact(g, d).value
    pibar = pibar_exact(g)[0]
    assert 1 <= s <= t <= pibar - 1 <= min(2, g.rank()) - 1
    assert shnc_ratio(c, c) >= 1


@pytest.mark.parametrize("words", [GAMMA_WORDS, ["xx", "yy"], ["x", "yy"]])
@pytest.mark.parametrize("d", [1, 2])
def test_search_agrees_with_symbolic_degree(words, d):
    g = subgroup(words)
    deg, _ = expected_fixed_subsets_symbolic(g, d).asymptotics()
    deg_t, _ = expected_fixed_subsets_symbolic(g, d, group=trivial_group(d)).asymptotics()
    assert sbar_pi_d_exact(g, d).value == Fraction(-deg, d)
    assert sbar_pi_d_triv_exact(g, d).value == Fraction(-deg_t, d)


def test_truncation_is_reported():
    rep = sbar_pi_d_exact(subgroup(GAMMA_WORDS), 2, caps={"partitions": 3})
    assert rep.method == "upper-bound"
    assert rep.frontier["partitions"] == 4


def test_caps_must_be_positive():
    with pytest.raises(PreconditionError):
        sbar_pi_d_exact(bouquet(XY), 1, caps={"coverings": 0})


def test_trivial_subgroup_is_rejected():
    with pytest.raises(PreconditionError):
        sbar_pi_d_exact(BGraph(XY, 1, [[], []], basepoint=0), 1)


# ---------------------------------------------------------------------------
# surrogate upper bound


def test_surrogate_is_labelled():
    rep = spi_d_upper(subgroup(GAMMA_WORDS), 1)
    assert "algebraicity unchecked" in rep.method
    assert rep.value >= 1


@pytest.mark.parametrize("word", ["xy", "xyXY", "xxy", "xyyXY"])
def test_non_power_cycles_stay_above_one(word):
    rep = spi_d_upper(subgroup([word]), 2)
    assert rep.value is None or rep.value >= 1


def test_power_cycle_is_noted():
    rep = spi_d_upper(subgroup(["xyxy"]), 2)
    assert any("cycle input" in n for n in rep.notes)


# ---------------------------------------------------------------------------
# critical overgroups


def test_meet_with_itself():
    g = subgroup(GAMMA_WORDS)
    assert meet_graph(g, g).canonical_key(True) == g.canonical_key(True)


def test_join_of_generators_is_the_whole_group():
    j = join_graph(subgroup(["x"]), subgroup(["y"]))
    assert j.canonical_key(True) == bouquet(XY).canonical_key(True)


@pytest.mark.parametrize("words", [["x", "y"], GAMMA_WORDS, ["xx", "yy"], ["xy", "yx"], ["xyXY", "xx"]])
def test_critical_overgroups_form_a_lattice(words):
    rep = crit_lattice_check(subgroup(words))
    assert rep.closed, rep.failures
    if rep.size == 1:
        assert rep.pairs_checked == 1
