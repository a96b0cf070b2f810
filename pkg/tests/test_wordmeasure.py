import math
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, strategies as st

from stallings_lab.bgraph import BGraph, enumerate_morphisms, quotients
from stallings_lab.errors import CapExceeded, PreconditionError
from stallings_lab.wordmeasure import (
    FallingFactorialRational,
    binomial_inverse_forms,
    decomp2,
    expected_fixed_bruteforce,
    expected_fixed_subsets_symbolic,
    falling,
    hom_orbit_representatives,
    letter_disjoint_factors,
    lift_count,
    lift_count_bruteforce,
    monte_carlo_check,
    symmetric_group,
    trivial_group,
)

from conftest import XYZ, subgroup

N = sympy.Symbol("n")


def sympy_value(expr: FallingFactorialRational):
    total = sympy.Integer(0)
    for (num, den), c in expr.terms.items():
        top = sympy.prod([sympy.ff(N, k) for k in num])
        bottom = sympy.prod([sympy.ff(N, k) for k in den])
        total += sympy.Rational(c.numerator, c.denominator) * top / bottom
    return sympy.cancel(sympy.together(total))


def as_sympy_poly(coeffs):
    return sum(sympy.Rational(c.numerator, c.denominator) * N**i for i, c in enumerate(coeffs))


monomials = st.builds(
    FallingFactorialRational.monomial,
    st.fractions(min_value=-5, max_value=5, max_denominator=4),
    st.lists(st.integers(1, 4), max_size=2),
    st.lists(st.integers(1, 4), max_size=2),
)
expressions = st.lists(monomials, min_size=1, max_size=4).map(lambda ms: sum(ms[1:], ms[0]))


# ---------------------------------------------------------------------------
# falling-factorial rational functions


def test_falling_factorial():
    assert falling(5, 2) == 20 and falling(3, 4) == 0 and falling(7, 0) == 1


@given(expressions)
def test_canonical_form_matches_sympy(expr):
    num, den = expr.canonical()
    ours = sympy.cancel(as_sympy_poly(num) / as_sympy_poly(den)) if num else sympy.Integer(0)
    assert sympy.simplify(ours - sympy_value(expr)) == 0
    if num:
        assert den[-1] == 1
        gcd = sympy.gcd(sympy.Poly(as_sympy_poly(num), N), sympy.Poly(as_sympy_poly(den), N))
        assert gcd.degree() == 0


@given(expressions, st.integers(9, 20))
def test_evaluation_matches_canonical_form(expr, n):
    num, den = expr.canonical()
    value = sum((c * n**i for i, c in enumerate(num)), Fraction(0))
    value /= sum((c * n**i for i, c in enumerate(den)), Fraction(0))
    assert expr.evaluate(n) == value


@given(expressions, expressions, st.integers(9, 15))
def test_ring_operations(a, b, n):
    assert (a + b).evaluate(n) == a.evaluate(n) + b.evaluate(n)
    assert (a * b).evaluate(n) == a.evaluate(n) * b.evaluate(n)


@given(expressions)
def test_json_round_trip(expr):
    back = FallingFactorialRational.from_json(expr.to_json())
    assert back.canonical() == expr.canonical()


def test_asymptotics():
    expr = FallingFactorialRational.monomial(3, [2], [3])
    assert expr.asymptotics() == (-1, 3)
    with pytest.raises(PreconditionError):
        FallingFactorialRational().asymptotics()


def test_vanishing_denominator():
    with pytest.raises(PreconditionError):
        FallingFactorialRational.monomial(1, [], [3]).evaluate(2)


# ---------------------------------------------------------------------------
# lift counts


def _surjective_morphisms(g, limit=6):
    out = []
    for q in quotients(g):
        if q.num_edges > 5:
            continue
        for eta in enumerate_morphisms(g, q):
            if set(eta.vertex_map) == set(range(q.n)) and all(
                set(em) == set(range(len(lst))) for em, lst in zip(eta.edge_map, q.edges)
            ):
                out.append((q, eta))
                break
        if len(out) >= limit:
            break
    return out


@pytest.mark.parametrize("words", [["xyx", "yxx"], ["xy", "yx"], ["xxy"]])
@pytest.mark.parametrize("n", [2, 3])
def test_lift_count_matches_bruteforce(words, n):
    g = subgroup(words).with_basepoint(None)
    pairs = _surjective_morphisms(g)
    assert pairs
    for q, eta in pairs:
        assert lift_count(g, q, eta).evaluate(n) == lift_count_bruteforce(g, q, eta, n)


def test_lift_count_needs_surjection(gamma):
    g = gamma.with_basepoint(None)
    eta = enumerate_morphisms(g, g)[0]
    lift_count(g, g, eta)
    big = subgroup(["xyx", "yxx", "yyy"]).with_basepoint(None)
    for m in enumerate_morphisms(g, big):
        with pytest.raises(PreconditionError):
            lift_count(g, big, m)


def test_decomposition_classes_count_quotients(gamma):
    assert len(decomp2(gamma)) == len(quotients(gamma))


# ---------------------------------------------------------------------------
# symbolic expectations


def test_hom_orbits_cover_all_homomorphisms():
    group = symmetric_group(3)
    reps = hom_orbit_representatives(group, 2)
    assert sum(size for _, size in reps) == len(group) ** 2


@pytest.mark.parametrize("words", [["x"], ["xy"], ["xx", "y"], ["xyX", "yy"], ["xyXY"], ["xx", "xy", "yy"]])
@pytest.mark.parametrize("d", [1, 2])
def test_symbolic_matches_bruteforce(words, d):
    g = subgroup(words)
    expr = expected_fixed_subsets_symbolic(g, d)
    for n in range(max(2 * d, 3), 6):
        assert expr.evaluate(n) == expected_fixed_bruteforce(g, n, d)


@pytest.mark.parametrize("words", [["xy"], ["xx", "y"]])
def test_trivial_group_counts_tuples(words):
    g = subgroup(words)
    expr = expected_fixed_subsets_symbolic(g, 2, group=trivial_group(2))
    for n in (4, 5):
        assert expr.evaluate(n) == expected_fixed_bruteforce(g, n, 2, group=trivial_group(2))


def test_trivial_subgroup_fixes_everything():
    g = BGraph(("x", "y"), 1, [[], []], basepoint=0)
    assert expected_fixed_subsets_symbolic(g, 2).evaluate(6) == math.comb(6, 2)


def test_free_factor_splitting_agrees():
    g = subgroup(["xyXY", "z"], XYZ)
    assert len(letter_disjoint_factors(g)) == 2
    split = expected_fixed_subsets_symbolic(g, 2)
    whole = expected_fixed_subsets_symbolic(g, 2, factorize=False)
    assert split.canonical() == whole.canonical()


@pytest.mark.parametrize(
    "words,kind,letters",
    [(["x", "y"], "inverse", ("x", "y")), (["x", "yy"], "d_plus_one", ("x", "y")), (["xyXY", "z"], "one_plus_eps", XYZ)],
)
@pytest.mark.parametrize("d", [2, 3])
def test_subset_closed_forms(words, kind, letters, d):
    expr = expected_fixed_subsets_symbolic(subgroup(words, letters), d)
    for n in range(2 * d, 2 * d + 6):
        assert expr.evaluate(n) == binomial_inverse_forms(n, d)[kind]


def test_caps():
    g = subgroup(["xyx", "yxx"])
    with pytest.raises(CapExceeded):
        expected_fixed_subsets_symbolic(g, 3, caps={"vertices": 8})
    with pytest.raises(CapExceeded):
        expected_fixed_subsets_symbolic(g, 5)
    with pytest.raises(CapExceeded):
        expected_fixed_bruteforce(g, 6, cap=1000)


# ---------------------------------------------------------------------------
# Monte Carlo


def test_monte_carlo_is_deterministic_and_close():
    g = subgroup(["xy", "yyx"])
    a = monte_carlo_check(g, 2, 6, 3000, seed=7)
    b = monte_carlo_check(g, 2, 6, 3000, seed=7)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    exact = float(expected_fixed_subsets_symbolic(g, 2).evaluate(6))
    assert abs(a.mean - exact) <= 4 * a.stderr + 1e-9
