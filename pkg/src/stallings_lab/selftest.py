"""Acceptance computations, shared by the ``selftest`` command and the test suite.

Each ``criterion_N`` runs one reproduction sweep and returns a
:class:`CriterionResult`.  Violations are counted rather than raised so that
a report always names what failed.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .actions import (
    EquationSystem,
    FiniteAction,
    action_polymatroid,
    expected_fixed_points_bruteforce,
    is_valid,
    orbit_representatives,
    reiter_verify,
    satisfaction_probability,
    small_core_graphs,
)
from .bgraph import (
    BGraph,
    basis_words,
    core,
    cycle_graph,
    cyclic_reduce,
    find_coverings_in_pullback,
    fold_words,
    is_proper_power,
    parse_word,
    pullback,
    reduce_word,
)
from .errors import LabError, TheoremViolation
from .fqalg import (
    GF,
    Rep,
    codim_and_transversal,
    gaussian_binomial,
    grassmann_fixed_bruteforce,
    lewin_basis,
    m_beta,
    m_beta_ambient,
    random_invertible,
    sbarpi_q_probe,
)
from .invariants import sbar_pi_d_exact, sbar_pi_d_triv_exact
from .polymatroid import covering_image_polymatroid, cycle_word, image_polymatroid, is_cycle_graph, tree_bound, verify_gap_certificate
from .stacking import (
    all_minimal_stackings,
    find_stacking,
    is_stacking,
    lowest_vertex_bridge_ok,
    sigma_min_nonbridge,
    sigma_minimal_edges,
    stacking_length,
    minimal_stacking,
)
from .wordmeasure import (
    expected_fixed_subsets_symbolic,
    poly_eval,
    trivial_group,
)

XYZ = ("x", "y", "z")
XY = ("x", "y")


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    failures: list[str] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.name} ({self.detail}; {self.seconds:.1f}s)"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, str, list[str]]]) -> CriterionResult:
    start = time.perf_counter()
    ok, detail, failures = fn()
    return CriterionResult(number, name, ok, detail, time.perf_counter() - start, failures)


def subgroup(words: list[str], letters=XY) -> BGraph:
    return fold_words([parse_word(w, letters) for w in words], letters)


# ---------------------------------------------------------------------------
# 1. d = 1 degrees and leading coefficients

FIXED_POINT_TABLE = [
    (["x", "y", "z"], -2, Fraction(1)),
    (["x", "y"], -1, Fraction(1)),
    (["xY", "x^3", "y^3"], -1, Fraction(1)),
    (["xyx", "yxx"], -1, Fraction(2)),
    (["xyXY", "z^210"], -1, Fraction(16)),
]


def criterion_1() -> CriterionResult:
    def run():
        failures = []
        for words, deg, lc in FIXED_POINT_TABLE:
            start = time.perf_counter()
            got = expected_fixed_subsets_symbolic(subgroup(words, XYZ), 1).asymptotics()
            if got != (deg, lc) or time.perf_counter() - start > 60:
                failures.append(f"{words}: got {got}, want {(deg, lc)}")
        return not failures, f"{len(FIXED_POINT_TABLE) - len(failures)}/{len(FIXED_POINT_TABLE)} rows", failures

    return _timed(1, "fixed-point expectations, degree and leading coefficient", run)


# ---------------------------------------------------------------------------
# 2. d-subset closed forms as rational-function identities


def _closed_form(kind: str, n: int, d: int) -> Fraction:
    from math import comb

    c = Fraction(1, comb(n, d))
    if kind == "inverse":
        return c
    if kind == "d_plus_one":
        return (d + 1) * c
    eps = sum(Fraction(1, comb(n, k) - comb(n, k - 1)) for k in range(1, d + 1))
    return (1 + eps) * c


def rational_identity(words: list[str], d: int, kind: str) -> bool:
    """Compare the symbolic expectation with a closed form at enough points to force equality.

    Both sides are rational in ``n``.  The closed form has numerator and
    denominator degree at most ``D = d + d(d+1)/2``, so the cross-multiplied
    difference has degree at most ``max(deg num, deg den) + D``; agreement at
    one more point than that proves the identity.
    """
    sym = expected_fixed_subsets_symbolic(subgroup(words, XYZ), d)
    num, den = sym.canonical()
    bound = max(len(num), len(den)) + d + d * (d + 1) // 2
    start = max(2 * d, sym.max_index() + 1)
    for n in range(start, start + bound + 2):
        if Fraction(poly_eval(num, n)) / poly_eval(den, n) != _closed_form(kind, n, d):
            return False
    return True


SUBSET_TABLE = [(["x", "y"], "inverse"), (["x", "yy"], "d_plus_one"), (["xyXY", "z"], "one_plus_eps")]


def criterion_2() -> CriterionResult:
    def run():
        failures = [
            f"{words} d={d} {kind}"
            for words, kind in SUBSET_TABLE
            for d in (2, 3)
            if not rational_identity(words, d, kind)
        ]
        return not failures, f"{6 - len(failures)}/6 identities", failures

    return _timed(2, "d-subset closed forms for d in {2,3}", run)


# ---------------------------------------------------------------------------
# 3. stable compressed rank from search against the symbolic degree

SBARPI_SUBGROUPS: list[tuple[list[str], tuple[int, ...]]] = [
    (["x", "y"], (1, 2, 3)),
    (["xyx", "yxx"], (1, 2, 3)),
    (["xx", "xy", "yy"], (1, 2)),
    (["xyXY"], (1, 2, 3)),
    (["xyxy"], (1, 2, 3)),
    (["xxyy", "xy"], (1, 2, 3)),
    (["x", "yy"], (1, 2, 3)),
    (["xy", "yx"], (1, 2, 3)),
    (["xx", "yy"], (1, 2, 3)),
    (["xyXY", "xx"], (1, 2)),
    (["x"], (1, 2, 3)),
    (["xxy", "yyx"], (1, 2)),
]


def criterion_3() -> CriterionResult:
    def run():
        failures = []
        checked = 0
        for words, ds in SBARPI_SUBGROUPS:
            g = subgroup(words)
            for d in ds:
                deg, _ = expected_fixed_subsets_symbolic(g, d).asymptotics()
                deg_t, _ = expected_fixed_subsets_symbolic(g, d, group=trivial_group(d)).asymptotics()
                got = sbar_pi_d_exact(g, d).value
                got_t = sbar_pi_d_triv_exact(g, d).value
                checked += 1
                if got != Fraction(-deg, d) or got_t != Fraction(-deg_t, d):
                    failures.append(f"{words} d={d}: search {got}/{got_t}, symbolic {Fraction(-deg, d)}/{Fraction(-deg_t, d)}")
        for d in (1, 2, 3):
            if sbar_pi_d_exact(subgroup(["x", "y"]), d).value != 1:
                failures.append(f"free group of rank 2, d={d}")
            if sbar_pi_d_exact(subgroup(["xyx", "yxx"]), d).value != 1:
                failures.append(f"<xyx, yxx>, d={d}")
        subs = len(SBARPI_SUBGROUPS)
        return not failures, f"{checked} (H, d) pairs over {subs} subgroups", failures

    return _timed(3, "stable compressed rank, search vs symbolic degree", run)


# ---------------------------------------------------------------------------
# 4. brute force over S_n against symbolic evaluation

BRUTE_SUBGROUPS = [["x", "y"], ["xY", "x^3", "y^3"], ["xyx", "yxx"], ["xx", "y"], ["xyXY"], ["xy", "yx"]]


def criterion_4() -> CriterionResult:
    def run():
        failures = []
        pairs = 0
        for words in BRUTE_SUBGROUPS:
            g = subgroup(words)
            sym = expected_fixed_subsets_symbolic(g, 1)
            for n in (2, 3, 4, 5):
                pairs += 1
                brute = expected_fixed_points_bruteforce(g, FiniteAction.symmetric(n))
                if brute != sym.evaluate(n):
                    failures.append(f"{words} n={n}: {brute} vs {sym.evaluate(n)}")
        return not failures and pairs >= 20, f"{pairs - len(failures)}/{pairs} pairs", failures

    return _timed(4, "brute force over S_n equals symbolic value", run)


# ---------------------------------------------------------------------------
# 5. Reiter-type bound on small graphs


def reiter_sweep() -> tuple[int, int, list[str]]:
    instances = hypothesis = 0
    failures = []
    for action in (FiniteAction.symmetric(4), FiniteAction.gl(2, 2)):
        for g in small_core_graphs(XY, 3):
            for f, _ in orbit_representatives(g, action):
                instances += 1
                try:
                    rep = reiter_verify(EquationSystem(g, f), action)
                except TheoremViolation as exc:
                    failures.append(f"{g.to_json()} f={f}: {exc}")
                    continue
                hypothesis += rep["hypothesis"]
    return instances, hypothesis, failures


def criterion_5() -> CriterionResult:
    def run():
        instances, hyp, failures = reiter_sweep()
        return not failures, f"{instances} instances, {hyp} under the hypothesis, {len(failures)} violations", failures

    return _timed(5, "orbit-weighted probability bound and local recoverability", run)


# ---------------------------------------------------------------------------
# 6. gap certificates


def _gap_mode(g: BGraph, gp) -> str | None:
    if g.rank() > 1:
        return "nonabelian"
    if is_cycle_graph(g) and not is_proper_power(cycle_word(g)) and gp.is_compact():
        return "nonpower"
    return None


def gap_sweep() -> tuple[int, int, int, list[str]]:
    """Action polymatroids, covering image polymatroids, and plain image polymatroids.

    Plain image polymatroids that fail the Γ-polymatroid axioms are counted
    and skipped; a covering image polymatroid failing them is a failure.
    """
    graphs = small_core_graphs(XY, 3)
    from_actions = from_images = 0
    skipped = 0
    failures = []

    def attempt(gp, label):
        mode = _gap_mode(gp.graph, gp)
        if mode is None:
            return False
        try:
            verify_gap_certificate(gp, mode)
        except TheoremViolation as exc:
            failures.append(f"{label}: {exc}")
        return True

    for action in (FiniteAction.symmetric(4), FiniteAction.gl(2, 2)):
        for g in graphs:
            for f, _ in orbit_representatives(g, action):
                system = EquationSystem(g, f)
                gp = action_polymatroid(system, action)
                if satisfaction_probability(system, action) > 0:
                    from_actions += attempt(gp, f"action f={f}")
    for g in graphs:
        for h in graphs:
            gp = image_polymatroid(g, h)
            if not gp.check().ok:
                skipped += 1
            else:
                from_images += attempt(gp, "image")
            for d in (1, 2):
                for sub in find_coverings_in_pullback(g, h, d):
                    gp = covering_image_polymatroid(g, h, sub)
                    if not gp.check().ok:
                        failures.append(f"covering image of degree {d} is not a Γ-polymatroid")
                        continue
                    from_images += attempt(gp, "covering image")
    return from_actions, from_images, skipped, failures


def criterion_6() -> CriterionResult:
    def run():
        acts, imgs, skipped, failures = gap_sweep()
        total = acts + imgs
        detail = f"{total} certified ({acts} action, {imgs} image), {skipped} images not Γ-polymatroids"
        return not failures and total >= 500, detail, failures

    return _timed(6, "Γ-polymatroid gap certificates", run)


# ---------------------------------------------------------------------------
# 7. strengthened Hanna Neumann inequality


def random_core(rng: random.Random, letters=XY, min_rank: int = 2) -> BGraph:
    while True:
        words = []
        for _ in range(rng.randint(2, 3)):
            w = reduce_word([(rng.randrange(len(letters)), rng.choice((1, -1))) for _ in range(rng.randint(1, 6))])
            if w:
                words.append(w)
        if not words:
            continue
        g = core(fold_words(words, letters), keep_basepoint=False)
        if g.is_connected() and g.rank() >= min_rank and g.n >= 2:
            return g


def cyclic_coset_graph(n: int) -> BGraph:
    return BGraph(XY, n, [[(i, (i + 1) % n) for i in range(n)], [(i, (i + 1) % n) for i in range(n)]])


def shnc_sweep(pairs: int = 1000, seed: int = 0) -> tuple[int, int, list[str]]:
    rng = random.Random(seed)
    failures = []
    tight = 0
    for _ in range(pairs):
        a, b = random_core(rng), random_core(rng)
        lhs = -pullback(a, b).graph.euler_char()
        rhs = a.euler_char() * b.euler_char()
        if lhs > rhs:
            failures.append(f"{a.to_json()} {b.to_json()}: {lhs} > {rhs}")
        tight += lhs == rhs
    return pairs, tight, failures


def criterion_7() -> CriterionResult:
    def run():
        pairs, tight, failures = shnc_sweep()
        h2, h3 = cyclic_coset_graph(2), cyclic_coset_graph(3)
        lhs = -pullback(h2, h3).graph.euler_char()
        rhs = h2.euler_char() * h3.euler_char()
        if lhs != rhs:
            failures.append(f"H2/H3: {lhs} != {rhs}")
        return not failures, f"{pairs} pairs, {tight} tight, H2/H3 gives {lhs} = {rhs}", failures

    return _timed(7, "pullback Euler characteristic bound", run)


# ---------------------------------------------------------------------------
# 8. rank formula for submodules cut out by representations


FINITE_INDEX = [["x", "y"], ["xx", "y", "xyX"], ["xx", "xy", "yy"], ["x", "yy", "yxY"]]


def schreier_sweep(count: int = 60, seed: int = 0) -> tuple[int, list[str]]:
    """Random ``beta`` on random ``H``, over ``K[H]`` and, for finite index, inside ``K[F]``.

    Inside ``K[F]^d`` the free rank is ``m = d`` and the codimension is
    ``d [F:H]``, so the same identity is a non-trivial check of the transversal.
    """
    rng = random.Random(seed)
    failures = []
    done = 0
    while done < count:
        ambient = done % 2 == 1
        g = subgroup(rng.choice(FINITE_INDEX)) if ambient else subgroup_random(rng)
        words = basis_words(g)
        r = len(words)
        if not 1 <= r <= 3:
            continue
        field = GF(rng.choice((2, 3)))
        d = rng.randint(1, 3)
        rep = Rep(field, XY, words, [random_invertible(field, d, rng) for _ in words])
        mod = m_beta_ambient(rep) if ambient else m_beta(rep)
        codim, st = codim_and_transversal(mod)
        rank = len(lewin_basis(mod, st))
        want_codim = d * g.n if ambient else d
        if codim != want_codim or rank - d != d * (r - 1):
            failures.append(f"q={field.q} d={d} rk H={r} ambient={ambient}: codim {codim}, rank {rank}")
        done += 1
    return done, failures


def subgroup_random(rng: random.Random) -> BGraph:
    words = [
        reduce_word([(rng.randrange(2), rng.choice((1, -1))) for _ in range(rng.randint(1, 4))])
        for _ in range(rng.randint(1, 3))
    ]
    return fold_words([w for w in words if w] or [((0, 1),)], XY)


def criterion_8() -> CriterionResult:
    def run():
        done, failures = schreier_sweep()
        return not failures and done >= 50, f"{done - len(failures)}/{done} representations", failures

    return _timed(8, "Schreier rank formula for M_beta", run)


# ---------------------------------------------------------------------------
# 9. invariant subspaces over F_q and the rank gap for efficient overmodules

GRASSMANN_CASES = [(2, 2, 1), (3, 2, 1), (2, 3, 1), (3, 2, 2)]
PROBE_CASES = [
    (["x", "y"], 1, 2),
    (["xx", "xy", "yy"], 1, 2),
    (["x", "yxY"], 1, 2),
    (["x", "yy"], 1, 2),
    (["xy", "yx"], 1, 2),
    (["xy", "yy"], 1, 2),
    (["x", "y"], 2, 2),
    (["x", "y"], 1, 3),
    (["xx", "y"], 1, 3),
]


def criterion_9() -> CriterionResult:
    def run():
        failures = []
        free = subgroup(["x", "y"])
        for n, q, d in GRASSMANN_CASES:
            try:
                value = grassmann_fixed_bruteforce(free, n, q, d)
            except TheoremViolation as exc:
                failures.append(f"(n,q,d)={(n, q, d)}: {exc}")
                continue
            if value <= 0 or value > gaussian_binomial(n, d, q):
                failures.append(f"(n,q,d)={(n, q, d)}: {value} out of range")
        certified = 0
        for words, d, q in PROBE_CASES:
            try:
                rep = sbarpi_q_probe(subgroup(words), d, q)
            except TheoremViolation as exc:
                failures.append(f"{words} d={d}: {exc}")
                continue
            certified += rep.certified
            if rep.min_rank is not None and rep.min_rank < 2 * d:
                failures.append(f"{words} d={d}: rank {rep.min_rank}")
        detail = f"{len(GRASSMANN_CASES)} Grassmann cases, {certified} efficient overmodules certified"
        return not failures and certified > 0, detail, failures

    return _timed(9, "invariant subspace routes and efficient overmodule ranks", run)


# ---------------------------------------------------------------------------
# 10. stackings


def random_cycle_word(rng: random.Random, max_len: int = 10):
    while True:
        w = cyclic_reduce(reduce_word([(rng.randrange(2), rng.choice((1, -1))) for _ in range(rng.randint(1, max_len))]))
        if w and not is_proper_power(w):
            return w


def random_small_graph(rng: random.Random, max_vertices: int = 8) -> BGraph:
    n = rng.randint(2, max_vertices)
    edges = []
    for _ in range(2):
        k = rng.randint(0, n)
        edges.append(list(zip(rng.sample(range(n), k), rng.sample(range(n), k))))
    return BGraph(XY, n, edges)


def _propagate(g: BGraph, alpha, start: int) -> tuple[int, ...]:
    f: list[int | None] = [None] * g.n
    f[0] = start
    changed = True
    while changed:
        changed = False
        for b, lst in enumerate(g.edges):
            for s, t in lst:
                if f[s] is not None and f[t] is None:
                    f[t] = alpha[b][f[s]]
                    changed = True
                if f[t] is not None and f[s] is None:
                    f[s] = alpha[b].index(f[t])
                    changed = True
    return tuple(f)


def stacking_sweep(seed: int = 0) -> tuple[dict, list[str]]:
    rng = random.Random(seed)
    failures = []
    counts = {"words": 0, "minimal": 0, "witnesses": 0, "tree_bound": 0}
    while counts["words"] < 100:
        w = random_cycle_word(rng)
        g = cycle_graph(w, XY)
        st = find_stacking(g)
        if st is None or not is_stacking(g, st.heights):
            failures.append(f"word {w} not stackable")
        counts["words"] += 1
    for _ in range(300):
        g = random_small_graph(rng)
        if not g.is_connected():
            continue
        minimal = all_minimal_stackings(g)
        if not minimal:
            continue
        counts["minimal"] += 1
        for h in minimal:
            if not lowest_vertex_bridge_ok(g, h):
                failures.append(f"{g.to_json()} heights {h}: lowest vertex condition fails")
        m = minimal_stacking(g)
        if stacking_length(g, m.heights) != stacking_length(g, minimal[0]):
            failures.append(f"{g.to_json()}: minimal_stacking is not minimal")
        if g.euler_char() <= 0:
            try:
                sigma_min_nonbridge(g, m.heights)
                counts["witnesses"] += 1
            except LabError as exc:
                failures.append(f"{g.to_json()}: {exc}")
    actions = [FiniteAction.symmetric(4), FiniteAction.gl(2, 2), FiniteAction.symmetric(3)]
    tries = 0
    while counts["tree_bound"] < 200 and tries < 20000:
        tries += 1
        g = cycle_graph(random_cycle_word(rng, 8), XY)
        action = rng.choice(actions)
        alpha = [rng.choice(action.elements) for _ in range(2)]
        system = EquationSystem(g, _propagate(g, alpha, rng.randrange(action.degree)))
        if not is_valid(system, alpha):
            continue
        gp = action_polymatroid(system, action)
        if not gp.is_compact():
            continue
        st = find_stacking(g)
        e = sigma_minimal_edges(g, st.heights)[0]
        tree = frozenset(x for x in g.edge_ids() if x != e)
        if not gp.chi() <= tree_bound(gp, st.heights, tree):
            failures.append(f"tree bound fails on {g.to_json()}")
        counts["tree_bound"] += 1
    return counts, failures


def criterion_10() -> CriterionResult:
    def run():
        counts, failures = stacking_sweep()
        detail = ", ".join(f"{k} {v}" for k, v in counts.items())
        ok = not failures and counts["words"] >= 100 and counts["tree_bound"] > 0
        return ok, detail, failures

    return _timed(10, "stackings, minimal stackings and the tree bound", run)


CRITERIA = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
]


def run_all(only: list[int] | None = None) -> list[CriterionResult]:
    return [fn() for i, fn in enumerate(CRITERIA, 1) if only is None or i in only]
