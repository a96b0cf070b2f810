"""Exact expectations of invariant objects under random permutations.

For a subgroup ``H`` of a free group and uniformly random permutations
``alpha(b)`` in ``S_n`` per letter, the expected number of ``alpha(H)``-fixed
elements of ``[n]_d / G`` is a rational function of ``n``.  It is computed
from degree-``d`` numbered coverings of the Stallings graph and the
fold-closed quotients of each covering, then evaluated or expanded
asymptotically.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

from .bgraph import (
    BGraph,
    Covering,
    Morphism,
    basis_words,
    closed_partitions,
    covering_from_perms,
    monodromy,
    read_word,
    spanning_tree,
)
from .errors import CapExceeded, PreconditionError

DEFAULT_CAPS = {"d": 4, "rank": 3, "vertices": 12}


# ---------------------------------------------------------------------------
# polynomials in n with rational coefficients (lowest degree first)


def _trim(p: list[Fraction]) -> list[Fraction]:
    while p and p[-1] == 0:
        p.pop()
    return p


def poly_mul_linear(p: Sequence[Fraction], root: int) -> list[Fraction]:
    """Multiply by ``(n - root)``."""
    out = [Fraction(0)] * (len(p) + 1)
    for k, c in enumerate(p):
        out[k + 1] += c
        out[k] -= root * c
    return _trim(out)


def poly_div_linear(p: Sequence[Fraction], root: int) -> list[Fraction]:
    """Exact division by ``(n - root)``; the caller checks divisibility."""
    deg = len(p) - 1
    out = [Fraction(0)] * deg
    out[deg - 1] = p[deg]
    for k in range(deg - 1, 0, -1):
        out[k - 1] = p[k] + root * out[k]
    return out


def poly_eval(p: Sequence[Fraction], x) -> Fraction:
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def poly_add(p: Sequence[Fraction], q: Sequence[Fraction]) -> list[Fraction]:
    out = [Fraction(0)] * max(len(p), len(q))
    for k, c in enumerate(p):
        out[k] += c
    for k, c in enumerate(q):
        out[k] += c
    return _trim(out)


def falling(n: int, k: int) -> int:
    out = 1
    for j in range(k):
        out *= n - j
    return out


# ---------------------------------------------------------------------------
# falling-factorial rational expressions


@dataclass
class FallingFactorialRational:
    """A finite sum of ``c * prod (n)_a / prod (n)_b``.

    ``terms`` maps ``(numerator_indices, denominator_indices)`` (sorted
    tuples) to exact rational coefficients.
    """

    terms: dict[tuple[tuple[int, ...], tuple[int, ...]], Fraction] = field(default_factory=dict)

    @classmethod
    def constant(cls, c) -> "FallingFactorialRational":
        return cls({((), ()): Fraction(c)} if c else {})

    @classmethod
    def monomial(cls, c, num: Iterable[int] = (), den: Iterable[int] = ()) -> "FallingFactorialRational":
        num = tuple(sorted(k for k in num if k))
        den = tuple(sorted(k for k in den if k))
        return cls({(num, den): Fraction(c)} if c else {})

    def __add__(self, other: "FallingFactorialRational") -> "FallingFactorialRational":
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, Fraction(0)) + c
            if out[key] == 0:
                del out[key]
        return FallingFactorialRational(out)

    def __mul__(self, other):
        if not isinstance(other, FallingFactorialRational):
            c = Fraction(other)
            return FallingFactorialRational({k: v * c for k, v in self.terms.items() if v * c})
        out: dict = {}
        for (n1, d1), c1 in self.terms.items():
            for (n2, d2), c2 in other.terms.items():
                key = (tuple(sorted(n1 + n2)), tuple(sorted(d1 + d2)))
                out[key] = out.get(key, Fraction(0)) + c1 * c2
        return FallingFactorialRational({k: v for k, v in out.items() if v})

    __rmul__ = __mul__

    def max_index(self) -> int:
        return max((k for (num, den) in self.terms for k in num + den), default=0)

    def evaluate(self, n: int) -> Fraction:
        """Term-by-term value; a term with a vanishing numerator contributes zero."""
        total = Fraction(0)
        for (num, den), c in self.terms.items():
            top = math.prod(falling(n, k) for k in num)
            if top == 0:
                continue
            bottom = math.prod(falling(n, k) for k in den)
            if bottom == 0:
                raise PreconditionError(f"denominator vanishes at n={n}")
            total += c * Fraction(top, bottom)
        return total

    def canonical(self) -> tuple[list[Fraction], list[Fraction]]:
        """Reduced ``(numerator, denominator)``; the denominator is monic.

        Each falling factorial is a product of ``(n - j)``; terms are put over
        the common denominator of linear factors, then common roots are
        cancelled.
        """
        if not self.terms:
            return [], [Fraction(1)]
        exps_per_term = []
        for (num, den), c in self.terms.items():
            e: Counter = Counter()
            for k in num:
                for j in range(k):
                    e[j] += 1
            for k in den:
                for j in range(k):
                    e[j] -= 1
            exps_per_term.append((c, e))
        common: Counter = Counter()
        for _, e in exps_per_term:
            for j, x in e.items():
                if x < 0:
                    common[j] = max(common[j], -x)
        numer: list[Fraction] = []
        for c, e in exps_per_term:
            p = [c]
            for j in set(e) | set(common):
                for _ in range(e.get(j, 0) + common.get(j, 0)):
                    p = poly_mul_linear(p, j)
            numer = poly_add(numer, p)
        denom = [Fraction(1)]
        for j, x in sorted(common.items()):
            for _ in range(x):
                if numer and poly_eval(numer, j) == 0:
                    numer = poly_div_linear(numer, j)
                else:
                    denom = poly_mul_linear(denom, j)
        return numer, denom

    def is_zero(self) -> bool:
        return not self.canonical()[0]

    def asymptotics(self) -> tuple[int, Fraction]:
        """``(degree, leading coefficient)`` of the rational function in ``n``."""
        num, den = self.canonical()
        if not num:
            raise PreconditionError("zero expression has no asymptotics")
        return len(num) - len(den), num[-1] / den[-1]

    def to_json(self) -> dict:
        num, den = self.canonical()
        return {
            "terms": [
                {"coef": str(c), "num": list(a), "den": list(b)}
                for (a, b), c in sorted(self.terms.items())
            ],
            "numerator": [str(c) for c in num],
            "denominator": [str(c) for c in den],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FallingFactorialRational":
        out = cls()
        for t in data["terms"]:
            out = out + cls.monomial(Fraction(t["coef"]), t["num"], t["den"])
        return out

    def __repr__(self):
        num, den = self.canonical()
        return f"FallingFactorialRational(num={[str(c) for c in num]}, den={[str(c) for c in den]})"


# ---------------------------------------------------------------------------
# lift counts


def lift_count(domain: BGraph, codomain: BGraph, eta: Morphism) -> FallingFactorialRational:
    """Average number of injective lifts of ``eta`` to a random ``n``-covering of the codomain."""
    if set(eta.vertex_map) != set(range(codomain.n)):
        raise PreconditionError("eta is not surjective on vertices")
    for b, lst in enumerate(codomain.edges):
        if set(eta.edge_map[b]) != set(range(len(lst))):
            raise PreconditionError("eta is not surjective on edges")
    vcount = Counter(eta.vertex_map)
    ecount = Counter((b, j) for b, em in enumerate(eta.edge_map) for j in em)
    return FallingFactorialRational.monomial(1, vcount.values(), ecount.values())


def lift_count_bruteforce(domain: BGraph, codomain: BGraph, eta: Morphism, n: int) -> Fraction:
    """Exact average over every ``n``-covering of the codomain (one permutation per edge)."""
    edges = codomain.edge_ids()
    perms = list(itertools.permutations(range(n)))
    if len(perms) ** len(edges) > 2_000_000:
        raise CapExceeded("too many coverings for brute force")
    total = 0
    for combo in itertools.product(perms, repeat=len(edges)):
        sigma = dict(zip(edges, combo))
        total += _count_injective_lifts(domain, eta, sigma, n)
    return Fraction(total, len(perms) ** len(edges))


def _count_injective_lifts(domain: BGraph, eta: Morphism, sigma, n: int) -> int:
    comps = domain.components()
    count = 0
    for starts in itertools.product(range(n), repeat=len(comps)):
        level: dict[int, int] = {}
        ok = True
        for comp, s0 in zip(comps, starts):
            level[comp[0]] = s0
            stack = [comp[0]]
            while stack and ok:
                v = stack.pop()
                for w, (b, i), d in domain.neighbours(v):
                    perm = sigma[(b, eta.edge_map[b][i])]
                    want = perm[level[v]] if d > 0 else perm.index(level[v])
                    if w in level:
                        if level[w] != want:
                            ok = False
                            break
                    else:
                        level[w] = want
                        stack.append(w)
            if not ok:
                break
        if ok and len({(eta.vertex_map[v], level[v]) for v in level}) == domain.n:
            count += 1
    return count


def decomp2(g: BGraph, separate: Sequence[Iterable[int]] = (), cap: int | None = 12) -> list[tuple[int, ...]]:
    """Classes of factorisations of the map to the bouquet, one per closed partition."""
    return list(closed_partitions(g, separate, cap=cap))


# ---------------------------------------------------------------------------
# the symbolic expectation


def _conjugate(beta: tuple, g: tuple) -> tuple:
    gi = [0] * len(g)
    for i, x in enumerate(g):
        gi[x] = i
    return tuple(tuple(g[p[gi[i]]] for i in range(len(g))) for p in beta)


def hom_orbit_representatives(group: Sequence[tuple], rank: int) -> list[tuple[tuple, int]]:
    """``Hom(F_rank, G)`` up to simultaneous conjugation by ``G``, with orbit sizes."""
    seen: set = set()
    reps = []
    for beta in itertools.product(group, repeat=rank):
        if beta in seen:
            continue
        orbit = {_conjugate(beta, g) for g in group}
        seen |= orbit
        reps.append((beta, len(orbit)))
    return reps


def letter_disjoint_factors(g: BGraph) -> list[BGraph]:
    """Split a basepointed graph at its basepoint into parts with disjoint letters.

    Pieces hanging off the basepoint are grouped by shared letters; each
    group becomes a basepointed graph over the full alphabet.
    """
    bp = g.basepoint
    if bp is None:
        raise PreconditionError("needs a basepoint")
    pieces: list[tuple[set[int], set[tuple[int, int]], set[int]]] = []
    seen = {bp}
    for start, _, _ in g.neighbours(bp):
        if start in seen:
            continue
        verts, stack = {start}, [start]
        seen.add(start)
        while stack:
            v = stack.pop()
            for w, _, _ in g.neighbours(v):
                if w != bp and w not in seen:
                    seen.add(w)
                    verts.add(w)
                    stack.append(w)
        edges = {
            (b, i)
            for b, lst in enumerate(g.edges)
            for i, (s, t) in enumerate(lst)
            if s in verts or t in verts
        }
        pieces.append((verts, edges, {b for b, _ in edges}))
    loops = {(b, i) for b, lst in enumerate(g.edges) for i, (s, t) in enumerate(lst) if s == t == bp}
    for e in loops:
        pieces.append((set(), {e}, {e[0]}))
    groups: list[tuple[set, set, set]] = []
    for verts, edges, letters in pieces:
        merged = (set(verts), set(edges), set(letters))
        rest = []
        for grp in groups:
            if grp[2] & merged[2]:
                merged = (merged[0] | grp[0], merged[1] | grp[1], merged[2] | grp[2])
            else:
                rest.append(grp)
        groups = rest + [merged]
    out = []
    for verts, edges, _ in sorted(groups, key=lambda x: sorted(x[1])):
        keep = sorted(verts | {bp})
        renum = {v: k for k, v in enumerate(keep)}
        new_edges = [
            [(renum[s], renum[t]) for i, (s, t) in enumerate(lst) if (b, i) in edges]
            for b, lst in enumerate(g.edges)
        ]
        out.append(BGraph(g.letters, len(keep), new_edges, renum[bp]))
    return out


def _check_caps(g: BGraph, d: int, caps: dict) -> None:
    if d > caps["d"]:
        raise CapExceeded(f"d = {d} exceeds cap {caps['d']}")
    r = g.rank()
    if r > caps["rank"]:
        raise CapExceeded(f"rank {r} exceeds cap {caps['rank']}")
    if len(g.letter_support()) > 1 and g.n * d > caps["vertices"]:
        raise CapExceeded(f"covering has {g.n * d} vertices, cap {caps['vertices']}")


def _direct_sum(g: BGraph, d: int, group: Sequence[tuple], caps: dict, reduce_conjugacy: bool = True) -> FallingFactorialRational:
    _check_caps(g, d, caps)
    tree = spanning_tree(g)
    rank = len(tree.non_tree_edges)
    nl = len(g.letters)
    if reduce_conjugacy:
        reps = hom_orbit_representatives(group, rank)
    else:
        reps = [(beta, 1) for beta in itertools.product(group, repeat=rank)]
    profiles: Counter = Counter()
    for beta, weight in reps:
        cov = covering_from_perms(g, beta, d, tree)
        total = cov.total
        fiber = cov.fiber(g.basepoint)
        cap = None if len(g.letter_support()) <= 1 else caps["vertices"]
        for labels in closed_partitions(total, [fiber], cap=cap):
            nv = max(labels) + 1
            ne = tuple(len({labels[s] for s, _ in lst}) for lst in total.edges)
            profiles[(nv, ne)] += weight
    expr = FallingFactorialRational()
    order = len(group)
    for (nv, ne), count in sorted(profiles.items()):
        expr = expr + FallingFactorialRational.monomial(Fraction(count, order), [nv], ne)
    return expr


def symmetric_group(d: int) -> list[tuple[int, ...]]:
    return list(itertools.permutations(range(d)))


def trivial_group(d: int) -> list[tuple[int, ...]]:
    return [tuple(range(d))]


def expected_fixed_subsets_symbolic(
    g: BGraph,
    d: int = 1,
    group: Sequence[tuple] | None = None,
    caps: dict | None = None,
    factorize: bool = True,
) -> FallingFactorialRational:
    """Expected number of ``alpha(H)``-fixed points of ``[n]_d / G`` as a function of ``n``.

    ``g`` is the basepointed Stallings graph of ``H``.  The default ``G`` is
    ``S_d`` (so the objects are ``d``-subsets).  When the graph splits at the
    basepoint into parts over disjoint letters, the parts are computed
    separately and combined by ``E = E_1 E_2 |G| / (n)_d``.
    """
    caps = {**DEFAULT_CAPS, **(caps or {})}
    if g.basepoint is None or not g.is_connected():
        raise PreconditionError("needs a connected basepointed graph")
    group = list(group) if group is not None else symmetric_group(d)
    if not group or any(len(p) != d for p in group):
        raise PreconditionError("group elements must be permutations of range(d)")
    if g.num_edges == 0:
        # trivial subgroup: every element of [n]_d / G is fixed
        return FallingFactorialRational.monomial(Fraction(1, len(group)), [d])
    parts = letter_disjoint_factors(g) if factorize else [g]
    exprs = [_direct_sum(p, d, group, caps) for p in parts]
    glue = FallingFactorialRational.monomial(len(group), [], [d])
    out = exprs[0]
    for e in exprs[1:]:
        out = out * e * glue
    return out


# ---------------------------------------------------------------------------
# brute force and Monte Carlo


def _invariant_count(images: list[tuple[int, ...]], n: int, d: int, group: Sequence[tuple] | None) -> int:
    """Number of ``[n]_d / G`` points fixed by every permutation in ``images``."""
    if group is None or len(group) == math.factorial(d):
        sizes = _orbit_sizes(images, n)
        return _subset_sum_count(sizes, d)
    if len(group) == 1:
        fixed = sum(1 for x in range(n) if all(p[x] == x for p in images))
        return falling(fixed, d)
    gset = set(group)
    count = 0
    for t in itertools.permutations(range(n), d):
        pos = {x: i for i, x in enumerate(t)}
        ok = True
        for p in images:
            moved = [pos.get(p[x]) for x in t]
            if None in moved or tuple(moved) not in gset:
                ok = False
                break
        if ok:
            count += 1
    return count // len(group)


def _orbit_sizes(images: list[tuple[int, ...]], n: int) -> list[int]:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in images:
        for x in range(n):
            a, b = find(x), find(p[x])
            if a != b:
                parent[a] = b
    return list(Counter(find(x) for x in range(n)).values())


def _subset_sum_count(sizes: list[int], d: int) -> int:
    ways = [1] + [0] * d
    for s in sizes:
        for t in range(d, s - 1, -1):
            ways[t] += ways[t - s]
    return ways[d]


def _word_image(alpha: Sequence[tuple[int, ...]], word, n: int) -> tuple[int, ...]:
    out = list(range(n))
    inv_cache: dict[int, list[int]] = {}
    for b, s in word:
        p = alpha[b]
        if s < 0:
            if b not in inv_cache:
                q = [0] * n
                for i, x in enumerate(p):
                    q[x] = i
                inv_cache[b] = q
            p = inv_cache[b]
        out = [p[x] for x in out]
    return tuple(out)


def expected_fixed_bruteforce(g: BGraph, n: int, d: int = 1, group: Sequence[tuple] | None = None, cap: int = 3_000_000) -> Fraction:
    """Exact average over all of ``S_n`` per used letter, straight from the definition."""
    words = basis_words(g)
    used = sorted(g.letter_support())
    perms = list(itertools.permutations(range(n)))
    total_assignments = len(perms) ** len(used)
    if total_assignments > cap:
        raise CapExceeded(f"{total_assignments} assignments exceed cap {cap}")
    if group is not None and len(group) == math.factorial(d):
        group = None
    total = 0
    alpha: list = [tuple(range(n))] * len(g.letters)
    for combo in itertools.product(perms, repeat=len(used)):
        for b, p in zip(used, combo):
            alpha[b] = p
        images = [_word_image(alpha, w, n) for w in words]
        total += _invariant_count(images, n, d, group)
    return Fraction(total, total_assignments)


@dataclass
class MonteCarloEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int


def monte_carlo_check(g: BGraph, d: int, n: int, samples: int, seed: int = 0, group: Sequence[tuple] | None = None) -> MonteCarloEstimate:
    rng = random.Random(f"{seed}:monte-carlo:{n}:{d}")
    words = basis_words(g)
    used = sorted(g.letter_support())
    values = []
    alpha: list = [tuple(range(n))] * len(g.letters)
    for _ in range(samples):
        for b in used:
            p = list(range(n))
            rng.shuffle(p)
            alpha[b] = tuple(p)
        images = [_word_image(alpha, w, n) for w in words]
        values.append(_invariant_count(images, n, d, group))
    mean = sum(values) / samples
    var = sum((v - mean) ** 2 for v in values) / max(1, samples - 1)
    return MonteCarloEstimate(mean, math.sqrt(var / samples), samples, seed)


def covering_from_rep(g: BGraph, beta: Sequence[Sequence[int]]) -> Covering:
    """Numbered covering with monodromy ``beta`` along the spanning-tree basis."""
    d = len(beta[0]) if beta else 1
    return covering_from_perms(g, beta, d)


def binomial_inverse_forms(n: int, d: int) -> dict[str, Fraction]:
    """Closed forms used as reference values for ``d``-subset expectations."""
    c = Fraction(1, math.comb(n, d))
    eps = sum(Fraction(1, math.comb(n, k) - math.comb(n, k - 1)) for k in range(1, d + 1))
    return {"inverse": c, "d_plus_one": (d + 1) * c, "one_plus_eps": (1 + eps) * c}
