"""Finite permutation actions and the equation systems a core graph defines.

A pair ``(graph, f)`` with ``f`` a point per vertex asks for an assignment of
group elements to letters carrying ``f(source)`` to ``f(target)`` along every
edge.  Elements act on the right when words are read, matching the way paths
are read in a graph.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .bgraph import BGraph, Word, basis_words, is_proper_power
from .errors import CapExceeded, PreconditionError, TheoremViolation
from .polymatroid import GammaPolymatroid, LogRational, Polymatroid, bits, is_compact

GROUP_CAP = 100_000
ASSIGNMENT_CAP = 100_000_000

Perm = tuple[int, ...]


def compose(p: Perm, q: Perm) -> Perm:
    """First ``p`` then ``q``: ``x -> q[p[x]]``."""
    return tuple(q[x] for x in p)


def invert(p: Perm) -> Perm:
    out = [0] * len(p)
    for i, x in enumerate(p):
        out[x] = i
    return tuple(out)


def closure(generators: Sequence[Perm], degree: int, cap: int = GROUP_CAP) -> list[Perm]:
    ident = tuple(range(degree))
    seen = {ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for g in frontier:
            for s in generators:
                h = compose(g, s)
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
                    if len(seen) > cap:
                        raise CapExceeded(f"group order exceeds {cap}")
        frontier = nxt
    return sorted(seen)


class FiniteAction:
    """A finite group given by its (faithful) permutation image on ``range(degree)``."""

    def __init__(self, elements: Iterable[Perm], degree: int, name: str = "", point_labels=None):
        self.elements = list(elements)
        self.degree = degree
        self.name = name
        self.point_labels = point_labels or list(range(degree))
        if len(self.elements) > GROUP_CAP:
            raise CapExceeded(f"group order exceeds {GROUP_CAP}")
        self.index = {g: i for i, g in enumerate(self.elements)}
        self._stab: dict[int, frozenset[int]] = {}

    @property
    def order(self) -> int:
        return len(self.elements)

    def stabilizer(self, x: int) -> frozenset[int]:
        if x not in self._stab:
            self._stab[x] = frozenset(i for i, g in enumerate(self.elements) if g[x] == x)
        return self._stab[x]

    def is_transitive(self) -> bool:
        return len({g[0] for g in self.elements}) == self.degree

    def __repr__(self):
        return f"FiniteAction({self.name or 'explicit'}, |G|={self.order}, |X|={self.degree})"

    # -- constructors --------------------------------------------------------
    @classmethod
    def symmetric(cls, n: int) -> "FiniteAction":
        if math.factorial(n) > GROUP_CAP:
            raise CapExceeded(f"|S_{n}| exceeds {GROUP_CAP}")
        return cls(itertools.permutations(range(n)), n, f"S{n}")

    @classmethod
    def explicit(cls, degree: int, generators: Sequence[Sequence[int]]) -> "FiniteAction":
        gens = [tuple(g) for g in generators]
        for g in gens:
            if sorted(g) != list(range(degree)):
                raise PreconditionError(f"{g} is not a permutation of {degree} points")
        return cls(closure(gens, degree), degree, "explicit")

    @classmethod
    def subsets(cls, n: int, d: int) -> "FiniteAction":
        """``S_n`` acting on ``d``-subsets of ``{0..n-1}``."""
        if math.factorial(n) > GROUP_CAP:
            raise CapExceeded(f"|S_{n}| exceeds {GROUP_CAP}")
        pts = list(itertools.combinations(range(n), d))
        idx = {p: i for i, p in enumerate(pts)}
        elems = []
        for sigma in itertools.permutations(range(n)):
            elems.append(tuple(idx[tuple(sorted(sigma[x] for x in p))] for p in pts))
        return cls(elems, len(pts), f"S{n} on {d}-subsets", pts)

    @classmethod
    def gl(cls, n: int, q: int) -> "FiniteAction":
        """``GL_n(F_q)`` on nonzero row vectors, ``v -> v A``, for prime ``q``."""
        if not _is_prime(q):
            raise PreconditionError("gl action is implemented for prime q")
        vecs = [v for v in itertools.product(range(q), repeat=n) if any(v)]
        idx = {v: i for i, v in enumerate(vecs)}
        elems = []
        for entries in itertools.product(range(q), repeat=n * n):
            rows = [entries[i * n : (i + 1) * n] for i in range(n)]
            img = []
            for v in vecs:
                w = tuple(sum(v[i] * rows[i][j] for i in range(n)) % q for j in range(n))
                img.append(w)
            if all(any(w) for w in img) and len(set(img)) == len(img):
                elems.append(tuple(idx[w] for w in img))
            if len(elems) > GROUP_CAP:
                raise CapExceeded(f"|GL_{n}(F_{q})| exceeds {GROUP_CAP}")
        return cls(elems, len(vecs), f"GL{n}(F{q})", vecs)

    @classmethod
    def from_json(cls, data: dict) -> "FiniteAction":
        kind = data.get("kind")
        if kind == "symmetric":
            return cls.symmetric(int(data["n"]))
        if kind == "gl":
            return cls.gl(int(data["n"]), int(data["q"]))
        if kind == "subsets":
            return cls.subsets(int(data["n"]), int(data["d"]))
        if kind == "explicit":
            return cls.explicit(int(data["points"]), data["generators"])
        raise PreconditionError(f"unknown action kind {kind!r}")


def _is_prime(q: int) -> bool:
    return q >= 2 and all(q % k for k in range(2, int(q**0.5) + 1))


# ---------------------------------------------------------------------------
# equation systems


@dataclass
class EquationSystem:
    graph: BGraph
    f: tuple[int, ...]

    def __post_init__(self):
        if len(self.f) != self.graph.n:
            raise PreconditionError("f must give a point for every vertex")


def act_word(alpha: Sequence[Perm], word: Word, x: int) -> int:
    for b, s in word:
        p = alpha[b]
        x = p[x] if s > 0 else p.index(x)
    return x


def is_valid(system: EquationSystem, alpha: Sequence[Perm]) -> bool:
    f = system.f
    return all(alpha[b][f[s]] == f[t] for b, lst in enumerate(system.graph.edges) for s, t in lst)


def letter_solution_counts(system: EquationSystem, action: FiniteAction) -> list[int]:
    """For each letter, how many group elements satisfy all of its edges."""
    f = system.f
    out = []
    for lst in system.graph.edges:
        pairs = [(f[s], f[t]) for s, t in lst]
        out.append(sum(1 for g in action.elements if all(g[a] == c for a, c in pairs)))
    return out


def satisfaction_probability(system: EquationSystem, action: FiniteAction, method: str = "factor") -> Fraction:
    """Probability that independent uniform elements per letter solve the system.

    ``"factor"`` uses independence across letters; ``"enumerate"`` walks all
    of ``G^B`` and is capped.
    """
    nl = len(system.graph.letters)
    if action.order > GROUP_CAP:
        raise CapExceeded("group too large")
    if method == "factor":
        counts = letter_solution_counts(system, action)
        return math.prod((Fraction(c, action.order) for c in counts), start=Fraction(1))
    if method == "enumerate":
        if action.order**nl > ASSIGNMENT_CAP:
            raise CapExceeded(f"|G|^|B| = {action.order ** nl} exceeds {ASSIGNMENT_CAP}")
        hits = sum(1 for alpha in itertools.product(action.elements, repeat=nl) if is_valid(system, alpha))
        return Fraction(hits, action.order**nl)
    raise PreconditionError(f"unknown method {method!r}")


def _stab_of_set(action: FiniteAction, points: Iterable[int]) -> frozenset[int]:
    s = frozenset(range(action.order))
    for x in points:
        s = s & action.stabilizer(x)
    return s


def orbit_size(system: EquationSystem, action: FiniteAction) -> int:
    """Size of the orbit of ``f`` under the diagonal action: ``|G| / |common stabilizer|``."""
    return action.order // len(_stab_of_set(action, system.f))


def locally_recoverable(system: EquationSystem, action: FiniteAction) -> bool:
    """Each ``f(v)`` is pinned down by the values at the other vertices.

    Precisely: the stabilizer of ``f(v)`` contains the common stabilizer of
    the remaining values, with the empty intersection taken to be ``G``.
    """
    f = system.f
    for v in range(len(f)):
        others = _stab_of_set(action, (f[u] for u in range(len(f)) if u != v))
        if not others <= action.stabilizer(f[v]):
            return False
    return True


def action_polymatroid(system: EquationSystem, action: FiniteAction) -> GammaPolymatroid:
    """Log-index polymatroids of common stabilizers, on vertices and on each letter.

    The letter polymatroid of ``U`` uses the points at the sources of ``U``.
    Values are exact :class:`LogRational` numbers.
    """
    g = system.graph
    f = system.f

    def table(points: Sequence[int]) -> Polymatroid:
        n = len(points)
        stabs = [frozenset(range(action.order))] * (1 << n)
        for m in range(1, 1 << n):
            low = m & -m
            stabs[m] = stabs[m ^ low] & action.stabilizer(points[low.bit_length() - 1])
        return Polymatroid(n, [LogRational(Fraction(action.order, len(s))) for s in stabs])

    vertex = table(list(f))
    letters = [table([f[s] for s, _ in lst]) for lst in g.edges]
    return GammaPolymatroid(g, vertex, letters)


def reiter_verify(system: EquationSystem, action: FiniteAction) -> dict:
    """Check ``|O(f)| * Pr[valid] <= 1/|X|`` where the hypotheses hold.

    The bound is asserted when the fundamental group has rank above one, or
    when the graph is the cycle of a non-power word and ``f`` is locally
    recoverable.  The weaker ``|X|^chi`` bound is asserted whenever
    ``chi >= 0``, and the older square-root bound is reported.  Intransitive
    actions and unmet hypotheses are reported, not rejected.  Local
    recoverability must agree with compactness of the vertex polymatroid.
    """
    g = system.graph
    if not g.is_connected() or not g.is_core():
        raise PreconditionError("needs a connected core graph")
    prob = satisfaction_probability(system, action)
    if action.order ** len(g.letters) <= 10**6:
        if satisfaction_probability(system, action, "enumerate") != prob:
            raise TheoremViolation("factorised and enumerated probabilities differ")
    orbit = orbit_size(system, action)
    p = orbit * prob
    size = action.degree
    rank = g.rank()
    lr = locally_recoverable(system, action)
    nonpower_cycle = False
    if rank == 1 and all(g.degree(v) == 2 for v in range(g.n)):
        nonpower_cycle = not is_proper_power(_cycle_word(g))
    hypothesis = rank > 1 or (nonpower_cycle and lr)
    chi = g.euler_char()
    gp = action_polymatroid(system, action)
    compact = is_compact(gp.vertex)
    rep = {
        "probability": prob,
        "orbit": orbit,
        "p": p,
        "transitive": action.is_transitive(),
        "hypothesis": hypothesis,
        "bound_holds": p <= Fraction(1, size),
        "weak_bound_holds": None if chi < 0 else p <= Fraction(size) ** chi,
        "sqrt_bound_holds": p * p <= Fraction(1, size),
        "locally_recoverable": lr,
        "compact": compact,
    }
    if hypothesis and rep["transitive"] and not rep["bound_holds"]:
        raise TheoremViolation(f"|O(f)| Pr = {p} exceeds 1/{size}")
    if rep["weak_bound_holds"] is False:
        raise TheoremViolation(f"|O(f)| Pr = {p} exceeds |X|^chi")
    if lr != compact:
        raise TheoremViolation("locally recoverable and compact disagree")
    return rep


def _cycle_word(g: BGraph) -> Word:
    word = []
    v, used = 0, None
    for _ in range(g.num_edges):
        for w, eid, d in g.neighbours(v):
            if eid != used:
                word.append((eid[0], d))
                used, v = eid, w
                break
    return tuple(word)


def all_point_maps(g: BGraph, action: FiniteAction, cap: int = 10**6) -> Iterable[tuple[int, ...]]:
    total = action.degree**g.n
    if total > cap:
        raise CapExceeded(f"{total} maps exceed cap {cap}")
    return itertools.product(range(action.degree), repeat=g.n)


def orbit_representatives(g: BGraph, action: FiniteAction, cap: int = 10**6) -> list[tuple[tuple[int, ...], int]]:
    """One ``f`` per diagonal orbit, with the orbit size."""
    seen: set[tuple[int, ...]] = set()
    reps = []
    for f in all_point_maps(g, action, cap):
        if f in seen:
            continue
        orb = {tuple(el[x] for x in f) for el in action.elements}
        seen |= orb
        reps.append((f, len(orb)))
    return reps


def expected_fixed_points_bruteforce(g: BGraph, action: FiniteAction) -> Fraction:
    """Expected number of points fixed by the whole subgroup, two ways.

    Route one enumerates assignments ``alpha`` and counts points fixed by every
    basis loop.  Route two sums ``Pr[f valid]`` over all maps ``f`` (equivalently
    over orbit representatives weighted by orbit size).  They must agree.
    """
    if g.basepoint is None:
        raise PreconditionError("needs a basepointed graph")
    nl = len(g.letters)
    if action.order**nl > ASSIGNMENT_CAP // 100:
        raise CapExceeded("too many assignments")
    words = basis_words(g)
    total = 0
    for alpha in itertools.product(action.elements, repeat=nl):
        total += sum(1 for x in range(action.degree) if all(act_word(alpha, w, x) == x for w in words))
    route_alpha = Fraction(total, action.order**nl)
    route_f = Fraction(0)
    cache: dict = {}
    for f, size in orbit_representatives(g, action):
        sys = EquationSystem(g, f)
        key = tuple(tuple(sorted((f[s], f[t]) for s, t in lst)) for lst in g.edges)
        if key not in cache:
            cache[key] = satisfaction_probability(sys, action)
        route_f += size * cache[key]
    if route_alpha != route_f:
        raise TheoremViolation(f"fixed point routes disagree: {route_alpha} vs {route_f}")
    return route_alpha


def small_core_graphs(letters: Sequence[str], max_vertices: int = 3) -> list[BGraph]:
    """All connected core graphs with at most ``max_vertices`` vertices.

    Generated from every tuple of partial injections and deduplicated by
    canonical key.
    """
    out: dict = {}
    for n in range(1, max_vertices + 1):
        per_letter = _partial_injections(n)
        for combo in itertools.product(per_letter, repeat=len(letters)):
            if not any(combo):
                continue
            g = BGraph(letters, n, [list(c) for c in combo])
            if not g.is_connected() or not g.is_core():
                continue
            key = g.canonical_key(basepointed=False)
            out.setdefault(key, g)
    return list(out.values())


def _partial_injections(n: int) -> list[tuple[tuple[int, int], ...]]:
    out = []
    for k in range(n + 1):
        for srcs in itertools.combinations(range(n), k):
            for tgts in itertools.permutations(range(n), k):
                out.append(tuple(zip(srcs, tgts)))
    return out
