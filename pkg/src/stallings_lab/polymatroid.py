"""Polymatroids on small ground sets and their graph-indexed families.

A polymatroid is stored as a table indexed by bitmask.  Values are either
:class:`fractions.Fraction` or :class:`LogRational`.  The second type keeps
logarithms of group indices exact, so Euler characteristics and gap
certificates of action polymatroids are compared without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .bgraph import BGraph, Pullback, SubCovering, is_proper_power, pullback
from .errors import CapExceeded, PreconditionError, TheoremViolation

GROUND_CAP = 20


class LogRational:
    """The real number ``log(arg) / root`` for a positive rational ``arg``."""

    __slots__ = ("arg", "root")

    def __init__(self, arg, root: int = 1):
        arg = Fraction(arg)
        if arg <= 0 or root <= 0:
            raise PreconditionError("LogRational needs a positive argument and root")
        self.arg = arg
        self.root = int(root)

    def _pair(self, other: "LogRational") -> tuple[Fraction, Fraction]:
        return self.arg ** other.root, other.arg ** self.root

    def __add__(self, other):
        if other == 0:
            return self
        return LogRational(self.arg ** other.root * other.arg ** self.root, self.root * other.root)

    __radd__ = __add__

    def __neg__(self):
        return LogRational(1 / self.arg, self.root)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "LogRational":
        c = Fraction(c)
        if c < 0:
            return (-self).scale(-c)
        if c == 0:
            return LogRational(1)
        return LogRational(self.arg ** c.numerator, self.root * c.denominator)

    def _cmp(self, other) -> int:
        if isinstance(other, (int, Fraction)) and other == 0:
            other = LogRational(1)
        a, b = self._pair(other)
        return (a > b) - (a < b)

    def __eq__(self, other):
        if not isinstance(other, (LogRational, int, Fraction)):
            return NotImplemented
        return self._cmp(other) == 0

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    __hash__ = None

    def __float__(self):
        return (math.log(self.arg.numerator) - math.log(self.arg.denominator)) / self.root

    def __repr__(self):
        return f"log({self.arg})" if self.root == 1 else f"log({self.arg})/{self.root}"


def _zero_like(value):
    return LogRational(1) if isinstance(value, LogRational) else Fraction(0)


def bits(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def to_mask(elements: Iterable[int]) -> int:
    m = 0
    for e in elements:
        m |= 1 << e
    return m


@dataclass
class Violation:
    kind: str
    first: int
    second: int = 0

    def describe(self) -> str:
        return f"{self.kind} fails at {bits(self.first)} / {bits(self.second)}"


@dataclass
class Report:
    ok: bool
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self):
        return self.ok


class Polymatroid:
    """A set function ``h`` on subsets of ``{0, ..., n-1}``."""

    def __init__(self, n: int, values: Sequence):
        if n > GROUND_CAP:
            raise CapExceeded(f"ground set of size {n} exceeds cap {GROUND_CAP}")
        if len(values) != 1 << n:
            raise PreconditionError("need one value per subset")
        self.n = n
        self.values = list(values)

    @classmethod
    def from_function(cls, n: int, fn: Callable[[int], object]) -> "Polymatroid":
        if n > GROUND_CAP:
            raise CapExceeded(f"ground set of size {n} exceeds cap {GROUND_CAP}")
        return cls(n, [fn(m) for m in range(1 << n)])

    @property
    def full(self) -> int:
        return (1 << self.n) - 1

    def __call__(self, subset) -> object:
        if isinstance(subset, int):
            return self.values[subset]
        return self.values[to_mask(subset)]

    @property
    def zero(self):
        return _zero_like(self.values[0])

    @property
    def is_log(self) -> bool:
        return isinstance(self.values[0], LogRational)

    def __eq__(self, other):
        return isinstance(other, Polymatroid) and self.n == other.n and all(
            a == b for a, b in zip(self.values, other.values)
        )

    def to_json(self) -> dict:
        vals = {}
        for m, v in enumerate(self.values):
            key = str(m)
            if isinstance(v, LogRational):
                vals[key] = f"log:{v.arg}" + (f":{v.root}" if v.root != 1 else "")
            else:
                vals[key] = str(v)
        return {"ground": self.n, "values": vals}

    @classmethod
    def from_json(cls, data: dict) -> "Polymatroid":
        n = int(data["ground"])
        if n > GROUND_CAP:
            raise CapExceeded(f"ground set of size {n} exceeds cap {GROUND_CAP}")
        raw = data["values"]
        values = []
        for m in range(1 << n):
            v = raw.get(str(m), raw.get(m))
            if v is None:
                raise PreconditionError(f"missing value for subset mask {m}")
            if isinstance(v, str) and v.startswith("log:"):
                arg, _, root = v[4:].partition(":")
                values.append(LogRational(Fraction(arg), int(root or 1)))
            else:
                values.append(Fraction(v))
        return cls(n, values)


def check_polymatroid(p: Polymatroid, exhaustive: bool = False) -> Report:
    """Normalised, monotone and submodular.

    Submodularity is checked through the local exchange inequality
    ``h(A+i) + h(A+j) >= h(A+i+j) + h(A)``, which is equivalent to the
    global one.  ``exhaustive`` also runs the global pairwise check.
    """
    v = p.values
    violations: list[Violation] = []
    if v[0] != p.zero:
        violations.append(Violation("normalisation", 0))
    n = p.n
    for a in range(1 << n):
        for i in range(n):
            bi = 1 << i
            if a & bi:
                continue
            if v[a | bi] < v[a]:
                violations.append(Violation("monotonicity", a, a | bi))
                return Report(False, violations)
            for j in range(i + 1, n):
                bj = 1 << j
                if a & bj:
                    continue
                if v[a | bi] + v[a | bj] < v[a | bi | bj] + v[a]:
                    violations.append(Violation("submodularity", a | bi, a | bj))
                    return Report(False, violations)
    if exhaustive:
        for a in range(1 << n):
            for b in range(1 << n):
                if v[a] + v[b] < v[a | b] + v[a & b]:
                    violations.append(Violation("submodularity", a, b))
                    return Report(False, violations)
    return Report(not violations, violations)


def check_morphism(p1: Polymatroid, p2: Polymatroid, phi: Sequence[int]) -> Report:
    """``p1(U') - p1(U) >= p2(phi U') - p2(phi U)`` for all ``U <= U'``.

    The single-element case implies the general one by telescoping, so only
    that case is tested.
    """
    n = p1.n
    if len(phi) != n:
        raise PreconditionError("phi must map every ground element")
    image = [0] * (1 << n)
    for m in range(1, 1 << n):
        low = m & -m
        image[m] = image[m ^ low] | (1 << phi[low.bit_length() - 1])
    for a in range(1 << n):
        for i in range(n):
            bi = 1 << i
            if a & bi:
                continue
            lhs = p1.values[a | bi] - p1.values[a]
            rhs = p2.values[image[a | bi]] - p2.values[image[a]]
            if lhs < rhs:
                return Report(False, [Violation("morphism", a, a | bi)])
    return Report(True)


def contraction(p: Polymatroid, t) -> Polymatroid:
    """``U -> h(U | T) - h(T)`` on the same ground set."""
    tm = t if isinstance(t, int) else to_mask(t)
    return Polymatroid(p.n, [p.values[m | tm] - p.values[tm] for m in range(1 << p.n)])


def marginal_gains(p: Polymatroid, order: Sequence[int]) -> list:
    """``delta[v] = h(prefix + v) - h(prefix)`` along ``order`` (indexed by element)."""
    if sorted(order) != list(range(p.n)):
        raise PreconditionError("order must be a permutation of the ground set")
    out = [None] * p.n
    prefix = 0
    for v in order:
        out[v] = p.values[prefix | (1 << v)] - p.values[prefix]
        prefix |= 1 << v
    return out


def is_compact(p: Polymatroid) -> bool:
    full = p.full
    return all(p.values[full ^ (1 << v)] == p.values[full] for v in range(p.n))


def shearer_check(p: Polymatroid, weights: dict[int, Fraction]):
    """Shearer-type bound ``sum lambda(U) h(U) >= h(V)`` for a fractional cover.

    Returns the slack.  Raises when ``weights`` does not cover every element
    with total weight at least one, or when the inequality fails.
    """
    for v in range(p.n):
        cover = sum((Fraction(w) for m, w in weights.items() if m >> v & 1), Fraction(0))
        if cover < 1:
            raise PreconditionError(f"element {v} is covered with weight {cover} < 1")
    if any(Fraction(w) < 0 for w in weights.values()):
        raise PreconditionError("weights must be non-negative")
    total = p.zero
    for m, w in weights.items():
        val = p.values[m]
        total = total + (val.scale(w) if isinstance(val, LogRational) else Fraction(w) * val)
    slack = total - p.values[p.full]
    if slack < p.zero:
        raise TheoremViolation(f"Shearer inequality fails with slack {slack}")
    return slack


# ---------------------------------------------------------------------------
# graph-indexed families


@dataclass
class GammaPolymatroid:
    """A polymatroid on the vertices and one on each letter's edges of a graph."""

    graph: BGraph
    vertex: Polymatroid
    letters: list[Polymatroid]

    def __post_init__(self):
        if self.vertex.n != self.graph.n:
            raise PreconditionError("vertex polymatroid has the wrong ground size")
        for b, pb in enumerate(self.letters):
            if pb.n != len(self.graph.edges[b]):
                raise PreconditionError(f"letter {self.graph.letters[b]} polymatroid has wrong ground size")

    def chi(self):
        total = self.vertex.values[self.vertex.full]
        for pb in self.letters:
            total = total - pb.values[pb.full]
        return total

    def zero(self):
        return self.vertex.zero

    def check(self) -> Report:
        violations: list[Violation] = []
        for p in [self.vertex, *self.letters]:
            rep = check_polymatroid(p)
            violations.extend(rep.violations)
        violations.extend(self.morphism_report().violations)
        return Report(not violations, violations)

    def morphism_report(self) -> Report:
        violations: list[Violation] = []
        for b, pb in enumerate(self.letters):
            srcs = [s for s, _ in self.graph.edges[b]]
            tgts = [t for _, t in self.graph.edges[b]]
            for phi in (srcs, tgts):
                violations.extend(check_morphism(pb, self.vertex, phi).violations)
        return Report(not violations, violations)

    def is_lossless(self) -> bool:
        """Each letter polymatroid is recovered from the vertex one via sources and targets."""
        for b, pb in enumerate(self.letters):
            lst = self.graph.edges[b]
            for m in range(1 << pb.n):
                src = to_mask(lst[i][0] for i in bits(m))
                tgt = to_mask(lst[i][1] for i in bits(m))
                if not (pb.values[m] == self.vertex.values[src] == self.vertex.values[tgt]):
                    return False
        return True

    def is_compact(self) -> bool:
        """Vertex and every letter polymatroid have no co-loops."""
        return is_compact(self.vertex) and all(is_compact(p) for p in self.letters)


def gamma_chi(gp: GammaPolymatroid):
    return gp.chi()


def pullback_polymatroid(graph: BGraph, vmap: Sequence[int], emaps: Sequence[Sequence[int]], gp: GammaPolymatroid) -> GammaPolymatroid:
    """Pull ``gp`` back along a graph morphism ``graph -> gp.graph``."""
    def induced(p: Polymatroid, n: int, phi: Sequence[int]) -> Polymatroid:
        img = [0] * (1 << n)
        for m in range(1, 1 << n):
            low = m & -m
            img[m] = img[m ^ low] | (1 << phi[low.bit_length() - 1])
        return Polymatroid(n, [p.values[img[m]] for m in range(1 << n)])

    vertex = induced(gp.vertex, graph.n, vmap)
    letters = [induced(gp.letters[b], len(graph.edges[b]), emaps[b]) for b in range(len(graph.letters))]
    return GammaPolymatroid(graph, vertex, letters)


def restrict_pullback(pb: Pullback, vertices) -> Pullback:
    """The full subgraph of ``pb`` on ``vertices``, with projections carried along."""
    sub, vmap, emaps = pb.graph.induced(vertices)
    left_v = [0] * sub.n
    right_v = [0] * sub.n
    for old, new in vmap.items():
        left_v[new] = pb.left_vertex[old]
        right_v[new] = pb.right_vertex[old]
    left_e = [[0] * len(lst) for lst in sub.edges]
    right_e = [[0] * len(lst) for lst in sub.edges]
    for b, em in enumerate(emaps):
        for old, new in em.items():
            left_e[b][new] = pb.left_edge[b][old]
            right_e[b][new] = pb.right_edge[b][old]
    return Pullback(sub, left_v, right_v, left_e, right_e)


def image_polymatroid(g: BGraph, delta: BGraph, pb: Pullback | None = None) -> GammaPolymatroid:
    """Size of the image in ``delta`` of the part of the pullback over a subset of ``g``.

    This is a Γ-polymatroid only when every pullback vertex over ``s(e)``
    (and ``t(e)``) has an edge over ``e``, for instance when the pullback is
    restricted to a covering of ``g``; see :func:`covering_image_polymatroid`.
    """
    if g.n > GROUND_CAP or any(len(l) > GROUND_CAP for l in g.edges):
        raise CapExceeded("ground set too large")
    pb = pb or pullback(g, delta)
    p = pb.graph
    vsets = [0] * g.n
    for x in range(p.n):
        vsets[pb.left_vertex[x]] |= 1 << pb.right_vertex[x]
    vertex = _union_size_table(vsets)
    letters = []
    for b in range(len(g.letters)):
        esets = [0] * len(g.edges[b])
        for j in range(len(p.edges[b])):
            esets[pb.left_edge[b][j]] |= 1 << pb.right_edge[b][j]
        letters.append(_union_size_table(esets))
    return GammaPolymatroid(g, vertex, letters)


def covering_image_polymatroid(g: BGraph, delta: BGraph, sub: SubCovering) -> GammaPolymatroid:
    """Image polymatroid of the covering ``sub`` found inside the pullback of ``g`` and ``delta``."""
    pb = pullback(g, delta)
    verts = sorted(set().union(*(set(c) for c in sub.components)))
    return image_polymatroid(g, delta, restrict_pullback(pb, verts))


def _union_size_table(sets: Sequence[int]) -> Polymatroid:
    n = len(sets)
    unions = [0] * (1 << n)
    for m in range(1, 1 << n):
        low = m & -m
        unions[m] = unions[m ^ low] | sets[low.bit_length() - 1]
    return Polymatroid(n, [Fraction(bin(u).count("1")) for u in unions])


# ---------------------------------------------------------------------------
# gap certificates and tree bounds


def is_cycle_graph(g: BGraph) -> bool:
    return g.is_connected() and g.n == g.num_edges and all(g.degree(v) == 2 for v in range(g.n))


def cycle_word(g: BGraph):
    """The cyclic word read around a cycle graph, starting at vertex 0."""
    if not is_cycle_graph(g):
        raise PreconditionError("not a cycle graph")
    word = []
    v, used = 0, None
    for _ in range(g.num_edges):
        for w, eid, d in g.neighbours(v):
            if eid != used:
                word.append((eid[0], d))
                used, v = eid, w
                break
    return tuple(word)


@dataclass
class GapCertificate:
    letter: int
    edge: int
    chi: object
    edge_value: object


def verify_gap_certificate(gp: GammaPolymatroid, mode: str = "nonabelian") -> GapCertificate:
    """Find the first edge ``e`` (letter order, then edge order) with ``chi <= -h_b({e})``.

    ``mode`` is ``"nonabelian"`` (connected graph of rank at least two) or
    ``"nonpower"`` (cycle graph of a non-power word, every polymatroid compact).
    """
    g = gp.graph
    if not g.is_connected():
        raise PreconditionError("graph must be connected")
    report = gp.check()
    if not report.ok:
        raise PreconditionError(f"not a Γ-polymatroid: {report.violations[0].describe()}")
    if mode == "nonabelian":
        if g.rank() <= 1:
            raise PreconditionError("needs rank at least two")
    elif mode == "nonpower":
        if not is_cycle_graph(g) or is_proper_power(cycle_word(g)):
            raise PreconditionError("needs the cycle graph of a non-power word")
        if not gp.is_compact():
            raise PreconditionError("polymatroids must be compact")
    else:
        raise PreconditionError(f"unknown mode {mode!r}")
    chi = gp.chi()
    for b, pb in enumerate(gp.letters):
        for i in range(pb.n):
            val = pb.values[1 << i]
            if chi + val <= pb.zero:
                return GapCertificate(b, i, chi, val)
    raise TheoremViolation(f"no edge certifies the gap (chi = {chi})")


def tree_bound(gp: GammaPolymatroid, heights: Sequence[int], tree: Iterable[tuple[int, int]]):
    """``min_v dV_v - sum over non-tree edges of d_e`` for a stacking and spanning tree.

    Marginal gains follow the stacking order on vertices and, inside each
    letter, the order of edges by source height.  Raises if the bound does
    not dominate ``chi``.
    """
    from .stacking import is_stacking

    g = gp.graph
    if not is_stacking(g, heights):
        raise PreconditionError("heights do not define a stacking")
    tree = set(tree)
    if len(tree) != g.n - 1 or not _spans(g, tree):
        raise PreconditionError("not a spanning tree")
    vorder = sorted(range(g.n), key=lambda v: heights[v])
    dv = marginal_gains(gp.vertex, vorder)
    total = gp.zero()
    for b, pb in enumerate(gp.letters):
        eorder = sorted(range(pb.n), key=lambda i: heights[g.edges[b][i][0]])
        de = marginal_gains(pb, eorder)
        for i in range(pb.n):
            if (b, i) not in tree:
                total = total + de[i]
    bound = min(dv) - total
    chi = gp.chi()
    if chi > bound:
        raise TheoremViolation(f"chi = {chi} exceeds tree bound {bound}")
    return bound


def _spans(g: BGraph, tree: set[tuple[int, int]]) -> bool:
    parent = list(range(g.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for b, i in tree:
        if not (0 <= b < len(g.edges) and 0 <= i < len(g.edges[b])):
            return False
        s, t = g.edges[b][i]
        rs, rt = find(s), find(t)
        if rs == rt:
            return False
        parent[rs] = rt
    return len({find(v) for v in range(g.n)}) == 1
