"""Labeled graphs over an alphabet, Stallings folding, cores, pullbacks,
morphisms, quotients and coverings.

Words are tuples of ``(letter_index, sign)`` syllables.  In text form a
lowercase letter is a generator and the matching uppercase letter is its
inverse, so ``"xyX"`` is x y x^-1.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .errors import CapExceeded, PreconditionError

Word = tuple[tuple[int, int], ...]
EdgeId = tuple[int, int]  # (letter index, position inside that letter's edge list)

DEFAULT_QUOTIENT_CAP = 12


# ---------------------------------------------------------------------------
# words


def reduce_word(word: Iterable[tuple[int, int]]) -> Word:
    out: list[tuple[int, int]] = []
    for letter, sign in word:
        if out and out[-1][0] == letter and out[-1][1] == -sign:
            out.pop()
        else:
            out.append((letter, sign))
    return tuple(out)


def inverse_word(word: Word) -> Word:
    return tuple((b, -s) for b, s in reversed(word))


def multiply(*words: Word) -> Word:
    return reduce_word(itertools.chain.from_iterable(words))


def word_power(word: Word, k: int) -> Word:
    if k < 0:
        return word_power(inverse_word(word), -k)
    return reduce_word(word * k)


def commutator(u: Word, v: Word) -> Word:
    return multiply(u, v, inverse_word(u), inverse_word(v))


def parse_word(text: str, letters: Sequence[str]) -> Word:
    """Parse ``text`` over ``letters``; uppercase letters are inverses.

    ``"1"`` and ``""`` denote the empty word.  A caret with an integer
    exponent is accepted after a single letter, e.g. ``"z^210"``.
    """
    index = {b: i for i, b in enumerate(letters)}
    text = text.strip()
    if text in ("", "1"):
        return ()
    out: list[tuple[int, int]] = []
    pos = 0
    while pos < len(text):
        ch = text[pos]
        pos += 1
        if ch in index:
            syl = (index[ch], 1)
        elif ch.lower() in index and ch.isupper():
            syl = (index[ch.lower()], -1)
        else:
            raise PreconditionError(f"unknown letter {ch!r} in word {text!r}")
        reps = 1
        if pos < len(text) and text[pos] == "^":
            end = pos + 1
            if end < len(text) and text[end] == "-":
                end += 1
            while end < len(text) and text[end].isdigit():
                end += 1
            reps = int(text[pos + 1 : end])
            pos = end
        if reps < 0:
            syl = (syl[0], -syl[1])
            reps = -reps
        out.extend([syl] * reps)
    return reduce_word(out)


def word_to_str(word: Word, letters: Sequence[str]) -> str:
    if not word:
        return "1"
    return "".join(letters[b] if s > 0 else letters[b].upper() for b, s in word)


def letters_for(words: Iterable[str]) -> tuple[str, ...]:
    """Sorted lowercase alphabet used by a collection of word strings."""
    found = {ch.lower() for w in words for ch in w if ch.isalpha()}
    return tuple(sorted(found)) or ("x",)


def cyclic_reduce(word: Word) -> Word:
    w = list(word)
    while len(w) >= 2 and w[0][0] == w[-1][0] and w[0][1] == -w[-1][1]:
        w = w[1:-1]
    return tuple(w)


def primitive_root(word: Word) -> tuple[Word, int]:
    """Return ``(u, k)`` with ``word`` conjugate-free equal to ``u^k`` and k maximal.

    Works on the cyclically reduced form, so ``u`` is cyclically reduced.
    """
    w = cyclic_reduce(word)
    n = len(w)
    if n == 0:
        return (), 0
    for p in range(1, n + 1):
        if n % p == 0 and all(w[i] == w[i % p] for i in range(n)):
            return w[:p], n // p
    raise AssertionError("unreachable")


def is_proper_power(word: Word) -> bool:
    return primitive_root(word)[1] >= 2


# ---------------------------------------------------------------------------
# graphs


class BGraph:
    """A finite graph with edges labeled by an alphabet.

    ``edges[b]`` lists the ``(source, target)`` pairs of letter ``b``.  With
    ``strict`` (the default) each letter must act as a partial injection, i.e.
    the graph is folded.  Non-strict graphs are only accepted where a map into
    them is the object of interest.
    """

    __slots__ = ("letters", "n", "edges", "basepoint", "strict", "_adj")

    def __init__(
        self,
        letters: Sequence[str],
        n: int,
        edges: Sequence[Sequence[tuple[int, int]]] | dict,
        basepoint: int | None = None,
        strict: bool = True,
    ):
        self.letters = tuple(letters)
        self.n = int(n)
        if isinstance(edges, dict):
            edges = [edges.get(b, ()) for b in self.letters]
        if len(edges) != len(self.letters):
            raise PreconditionError("one edge list per letter is required")
        self.edges = tuple(tuple((int(s), int(t)) for s, t in lst) for lst in edges)
        self.basepoint = None if basepoint is None else int(basepoint)
        self.strict = strict
        self._adj = None
        self._validate()

    def _validate(self) -> None:
        if self.basepoint is not None and not 0 <= self.basepoint < self.n:
            raise PreconditionError("basepoint out of range")
        for b, lst in enumerate(self.edges):
            if len(set(lst)) != len(lst):
                raise PreconditionError(f"repeated {self.letters[b]}-edge")
            for s, t in lst:
                if not (0 <= s < self.n and 0 <= t < self.n):
                    raise PreconditionError("edge endpoint out of range")
            if self.strict:
                if len({s for s, _ in lst}) != len(lst) or len({t for _, t in lst}) != len(lst):
                    raise PreconditionError(
                        f"letter {self.letters[b]!r} is not a partial injection (graph not folded)"
                    )

    # -- adjacency -------------------------------------------------------
    @property
    def adjacency(self):
        """``(out, inn)`` where ``out[b][v]`` lists ``(target, edge_index)``."""
        if self._adj is None:
            out = [[[] for _ in range(self.n)] for _ in self.letters]
            inn = [[[] for _ in range(self.n)] for _ in self.letters]
            for b, lst in enumerate(self.edges):
                for i, (s, t) in enumerate(lst):
                    out[b][s].append((t, i))
                    inn[b][t].append((s, i))
            self._adj = (out, inn)
        return self._adj

    def out_map(self, b: int) -> dict[int, int]:
        return {s: t for s, t in self.edges[b]}

    def in_map(self, b: int) -> dict[int, int]:
        return {t: s for s, t in self.edges[b]}

    # -- counts ----------------------------------------------------------
    @property
    def num_edges(self) -> int:
        return sum(len(lst) for lst in self.edges)

    def edge_ids(self) -> list[EdgeId]:
        return [(b, i) for b, lst in enumerate(self.edges) for i in range(len(lst))]

    def euler_char(self) -> int:
        return self.n - self.num_edges

    def rank(self) -> int:
        """Rank of the fundamental group of a connected graph."""
        if not self.is_connected():
            raise PreconditionError("rank is defined for connected graphs")
        return 1 - self.euler_char()

    def degree(self, v: int) -> int:
        out, inn = self.adjacency
        return sum(len(out[b][v]) + len(inn[b][v]) for b in range(len(self.letters)))

    def neighbours(self, v: int) -> Iterator[tuple[int, EdgeId, int]]:
        """Yield ``(other_end, edge_id, direction)``; direction +1 follows the edge."""
        out, inn = self.adjacency
        for b in range(len(self.letters)):
            for t, i in out[b][v]:
                yield t, (b, i), 1
            for s, i in inn[b][v]:
                yield s, (b, i), -1

    def components(self) -> list[list[int]]:
        seen = [False] * self.n
        comps = []
        for start in range(self.n):
            if seen[start]:
                continue
            seen[start] = True
            comp = [start]
            stack = [start]
            while stack:
                v = stack.pop()
                for w, _, _ in self.neighbours(v):
                    if not seen[w]:
                        seen[w] = True
                        comp.append(w)
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return self.n > 0 and len(self.components()) == 1

    def is_core(self) -> bool:
        """No vertex of degree at most one, apart from a basepoint."""
        return all(self.degree(v) >= 2 or v == self.basepoint for v in range(self.n))

    def letter_support(self) -> frozenset[int]:
        return frozenset(b for b, lst in enumerate(self.edges) if lst)

    # -- construction helpers -------------------------------------------
    def with_basepoint(self, basepoint: int | None) -> "BGraph":
        return BGraph(self.letters, self.n, self.edges, basepoint, self.strict)

    def relabel(self, perm: Sequence[int]) -> "BGraph":
        """Rename vertex ``v`` to ``perm[v]``; edges keep their order."""
        edges = [[(perm[s], perm[t]) for s, t in lst] for lst in self.edges]
        bp = None if self.basepoint is None else perm[self.basepoint]
        return BGraph(self.letters, self.n, edges, bp, self.strict)

    def induced(self, vertices: Iterable[int]) -> tuple["BGraph", dict[int, int], list[dict[int, int]]]:
        """Induced subgraph with vertex map and per-letter edge maps (old to new)."""
        vs = sorted(set(vertices))
        vmap = {v: k for k, v in enumerate(vs)}
        edges: list[list[tuple[int, int]]] = []
        emaps: list[dict[int, int]] = []
        for lst in self.edges:
            new, emap = [], {}
            for i, (s, t) in enumerate(lst):
                if s in vmap and t in vmap:
                    emap[i] = len(new)
                    new.append((vmap[s], vmap[t]))
            edges.append(new)
            emaps.append(emap)
        bp = vmap.get(self.basepoint) if self.basepoint is not None else None
        return BGraph(self.letters, len(vs), edges, bp, self.strict), vmap, emaps

    def sorted_edges(self) -> "BGraph":
        return BGraph(self.letters, self.n, [sorted(lst) for lst in self.edges], self.basepoint, self.strict)

    def __eq__(self, other):
        return (
            isinstance(other, BGraph)
            and self.letters == other.letters
            and self.n == other.n
            and self.basepoint == other.basepoint
            and [sorted(x) for x in self.edges] == [sorted(x) for x in other.edges]
        )

    def __hash__(self):
        return hash((self.letters, self.n, self.basepoint, tuple(tuple(sorted(x)) for x in self.edges)))

    def __repr__(self):
        parts = ", ".join(f"{b}:{list(lst)}" for b, lst in zip(self.letters, self.edges))
        bp = "" if self.basepoint is None else f", basepoint={self.basepoint}"
        return f"BGraph(n={self.n}, {parts}{bp})"

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        return {
            "letters": list(self.letters),
            "vertices": self.n,
            "basepoint": self.basepoint,
            "edges": {b: [list(e) for e in lst] for b, lst in zip(self.letters, self.edges)},
        }

    @classmethod
    def from_json(cls, data: dict | str, strict: bool = True) -> "BGraph":
        if isinstance(data, str):
            data = json.loads(data)
        letters = data["letters"]
        edges = data.get("edges", {})
        unknown = set(edges) - set(letters)
        if unknown:
            raise PreconditionError(f"edges use letters outside the alphabet: {sorted(unknown)}")
        return cls(letters, data["vertices"], [edges.get(b, []) for b in letters], data.get("basepoint"), strict)

    # -- invariants ------------------------------------------------------------
    def canonical_key(self, basepointed: bool | None = None) -> tuple:
        """An isomorphism invariant that is complete on folded graphs.

        With a basepoint the key is the BFS relabelling from it.  Otherwise
        it is the minimum over start vertices, taken per component.
        """
        if basepointed is None:
            basepointed = self.basepoint is not None
        if basepointed:
            if self.basepoint is None:
                raise PreconditionError("graph has no basepoint")
            comps = self.components()
            main = next(c for c in comps if self.basepoint in c)
            rest = sorted(_component_key(self, c, None) for c in comps if c is not main)
            return ("*", _component_key(self, main, self.basepoint), tuple(rest))
        return tuple(sorted(_component_key(self, c, None) for c in self.components()))


def _bfs_code(g: BGraph, start: int) -> tuple:
    out, inn = g.adjacency
    order = {start: 0}
    queue = deque([start])
    code = []
    while queue:
        v = queue.popleft()
        for b in range(len(g.letters)):
            for lst in (out[b][v], inn[b][v]):
                for w, _ in sorted(lst):
                    if w not in order:
                        order[w] = len(order)
                        queue.append(w)
    for b, lst in enumerate(g.edges):
        code.append(tuple(sorted((order[s], order[t]) for s, t in lst if s in order)))
    return (len(order), tuple(code))


def _component_key(g: BGraph, comp: list[int], start: int | None) -> tuple:
    if start is not None:
        return _bfs_code(g, start)
    if g.strict:
        return min(_bfs_code(g, v) for v in comp)
    # Non-folded graphs: brute force over relabellings is out of scope, fall
    # back to a BFS code that is still an invariant but may not be complete.
    return min(_bfs_code(g, v) for v in comp)


def bouquet(letters: Sequence[str]) -> BGraph:
    return BGraph(letters, 1, [[(0, 0)] for _ in letters], basepoint=0)


def disjoint_union(graphs: Sequence[BGraph]) -> tuple[BGraph, list[int]]:
    """Disjoint union; returns the graph and each part's vertex offset."""
    letters = graphs[0].letters
    offsets, edges, n = [], [[] for _ in letters], 0
    for g in graphs:
        if g.letters != letters:
            raise PreconditionError("alphabets differ")
        offsets.append(n)
        for b, lst in enumerate(g.edges):
            edges[b].extend((s + n, t + n) for s, t in lst)
        n += g.n
    return BGraph(letters, n, edges, strict=all(g.strict for g in graphs)), offsets


# ---------------------------------------------------------------------------
# folding and cores


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra > rb:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def fold_edges(
    letters: Sequence[str],
    n: int,
    triples: Iterable[tuple[int, int, int]],
    basepoint: int | None = None,
) -> tuple[BGraph, list[int]]:
    """Stallings-fold a labeled multigraph given as ``(letter, source, target)``.

    Returns the folded graph and the map from old to new vertices.  New
    vertices are numbered by their smallest old representative.
    """
    triples = list(triples)
    uf = _UnionFind(n)
    nl = len(letters)
    changed = True
    while changed:
        changed = False
        for b in range(nl):
            fwd: dict[int, int] = {}
            bwd: dict[int, int] = {}
            for lb, s, t in triples:
                if lb != b:
                    continue
                rs, rt = uf.find(s), uf.find(t)
                if rs in fwd and uf.find(fwd[rs]) != rt:
                    uf.union(fwd[rs], rt)
                    changed = True
                    rt = uf.find(rt)
                fwd[rs] = rt
                if rt in bwd and uf.find(bwd[rt]) != uf.find(rs):
                    uf.union(bwd[rt], rs)
                    changed = True
                bwd[uf.find(rt)] = uf.find(rs)
    roots = sorted({uf.find(v) for v in range(n)})
    renum = {r: k for k, r in enumerate(roots)}
    vmap = [renum[uf.find(v)] for v in range(n)]
    edges = [sorted({(vmap[s], vmap[t]) for lb, s, t in triples if lb == b}) for b in range(nl)]
    bp = None if basepoint is None else vmap[basepoint]
    return BGraph(letters, len(roots), edges, bp), vmap


def fold(graph: BGraph) -> tuple[BGraph, list[int]]:
    triples = [(b, s, t) for b, lst in enumerate(graph.edges) for s, t in lst]
    return fold_edges(graph.letters, graph.n, triples, graph.basepoint)


def core_map(g: BGraph, keep_basepoint: bool = True) -> tuple[BGraph, list[int | None], list[dict[int, int]]]:
    """Iteratively delete vertices of degree at most one.

    Returns the core, the old-to-new vertex map (``None`` for deleted
    vertices) and per-letter old-to-new edge index maps.
    """
    deg = [g.degree(v) for v in range(g.n)]
    alive = [True] * g.n
    protected = g.basepoint if keep_basepoint else None
    queue = deque(v for v in range(g.n) if deg[v] <= 1 and v != protected)
    while queue:
        v = queue.popleft()
        if not alive[v]:
            continue
        alive[v] = False
        for w, _, _ in g.neighbours(v):
            if alive[w]:
                deg[w] -= 1
                if deg[w] <= 1 and w != protected:
                    queue.append(w)
    keep = [v for v in range(g.n) if alive[v]]
    sub, vmap, emaps = g.induced(keep)
    full = [vmap.get(v) for v in range(g.n)]
    return sub, full, emaps


def core(g: BGraph, keep_basepoint: bool = True) -> BGraph:
    return core_map(g, keep_basepoint)[0]


def fold_words(words: Sequence[str | Word], letters: Sequence[str] | None = None) -> BGraph:
    """Basepointed Stallings graph of the subgroup generated by ``words``."""
    if letters is None:
        letters = letters_for(w for w in words if isinstance(w, str))
    parsed = [parse_word(w, letters) if isinstance(w, str) else reduce_word(w) for w in words]
    triples: list[tuple[int, int, int]] = []
    n = 1
    for w in parsed:
        if not w:
            continue
        path = [0] + list(range(n, n + len(w) - 1)) + [0]
        n += len(w) - 1
        for k, (b, s) in enumerate(w):
            u, v = path[k], path[k + 1]
            triples.append((b, u, v) if s > 0 else (b, v, u))
    g, _ = fold_edges(letters, n, triples, basepoint=0)
    return core(g, keep_basepoint=True)


def cycle_graph(word: str | Word, letters: Sequence[str] | None = None) -> BGraph:
    """Unbasepointed core graph of the cyclic subgroup generated by ``word``."""
    g = fold_words([word], letters)
    return core(g.with_basepoint(None), keep_basepoint=False)


def read_word(g: BGraph, start: int, word: Word) -> int | None:
    """Endpoint of the path reading ``word`` from ``start``, or None."""
    v = start
    for b, s in word:
        nxt = g.out_map(b) if s > 0 else g.in_map(b)
        if v not in nxt:
            return None
        v = nxt[v]
    return v


def accepts(g: BGraph, word: Word) -> bool:
    """Whether the basepointed graph's subgroup contains ``word``."""
    return read_word(g, g.basepoint, reduce_word(word)) == g.basepoint


# ---------------------------------------------------------------------------
# fiber products


@dataclass
class Pullback:
    """Core of a fiber product with its two projections."""

    graph: BGraph
    left_vertex: list[int]
    right_vertex: list[int]
    left_edge: list[list[int]]
    right_edge: list[list[int]]


def fiber_product(a: BGraph, b: BGraph) -> BGraph:
    """Vertex ``(u, v)`` is numbered ``u * b.n + v``."""
    if a.letters != b.letters:
        raise PreconditionError("alphabets differ")
    nb = b.n
    edges = [
        [(s1 * nb + s2, t1 * nb + t2) for s1, t1 in la for s2, t2 in lb]
        for la, lb in zip(a.edges, b.edges)
    ]
    bp = None
    if a.basepoint is not None and b.basepoint is not None:
        bp = a.basepoint * nb + b.basepoint
    return BGraph(a.letters, a.n * nb, edges, bp, strict=a.strict and b.strict)


def pullback(a: BGraph, b: BGraph, keep_basepoint: bool = False) -> Pullback:
    prod = fiber_product(a, b)
    if not keep_basepoint:
        prod = prod.with_basepoint(None)
    p, vmap, emaps = core_map(prod, keep_basepoint)
    old_of_new = [0] * p.n
    for old, new in enumerate(vmap):
        if new is not None:
            old_of_new[new] = old
    left_v = [old_of_new[k] // b.n for k in range(p.n)]
    right_v = [old_of_new[k] % b.n for k in range(p.n)]
    left_e, right_e = [], []
    for lb, emap in enumerate(emaps):
        nb_edges = len(b.edges[lb])
        le = [0] * len(p.edges[lb])
        re = [0] * len(p.edges[lb])
        for old, new in emap.items():
            le[new], re[new] = divmod(old, nb_edges)
        left_e.append(le)
        right_e.append(re)
    return Pullback(p, left_v, right_v, left_e, right_e)


# ---------------------------------------------------------------------------
# morphisms


@dataclass(frozen=True)
class Morphism:
    """A label-preserving graph map given on vertices and edges."""

    vertex_map: tuple[int, ...]
    edge_map: tuple[tuple[int, ...], ...]


def is_morphism(a: BGraph, b: BGraph, m: Morphism) -> bool:
    if len(m.vertex_map) != a.n:
        return False
    for lb, lst in enumerate(a.edges):
        for i, (s, t) in enumerate(lst):
            j = m.edge_map[lb][i]
            if b.edges[lb][j] != (m.vertex_map[s], m.vertex_map[t]):
                return False
    return True


def enumerate_morphisms(a: BGraph, b: BGraph, basepointed: bool = False) -> list[Morphism]:
    """All label-preserving maps ``a -> b``.

    The codomain may be non-folded, but it must not have parallel edges with
    the same label.  Each component of ``a`` is placed by backtracking along
    a BFS order, with candidates drawn from the image of an already placed
    neighbour.
    """
    if a.letters != b.letters:
        raise PreconditionError("alphabets differ")
    lookup: dict[tuple[int, int, int], int] = {}
    for lb, lst in enumerate(b.edges):
        for j, (s, t) in enumerate(lst):
            lookup[(lb, s, t)] = j
    bout, binn = b.adjacency
    per_component: list[list[dict[int, int]]] = []
    for comp in a.components():
        if basepointed and a.basepoint in comp:
            root = a.basepoint
            root_candidates = [b.basepoint]
        else:
            root = comp[0]
            root_candidates = list(range(b.n))
        order, via = [root], {root: None}
        k = 0
        while k < len(order):
            v = order[k]
            k += 1
            for w, (lb, _), d in a.neighbours(v):
                if w not in via:
                    via[w] = (v, lb, d)
                    order.append(w)
        checks: dict[int, list[tuple[int, int, int]]] = {v: [] for v in order}
        pos = {v: i for i, v in enumerate(order)}
        for lb, lst in enumerate(a.edges):
            for s, t in lst:
                later = s if pos[s] >= pos[t] else t
                checks[later].append((lb, s, t))
        found: list[dict[int, int]] = []
        image: dict[int, int] = {}

        def place(idx: int) -> None:
            if idx == len(order):
                found.append(dict(image))
                return
            v = order[idx]
            if via[v] is None:
                cands = root_candidates
            else:
                u, lb, d = via[v]
                fu = image[u]
                cands = [w for w, _ in (bout[lb][fu] if d > 0 else binn[lb][fu])]
            for c in cands:
                image[v] = c
                if all((lb, image[s], image[t]) in lookup for lb, s, t in checks[v]):
                    place(idx + 1)
            image.pop(v, None)

        place(0)
        per_component.append(found)
    result = []
    for combo in itertools.product(*per_component):
        vm = [0] * a.n
        for part in combo:
            for v, w in part.items():
                vm[v] = w
        em = tuple(
            tuple(lookup[(lb, vm[s], vm[t])] for s, t in lst) for lb, lst in enumerate(a.edges)
        )
        result.append(Morphism(tuple(vm), em))
    return result


def count_morphisms(a: BGraph, b: BGraph, basepointed: bool = False) -> int:
    return len(enumerate_morphisms(a, b, basepointed))


# ---------------------------------------------------------------------------
# closed partitions and quotients


def closed_partitions(
    g: BGraph,
    separate: Sequence[Iterable[int]] = (),
    cap: int | None = DEFAULT_QUOTIENT_CAP,
) -> Iterator[tuple[int, ...]]:
    """Yield each fold-closed partition of ``V(g)`` exactly once.

    A partition is fold-closed when collapsing it produces a folded graph.
    Partitions are emitted as restricted-growth label tuples.  Every group in
    ``separate`` must meet each block at most once.

    The search walks vertices in order.  A vertex not yet glued to an earlier
    block either opens a new block or is merged into an existing block, and
    each merge is followed by its full folding closure.  A branch dies as soon
    as two block openers or two members of a separated group collide, so
    every leaf is a distinct answer and no deduplication is needed.
    """
    if not g.strict:
        raise PreconditionError("closed partitions need a folded graph")
    n = g.n
    if cap is not None and n > cap:
        raise CapExceeded(f"quotient enumeration capped at {cap} vertices, graph has {n}")
    nl = len(g.letters)
    out0 = [[-1] * n for _ in range(nl)]
    in0 = [[-1] * n for _ in range(nl)]
    for b, lst in enumerate(g.edges):
        for s, t in lst:
            out0[b][s] = t
            in0[b][t] = s
    tag_lists: list[set] = [set() for _ in range(n)]
    for gi, group in enumerate(separate):
        for v in group:
            tag_lists[v].add(gi)
    tags0 = [frozenset(t) for t in tag_lists]
    LEADER = -1

    # state: cls[v] -> class id (the smallest member), members[c], out[b][c], inn[b][c], tags[c]
    cls0 = list(range(n))
    members0 = {v: [v] for v in range(n)}
    tagmap0 = {v: tags0[v] for v in range(n)}
    outc0 = [{v: out0[b][v] for v in range(n) if out0[b][v] >= 0} for b in range(nl)]
    inc0 = [{v: in0[b][v] for v in range(n) if in0[b][v] >= 0} for b in range(nl)]

    def merge(state, x: int, y: int) -> bool:
        cls, members, tagmap, outc, inc = state
        pending = [(x, y)]
        while pending:
            u, v = pending.pop()
            cu, cv = cls[u], cls[v]
            if cu == cv:
                continue
            if tagmap[cu] & tagmap[cv]:
                return False
            if len(members[cu]) < len(members[cv]):
                cu, cv = cv, cu
            moved = members.pop(cv)
            for w in moved:
                cls[w] = cu
            members[cu].extend(moved)
            tagmap[cu] = tagmap[cu] | tagmap.pop(cv)
            for b in range(nl):
                o1, o2 = outc[b].get(cu), outc[b].pop(cv, None)
                if o2 is not None:
                    if o1 is None:
                        outc[b][cu] = o2
                    else:
                        pending.append((o1, o2))
                i1, i2 = inc[b].get(cu), inc[b].pop(cv, None)
                if i2 is not None:
                    if i1 is None:
                        inc[b][cu] = i2
                    else:
                        pending.append((i1, i2))
        return True

    def copy_state(state):
        cls, members, tagmap, outc, inc = state
        return (
            cls[:],
            {c: m[:] for c, m in members.items()},
            dict(tagmap),
            [dict(d) for d in outc],
            [dict(d) for d in inc],
        )

    def labels(cls: list[int]) -> tuple[int, ...]:
        seen: dict[int, int] = {}
        return tuple(seen.setdefault(c, len(seen)) for c in cls)

    def rec(i: int, state, leaders: list[int]):
        cls, _, tagmap, _, _ = state
        # vertices already glued to an opened block are forced
        while i < n and LEADER in tagmap[cls[i]]:
            i += 1
        if i == n:
            yield labels(cls)
            return
        for l in leaders:
            trial = copy_state(state)
            if merge(trial, i, l):
                yield from rec(i + 1, trial, leaders)
        tagmap[cls[i]] = tagmap[cls[i]] | {LEADER}
        yield from rec(i + 1, state, leaders + [i])

    yield from rec(0, (cls0, members0, tagmap0, outc0, inc0), [])


def closed_partitions_rgs(
    g: BGraph,
    separate: Sequence[Iterable[int]] = (),
    cap: int | None = DEFAULT_QUOTIENT_CAP,
) -> list[tuple[int, ...]]:
    """Reference enumeration: fold every set partition and deduplicate.

    Exponentially slower than :func:`closed_partitions`; kept as an oracle.
    """
    n = g.n
    if cap is not None and n > cap:
        raise CapExceeded(f"quotient enumeration capped at {cap} vertices")
    groups = [list(gr) for gr in separate]
    triples = [(b, s, t) for b, lst in enumerate(g.edges) for s, t in lst]
    found = set()
    for rgs in _restricted_growth(n):
        uf = _UnionFind(n)
        for v in range(n):
            uf.union(v, rgs.index(rgs[v]))
        merged = [(b, uf.find(s), uf.find(t)) for b, s, t in triples]
        _, vmap = fold_edges(g.letters, n, merged)
        final = [vmap[uf.find(v)] for v in range(n)]
        if any(len({final[v] for v in gr}) < len(gr) for gr in groups):
            continue
        seen: dict[int, int] = {}
        found.add(tuple(seen.setdefault(c, len(seen)) for c in final))
    return sorted(found)


def _restricted_growth(n: int) -> Iterator[list[int]]:
    if n == 0:
        yield []
        return
    a = [0] * n

    def rec(i: int, m: int):
        if i == n:
            yield list(a)
            return
        for k in range(m + 2):
            a[i] = k
            yield from rec(i + 1, max(m, k))

    a[0] = 0
    yield from rec(1, 0)


def quotient_graph(g: BGraph, labels: Sequence[int]) -> BGraph:
    k = max(labels) + 1 if labels else 0
    edges = [sorted({(labels[s], labels[t]) for s, t in lst}) for lst in g.edges]
    bp = None if g.basepoint is None else labels[g.basepoint]
    return BGraph(g.letters, k, edges, bp)


def quotients(g: BGraph, cap: int | None = DEFAULT_QUOTIENT_CAP, method: str = "closure") -> list[BGraph]:
    """All folded quotients of ``g``, one per closed partition."""
    if method == "closure":
        parts = list(closed_partitions(g, cap=cap))
    elif method == "rgs":
        parts = closed_partitions_rgs(g, cap=cap)
    else:
        raise PreconditionError(f"unknown method {method!r}")
    return [quotient_graph(g, p) for p in parts]


def number_of_divisors(k: int) -> int:
    return sum(1 for j in range(1, k + 1) if k % j == 0)


# ---------------------------------------------------------------------------
# spanning trees and bases


@dataclass
class SpanningTree:
    root: int
    tree_edges: frozenset[EdgeId]
    paths: dict[int, Word]  # tree path word from the root to each vertex
    non_tree_edges: list[EdgeId] = field(default_factory=list)


def spanning_tree(g: BGraph, root: int | None = None) -> SpanningTree:
    """BFS spanning tree of the component of ``root`` (default: basepoint or 0)."""
    if root is None:
        root = g.basepoint if g.basepoint is not None else 0
    paths: dict[int, Word] = {root: ()}
    tree: set[EdgeId] = set()
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w, (b, i), d in g.neighbours(v):
            if w not in paths:
                paths[w] = paths[v] + ((b, d),)
                tree.add((b, i))
                queue.append(w)
    non_tree = [
        (b, i)
        for b, lst in enumerate(g.edges)
        for i, (s, _) in enumerate(lst)
        if (b, i) not in tree and s in paths
    ]
    return SpanningTree(root, frozenset(tree), paths, non_tree)


def basis_words(g: BGraph, tree: SpanningTree | None = None) -> list[Word]:
    """Free basis of the fundamental group at the root of ``tree``."""
    tree = tree or spanning_tree(g)
    out = []
    for b, i in tree.non_tree_edges:
        s, t = g.edges[b][i]
        out.append(multiply(tree.paths[s], ((b, 1),), inverse_word(tree.paths[t])))
    return out


# ---------------------------------------------------------------------------
# coverings


@dataclass
class Covering:
    """A degree-``d`` covering ``total -> base``.

    Vertex ``v*d + i`` of ``total`` lies over ``v``.  ``perms`` holds one
    permutation per non-tree edge of the base's spanning tree, in tree order;
    tree edges are lifted identically.
    """

    base: BGraph
    total: BGraph
    degree: int
    perms: tuple[tuple[int, ...], ...]
    tree: SpanningTree

    def vertex_projection(self, x: int) -> int:
        return x // self.degree

    def fiber(self, v: int) -> list[int]:
        return [v * self.degree + i for i in range(self.degree)]

    def edge_projection(self, b: int, j: int) -> int:
        return j // self.degree


def covering_from_perms(g: BGraph, perms: Sequence[Sequence[int]], d: int, tree: SpanningTree | None = None) -> Covering:
    if not g.is_connected():
        raise PreconditionError("coverings are built over connected graphs")
    tree = tree or spanning_tree(g)
    if len(perms) != len(tree.non_tree_edges):
        raise PreconditionError(f"expected {len(tree.non_tree_edges)} permutations")
    nt_index = {e: k for k, e in enumerate(tree.non_tree_edges)}
    edges = []
    for b, lst in enumerate(g.edges):
        new = []
        for j, (s, t) in enumerate(lst):
            k = nt_index.get((b, j))
            for i in range(d):
                ti = i if k is None else perms[k][i]
                new.append((s * d + i, t * d + ti))
        edges.append(new)
    bp = None if g.basepoint is None else g.basepoint * d
    total = BGraph(g.letters, g.n * d, edges, bp)
    return Covering(g, total, d, tuple(tuple(p) for p in perms), tree)


def trivial_covering(g: BGraph, d: int) -> Covering:
    tree = spanning_tree(g)
    ident = tuple(range(d))
    return covering_from_perms(g, [ident] * len(tree.non_tree_edges), d, tree)


def enumerate_coverings(g: BGraph, d: int, cap: int = 10**6) -> Iterator[Covering]:
    """All ``(d!)^rank`` labelled degree-``d`` coverings of a connected graph."""
    tree = spanning_tree(g)
    r = len(tree.non_tree_edges)
    total = math.factorial(d) ** r
    if total > cap:
        raise CapExceeded(f"{total} coverings exceed cap {cap}")
    perms = list(itertools.permutations(range(d)))
    for combo in itertools.product(perms, repeat=r):
        yield covering_from_perms(g, combo, d, tree)


def monodromy(cov: Covering) -> list[tuple[int, ...]]:
    """Permutation of the basepoint fiber induced by each basis loop.

    Entry ``k`` maps ``i`` to the fiber index reached by lifting the ``k``-th
    basis word from fiber vertex ``i``.
    """
    g = cov.base
    words = basis_words(g, cov.tree)
    root = cov.tree.root
    d = cov.degree
    out = []
    for w in words:
        perm = []
        for i in range(d):
            end = read_word(cov.total, root * d + i, w)
            perm.append(end - root * d)
        out.append(tuple(perm))
    return out


def is_covering_map(total: BGraph, base: BGraph, vproj: Sequence[int]) -> bool:
    """Locally bijective and label preserving, with equal fiber sizes."""
    for b in range(len(base.letters)):
        bo, bi = base.out_map(b), base.in_map(b)
        to, ti = total.out_map(b), total.in_map(b)
        for x in range(total.n):
            u = vproj[x]
            if (u in bo) != (x in to) or (u in bi) != (x in ti):
                return False
            if x in to and vproj[to[x]] != bo[u]:
                return False
            if x in ti and vproj[ti[x]] != bi[u]:
                return False
    sizes = {sum(1 for x in range(total.n) if vproj[x] == u) for u in range(base.n)}
    return len(sizes) == 1


@dataclass
class SubCovering:
    """Components of a pullback that together cover the left factor."""

    components: tuple[tuple[int, ...], ...]
    degree: int
    edge_multiplicity: dict[tuple[int, int], int]


def covering_components(pb: Pullback, base: BGraph) -> list[tuple[tuple[int, ...], int]]:
    """Components of the pullback mapping to ``base`` as coverings, with degrees."""
    p = pb.graph
    found = []
    for comp in p.components():
        sub, vmap, _ = p.induced(comp)
        proj = [0] * sub.n
        for v, k in vmap.items():
            proj[k] = pb.left_vertex[v]
        if set(proj) == set(range(base.n)) and is_covering_map(sub, base, proj):
            found.append((tuple(comp), sub.n // base.n))
    return found


def find_coverings_in_pullback(g: BGraph, delta: BGraph, d: int) -> list[SubCovering]:
    """Degree-``d`` coverings of ``g`` inside the pullback with ``delta``.

    Each is a union of covering components whose degrees sum to ``d``; the
    multiplicity counts how many covering edges land on each edge of ``delta``.
    """
    if not g.is_connected():
        raise PreconditionError("g must be connected")
    pb = pullback(g, delta)
    comps = covering_components(pb, g)
    out = []
    for size in range(1, len(comps) + 1):
        for combo in itertools.combinations(comps, size):
            if sum(deg for _, deg in combo) != d:
                continue
            mult: dict[tuple[int, int], int] = {}
            verts = set().union(*(set(c) for c, _ in combo))
            for b, lst in enumerate(pb.graph.edges):
                for j, (s, _) in enumerate(lst):
                    if s in verts:
                        key = (b, pb.right_edge[b][j])
                        mult[key] = mult.get(key, 0) + 1
            out.append(SubCovering(tuple(c for c, _ in combo), d, mult))
    return out


def find_coverings_bruteforce(g: BGraph, delta: BGraph, d: int) -> int:
    """Count vertex subsets of the pullback inducing a degree-``d`` covering of ``g``.

    Exhaustive over subsets, used to check :func:`find_coverings_in_pullback`.
    """
    pb = pullback(g, delta)
    p = pb.graph
    target = d * g.n
    count = 0
    for subset in itertools.combinations(range(p.n), target):
        sub, vmap, _ = p.induced(subset)
        proj = [0] * sub.n
        for v, k in vmap.items():
            proj[k] = pb.left_vertex[v]
        if sorted(proj) == sorted(list(range(g.n)) * d) and is_covering_map(sub, g, proj):
            # a covering subgraph must be a union of whole components of p
            if all(set(c) <= set(subset) or not (set(c) & set(subset)) for c in p.components()):
                count += 1
    return count


def shnc_ratio(g: BGraph, delta: BGraph) -> Fraction:
    """``chi(g) * chi(delta) / -chi(pullback)``, for checking the strengthened bound."""
    pb = pullback(g, delta).graph
    chi_p = pb.euler_char()
    if chi_p == 0:
        raise PreconditionError("pullback has Euler characteristic zero")
    return Fraction(g.euler_char() * delta.euler_char(), -chi_p)
