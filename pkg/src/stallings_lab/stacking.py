"""Stackings of core graphs: vertex orders under which every letter is monotone."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Sequence

from .bgraph import (
    BGraph,
    Morphism,
    commutator,
    core,
    enumerate_morphisms,
    fold_words,
    multiply,
    spanning_tree,
    basis_words,
    word_power,
)
from .errors import CapExceeded, PreconditionError, TheoremViolation

EXHAUSTIVE_CAP = 9


@dataclass
class Stacking:
    """Heights ``0..n-1`` of the vertices; ``certified`` marks exact optima."""

    heights: tuple[int, ...]
    certified: bool = True

    def order(self) -> list[int]:
        return sorted(range(len(self.heights)), key=lambda v: self.heights[v])

    def to_json(self) -> dict:
        return {"heights": list(self.heights)}

    @classmethod
    def from_json(cls, data: dict) -> "Stacking":
        return cls(normalize_heights(data["heights"]))


def normalize_heights(heights: Sequence[int]) -> tuple[int, ...]:
    if len(set(heights)) != len(heights):
        raise PreconditionError("heights must be distinct")
    order = sorted(range(len(heights)), key=lambda v: heights[v])
    out = [0] * len(heights)
    for rank, v in enumerate(order):
        out[v] = rank
    return tuple(out)


def is_stacking(g: BGraph, heights: Sequence[int]) -> bool:
    """Sorting each letter's edges by source height also sorts targets."""
    if len(heights) != g.n or len(set(heights)) != g.n:
        return False
    for lst in g.edges:
        ordered = sorted(lst, key=lambda e: heights[e[0]])
        tgt = [heights[t] for _, t in ordered]
        if any(a > b for a, b in zip(tgt, tgt[1:])):
            return False
    return True


def stacking_length(g: BGraph, heights: Sequence[int]) -> int:
    """Sum over edges of ``|height(target) - height(source)|``."""
    return sum(abs(heights[t] - heights[s]) for lst in g.edges for s, t in lst)


def _pair_constraints(g: BGraph):
    """For each vertex, the same-letter edge pairs whose order it helps decide."""
    involved: list[list[tuple[int, int, int, int]]] = [[] for _ in range(g.n)]
    for lst in g.edges:
        for (s1, t1), (s2, t2) in itertools.combinations(lst, 2):
            item = (s1, t1, s2, t2)
            for v in {s1, t1, s2, t2}:
                involved[v].append(item)
    return involved


def _consistent(pos: dict[int, int], item, n_placed: int) -> bool:
    # unplaced vertices sit above every placed one
    s1, t1, s2, t2 = item
    big = n_placed + 1
    ps1, ps2 = pos.get(s1, big), pos.get(s2, big)
    pt1, pt2 = pos.get(t1, big), pos.get(t2, big)
    if ps1 == ps2 or pt1 == pt2:
        return True
    return (ps1 < ps2) == (pt1 < pt2)


def _search(g: BGraph, visit, node_cap: int | None):
    """Place vertices bottom-up, calling ``visit(pos)`` on complete stackings.

    ``visit`` returns True to stop.  Returns the number of nodes expanded.
    """
    n = g.n
    involved = _pair_constraints(g)
    pos: dict[int, int] = {}
    nodes = 0
    order = sorted(range(n), key=lambda v: -g.degree(v))

    def rec(k: int) -> bool:
        nonlocal nodes
        nodes += 1
        if node_cap is not None and nodes > node_cap:
            raise CapExceeded(f"stacking search exceeded {node_cap} nodes")
        if k == n:
            return bool(visit(pos))
        for v in order:
            if v in pos:
                continue
            pos[v] = k
            if all(_consistent(pos, item, k) for item in involved[v]):
                if rec(k + 1):
                    return True
            del pos[v]
        return False

    rec(0)
    return nodes


def find_stacking(g: BGraph, node_cap: int | None = 2_000_000) -> Stacking | None:
    """Any stacking, by backtracking with pairwise consistency checks."""
    found: list[tuple[int, ...]] = []

    def visit(pos):
        found.append(tuple(pos[v] for v in range(g.n)))
        return True

    _search(g, visit, node_cap)
    return Stacking(found[0]) if found else None


def all_stackings(g: BGraph, node_cap: int | None = 5_000_000) -> list[tuple[int, ...]]:
    found: list[tuple[int, ...]] = []

    def visit(pos):
        found.append(tuple(pos[v] for v in range(g.n)))
        return False

    _search(g, visit, node_cap)
    return found


def all_stackings_bruteforce(g: BGraph) -> list[tuple[int, ...]]:
    """Every permutation filtered by :func:`is_stacking`; for small graphs only."""
    if g.n > 8:
        raise CapExceeded("brute force limited to 8 vertices")
    return [p for p in itertools.permutations(range(g.n)) if is_stacking(g, p)]


def all_minimal_stackings(g: BGraph) -> list[tuple[int, ...]]:
    stacks = all_stackings(g)
    if not stacks:
        return []
    best = min(stacking_length(g, h) for h in stacks)
    return sorted(h for h in stacks if stacking_length(g, h) == best)


def minimal_stacking(g: BGraph, seed: int = 0, exhaustive_cap: int = EXHAUSTIVE_CAP) -> Stacking | None:
    """A stacking of least total edge length.

    Exact up to ``exhaustive_cap`` vertices, with ties broken by the
    lexicographically smallest height vector.  Larger graphs get a seeded
    annealing search whose result is flagged as an upper bound.
    """
    if g.n <= exhaustive_cap:
        best: list = [None, None]

        def visit(pos):
            h = tuple(pos[v] for v in range(g.n))
            key = (stacking_length(g, h), h)
            if best[0] is None or key < best[0]:
                best[0], best[1] = key, h
            return False

        _search(g, visit, None)
        return Stacking(best[1]) if best[1] is not None else None
    start = find_stacking(g)
    if start is None:
        return None
    return Stacking(_anneal(g, start.heights, random.Random(f"{seed}:anneal")), certified=False)


def _anneal(g: BGraph, heights: tuple[int, ...], rng: random.Random, steps: int = 20000) -> tuple[int, ...]:
    order = sorted(range(g.n), key=lambda v: heights[v])

    def heights_of(o):
        h = [0] * g.n
        for k, v in enumerate(o):
            h[v] = k
        return h

    cur = stacking_length(g, heights_of(order))
    best, best_len = list(order), cur
    temp = 2.0
    for step in range(steps):
        i = rng.randrange(g.n - 1)
        order[i], order[i + 1] = order[i + 1], order[i]
        h = heights_of(order)
        if is_stacking(g, h):
            new = stacking_length(g, h)
            if new <= cur or rng.random() < math.exp((cur - new) / temp):
                cur = new
                if new < best_len or (new == best_len and tuple(h) < tuple(heights_of(best))):
                    best, best_len = list(order), new
                continue
        order[i], order[i + 1] = order[i + 1], order[i]
        temp = max(0.05, temp * 0.9995)
    return tuple(heights_of(best))


# ---------------------------------------------------------------------------
# bridges and minimal edges


def bridges(g: BGraph) -> set[tuple[int, int]]:
    """Edges whose removal disconnects their component."""
    out = set()
    base = len(g.components())
    for b, lst in enumerate(g.edges):
        for i, (s, t) in enumerate(lst):
            if s == t:
                continue
            edges = [list(l) for l in g.edges]
            del edges[b][i]
            h = BGraph(g.letters, g.n, edges, strict=g.strict)
            if len(h.components()) > base:
                out.add((b, i))
    return out


def lowest_vertex_bridge_ok(g: BGraph, heights: Sequence[int]) -> bool:
    """If the lowest vertex meets a bridge ``e``, it is alone in its side of ``g - e``."""
    low = min(range(g.n), key=lambda v: heights[v])
    for e in bridges(g):
        s, t = g.edges[e[0]][e[1]]
        if low in (s, t):
            side, other = _split(g, e)
            part = side if low in side else other
            if part != {low}:
                return False
    return True


def sigma_minimal_edges(g: BGraph, heights: Sequence[int]) -> list[tuple[int, int]]:
    """Edges first in their letter's order, i.e. touching the lowest vertex of that letter."""
    out = []
    for b, lst in enumerate(g.edges):
        if lst:
            i = min(range(len(lst)), key=lambda k: heights[lst[k][0]])
            out.append((b, i))
    return out


def _tree_avoiding(g: BGraph, edge: tuple[int, int]) -> frozenset[tuple[int, int]]:
    parent = list(range(g.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = set()
    for b, lst in enumerate(g.edges):
        for i, (s, t) in enumerate(lst):
            if (b, i) == edge:
                continue
            rs, rt = find(s), find(t)
            if rs != rt:
                parent[rs] = rt
                tree.add((b, i))
    if len(tree) != g.n - 1:
        raise TheoremViolation("edge is a bridge, no spanning tree avoids it")
    return frozenset(tree)


@dataclass
class NonBridgeWitness:
    edge: tuple[int, int]
    tree: frozenset[tuple[int, int]]
    heights: tuple[int, ...]
    route: str  # "given", "bridge-move", "leaf-move" or "search"


def _min_vertex_edges(g: BGraph, heights: Sequence[int]) -> list[tuple[int, int]]:
    low = min(range(g.n), key=lambda v: heights[v])
    return [(b, i) for b, lst in enumerate(g.edges) for i, (s, t) in enumerate(lst) if low in (s, t)]


def _witness(g: BGraph, h: Sequence[int], brs: set, route: str) -> NonBridgeWitness | None:
    free = [e for e in sigma_minimal_edges(g, h) if e not in brs]
    if not free:
        return None
    edge = min(free)
    return NonBridgeWitness(edge, _tree_avoiding(g, edge), normalize_heights(h), route)


def sigma_min_nonbridge(g: BGraph, heights: Sequence[int], search_cap: int = EXHAUSTIVE_CAP) -> NonBridgeWitness:
    """A stacking together with a minimal edge (first of its letter) that is not a bridge.

    Tries the given stacking, then repeatedly flips the side of a bridge at
    the lowest vertex below the rest (each flip shortens the stacking), then
    lifts the nearest cycle vertex under a bottom leaf.  The last move does
    not always give a stacking, so small graphs fall back to an exhaustive
    search over stackings.  ``route`` records which step succeeded.
    """
    if not g.is_connected():
        raise PreconditionError("graph must be connected")
    if not is_stacking(g, heights):
        raise PreconditionError("not a stacking")
    if g.euler_char() > 0:
        raise PreconditionError("graph has no cycle")
    brs = bridges(g)
    h = list(heights)
    found = _witness(g, h, brs, "given")
    if found:
        return found
    while True:
        low = min(range(g.n), key=lambda v: h[v])
        if g.degree(low) == 1:
            break
        bridge = _min_vertex_edges(g, h)[0]
        new = _bridge_reorder(g, h, bridge)
        if stacking_length(g, new) >= stacking_length(g, h):
            raise TheoremViolation("bridge move did not shorten the stacking")
        h = new
        found = _witness(g, h, brs, "bridge-move")
        if found:
            return found
    moved = _leaf_reorder(g, h, low, brs)
    if moved is not None:
        found = _witness(g, moved, brs, "leaf-move")
        if found:
            return found
    if g.n > search_cap:
        raise CapExceeded("reordering moves failed and the graph is too large to search")
    best = None

    def visit(pos):
        nonlocal best
        hh = tuple(pos[v] for v in range(g.n))
        best = _witness(g, hh, brs, "search")
        return best is not None

    _search(g, visit, None)
    if best is None:
        raise TheoremViolation("no stacking has a non-bridge minimal edge")
    return best


def _split(g: BGraph, edge: tuple[int, int]) -> tuple[set[int], set[int]]:
    b, i = edge
    s, t = g.edges[b][i]
    adj: dict[int, list[int]] = {v: [] for v in range(g.n)}
    for lb, lst in enumerate(g.edges):
        for j, (x, y) in enumerate(lst):
            if (lb, j) != edge:
                adj[x].append(y)
                adj[y].append(x)
    side = {s}
    stack = [s]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in side:
                side.add(w)
                stack.append(w)
    return side, set(range(g.n)) - side


def _bridge_reorder(g: BGraph, h: list[int], bridge: tuple[int, int]) -> list[int]:
    low = min(range(g.n), key=lambda v: h[v])
    a, c = _split(g, bridge)
    c1, c2 = (a, c) if low in a else (c, a)
    part1 = sorted(c1, key=lambda v: -h[v])  # reversed
    part2 = sorted(c2, key=lambda v: h[v])
    out = [0] * g.n
    for k, v in enumerate(part1 + part2):
        out[v] = k
    if not is_stacking(g, out):
        raise TheoremViolation("bridge reorder broke the stacking")
    return out


def _leaf_reorder(g: BGraph, h: list[int], leaf: int, brs: set) -> list[int] | None:
    # nearest vertex lying on a cycle, and the last edge of the path to it
    from collections import deque

    via: dict[int, tuple[int, int] | None] = {leaf: None}
    queue = deque([leaf])
    anchor = None
    while queue:
        v = queue.popleft()
        if any(eid not in brs for _, eid, _ in g.neighbours(v)):
            anchor = v
            break
        for w, eid, _ in g.neighbours(v):
            if w not in via:
                via[w] = eid
                queue.append(w)
    if anchor is None:
        return None
    path_edge = via[anchor]
    a, c = _split(g, path_edge)
    c1, c2 = (a, c) if leaf in a else (c, a)
    rest2 = sorted((x for x in c2 if x != anchor), key=lambda x: h[x])
    part1 = sorted(c1, key=lambda x: -h[x])
    order = [anchor] + part1 + rest2
    out = [0] * g.n
    for k, x in enumerate(order):
        out[x] = k
    return out if is_stacking(g, out) else None


# ---------------------------------------------------------------------------
# stackable subgroups


@dataclass
class StackableSubgroup:
    graph: BGraph
    words: list
    morphism: Morphism
    stacking: Stacking


def find_stackable_subgroup(g: BGraph, attempts: int = 200, seed: int = 0, max_vertices: int = 40) -> StackableSubgroup:
    """A subgroup of the form ``<[v^a, u^b], [v^c, u^d]>`` with a stackable core.

    ``u`` and ``v`` are random short products of basis loops of ``g``; the
    result comes with a morphism from its core graph into ``g``.
    """
    if not g.is_connected() or g.rank() < 2:
        raise PreconditionError("needs a connected core graph of rank at least two")
    if g.basepoint is None:
        g = g.with_basepoint(0)
    rng = random.Random(f"{seed}:stackable")
    basis = basis_words(g, spanning_tree(g))
    for _ in range(attempts):
        u = _random_product(basis, rng)
        v = _random_product(basis, rng)
        if not u or not v or u == v:
            continue
        a, b, c, d = (rng.randint(1, 2) for _ in range(4))
        if (a, b) == (c, d):
            c += 1
        w1 = commutator(word_power(v, a), word_power(u, b))
        w2 = commutator(word_power(v, c), word_power(u, d))
        if not w1 or not w2:
            continue
        sigma = fold_words([w1, w2], g.letters)
        if sigma.n > max_vertices or not sigma.is_connected() or sigma.rank() < 2:
            continue
        s_core = core(sigma.with_basepoint(None), keep_basepoint=False)
        st = find_stacking(s_core, node_cap=200_000)
        if st is None:
            continue
        maps = enumerate_morphisms(sigma, g, basepointed=True)
        if len(maps) != 1:
            raise TheoremViolation("expected a unique basepointed morphism into g")
        return StackableSubgroup(s_core, [w1, w2], maps[0], st)
    raise CapExceeded(f"no stackable subgroup found in {attempts} attempts")


def _random_product(basis, rng: random.Random):
    k = rng.randint(1, 2)
    parts = []
    for _ in range(k):
        w = rng.choice(basis)
        if rng.random() < 0.5:
            w = tuple((b, -s) for b, s in reversed(w))
        parts.append(w)
    return multiply(*parts)
