"""Right submodules of free modules over the group algebra F_q[F].

Monomials are pairs ``(i, w)`` standing for ``e_i * w``.  Internally a word
is a tuple of symbols: letter ``b`` is symbol ``2b`` and its inverse is
``2b + 1``, so ShortLex on symbol tuples orders ``x < X < y < Y``.

The module covers finite fields of order ``p`` or ``p^2``, Schreier
transversals and Lewin bases of finite-codimension submodules, exploration
step labels computed from truncated spans, and intertwiner counts over
``GL_n(F_q)``.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .bgraph import BGraph, Word, basis_words, letters_for, parse_word, word_to_str
from .errors import CapExceeded, PreconditionError, TheoremViolation

Sym = tuple[int, ...]
Mono = tuple[int, Sym]


# ---------------------------------------------------------------------------
# finite fields


def _factor_prime_power(q: int) -> tuple[int, int]:
    for p in range(2, q + 1):
        if q % p == 0:
            k, x = 0, q
            while x % p == 0:
                x //= p
                k += 1
            if x != 1:
                raise PreconditionError(f"{q} is not a prime power")
            return p, k
    raise PreconditionError(f"{q} is not a prime power")


class GF:
    """The field with ``q = p`` or ``q = p^2`` elements, encoded as ``0..q-1``.

    For ``q = p^2`` the element ``a + b*p`` means ``a + b*theta`` where
    ``theta`` is a root of the first monic irreducible ``t^2 + c1*t + c0``.
    """

    def __init__(self, q: int):
        p, k = _factor_prime_power(q)
        if k > 2:
            raise PreconditionError("only q = p or q = p^2 is supported")
        self.q, self.p, self.k = q, p, k
        self.modulus: tuple[int, int] | None = None
        if k == 1:
            add = [[(a + b) % p for b in range(q)] for a in range(q)]
            mul = [[(a * b) % p for b in range(q)] for a in range(q)]
        else:
            c0, c1 = next(
                (c0, c1)
                for c1 in range(p)
                for c0 in range(p)
                if all((t * t + c1 * t + c0) % p for t in range(p))
            )
            self.modulus = (c0, c1)

            def pair(x):
                return x % p, x // p

            def enc(a, b):
                return a % p + (b % p) * p

            add = [[enc(pair(x)[0] + pair(y)[0], pair(x)[1] + pair(y)[1]) for y in range(q)] for x in range(q)]
            mul = []
            for x in range(q):
                row = []
                a, b = pair(x)
                for y in range(q):
                    c, d = pair(y)
                    # (a + b t)(c + d t) = ac + (ad + bc) t + bd t^2, t^2 = -c1 t - c0
                    bd = b * d
                    row.append(enc(a * c - bd * c0, a * d + b * c - bd * c1))
                mul.append(row)
        self.add_t, self.mul_t = add, mul
        self.neg_t = [next(y for y in range(q) if add[x][y] == 0) for x in range(q)]
        self.inv_t = [0] + [next(y for y in range(q) if mul[x][y] == 1) for x in range(1, q)]

    def add(self, a: int, b: int) -> int:
        return self.add_t[a][b]

    def sub(self, a: int, b: int) -> int:
        return self.add_t[a][self.neg_t[b]]

    def mul(self, a: int, b: int) -> int:
        return self.mul_t[a][b]

    def neg(self, a: int) -> int:
        return self.neg_t[a]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse")
        return self.inv_t[a]

    def parse(self, text) -> int:
        x = int(text)
        if self.k == 1:
            return x % self.p
        if not 0 <= x < self.q:
            raise PreconditionError(f"scalar {x} outside 0..{self.q - 1}")
        return x

    def __repr__(self):
        return f"GF({self.q})"


# ---------------------------------------------------------------------------
# symbol words


def to_sym(word: Word) -> Sym:
    return tuple(2 * b + (0 if s > 0 else 1) for b, s in word)


def from_sym(sym: Sym) -> Word:
    return tuple((x >> 1, 1 if x % 2 == 0 else -1) for x in sym)


def smul(u: Sym, v: Sym) -> Sym:
    k = 0
    while k < len(u) and k < len(v) and u[-1 - k] == v[k] ^ 1:
        k += 1
    return u[: len(u) - k] + v[k:]


def sinv(u: Sym) -> Sym:
    return tuple(x ^ 1 for x in reversed(u))


def mono_key(m: Mono) -> tuple:
    return (len(m[1]), m[0], m[1])


def words_up_to(rank: int, length: int) -> list[Sym]:
    """All reduced words of length at most ``length``, in ShortLex order."""
    out: list[Sym] = [()]
    layer: list[Sym] = [()]
    for _ in range(length):
        nxt = []
        for w in layer:
            for s in range(2 * rank):
                if w and w[-1] == s ^ 1:
                    continue
                nxt.append(w + (s,))
        out.extend(nxt)
        layer = nxt
    return out


def prefix_closure(words: Iterable[Sym]) -> set[Sym]:
    out = set()
    for w in words:
        for k in range(len(w) + 1):
            out.add(w[:k])
    return out


# ---------------------------------------------------------------------------
# module elements


Element = dict  # Mono -> nonzero scalar


def elem_add(field: GF, a: Element, b: Element, scale: int = 1) -> Element:
    out = dict(a)
    for mono, c in b.items():
        c = field.mul(c, scale)
        v = field.add(out.get(mono, 0), c)
        if v:
            out[mono] = v
        else:
            out.pop(mono, None)
    return out


def elem_times_word(a: Element, u: Sym) -> Element:
    return {(i, smul(w, u)): c for (i, w), c in a.items()}


def elem_scale(field: GF, a: Element, c: int) -> Element:
    if c == 0:
        return {}
    return {m: field.mul(v, c) for m, v in a.items()}


@dataclass
class FqModule:
    """A right submodule of ``K[R]^m`` given by generators.

    ``rank`` is the number of free generators of the ring ``R``.  When ``R``
    is a subgroup ``H`` of an ambient free group, ``embedding`` lists the
    ambient words of its basis.
    """

    field: GF
    m: int
    rank: int
    generators: list[Element]
    letter_names: tuple[str, ...] = ()
    embedding: list[Word] | None = None
    ambient_letters: tuple[str, ...] | None = None

    def __post_init__(self):
        self.generators = [g for g in self.generators if g]
        if not self.letter_names:
            self.letter_names = tuple("abcdefgh"[: self.rank]) if self.embedding else tuple("xyzwuvst"[: self.rank])
        for g in self.generators:
            for (i, w) in g:
                if not 0 <= i < self.m:
                    raise PreconditionError("basis index out of range")
                if any(s >= 2 * self.rank for s in w):
                    raise PreconditionError("word uses a letter outside the ring")

    @property
    def q(self) -> int:
        return self.field.q

    def max_length(self) -> int:
        return max((len(w) for g in self.generators for (_, w) in g), default=0)

    def to_ambient(self) -> "FqModule":
        """The same generators read in ``K[F]^m`` through the embedding."""
        if self.embedding is None:
            return self
        images = [to_sym(w) for w in self.embedding]
        gens = []
        for g in self.generators:
            new: Element = {}
            for (i, w), c in g.items():
                u: Sym = ()
                for s in w:
                    img = images[s >> 1]
                    u = smul(u, img if s % 2 == 0 else sinv(img))
                new = elem_add(self.field, new, {(i, u): c})
            gens.append(new)
        return FqModule(self.field, self.m, len(self.ambient_letters), gens, self.ambient_letters)

    def to_json(self) -> dict:
        ring = "F" if self.embedding is None else {
            "H": [word_to_str(w, self.ambient_letters) for w in self.embedding]
        }
        gens = []
        for g in self.generators:
            gens.append(
                [[word_to_str(from_sym(w), self.letter_names) if w else "", i + 1, str(c)] for (i, w), c in sorted(g.items(), key=lambda kv: mono_key(kv[0]))]
            )
        out = {"q": self.q, "m": self.m, "ring": ring, "generators": gens}
        if self.embedding is None:
            out["letters"] = list(self.letter_names)
        else:
            out["letters"] = list(self.ambient_letters)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "FqModule":
        field_ = GF(int(data["q"]))
        m = int(data["m"])
        ring = data.get("ring", "F")
        raw = data["generators"]
        if ring == "F":
            letters = tuple(data.get("letters") or letters_for(t[0] for g in raw for t in g))
            embedding, ambient = None, None
            names = letters
        else:
            hw = ring["H"]
            ambient = tuple(data.get("letters") or letters_for(hw))
            embedding = [parse_word(w, ambient) for w in hw]
            names = tuple("abcdefgh"[: len(hw)])
        gens = []
        for g in raw:
            el: Element = {}
            for word, idx, scalar in g:
                mono = (int(idx) - 1, to_sym(parse_word(word, names)))
                el = elem_add(field_, el, {mono: field_.parse(scalar)})
            gens.append(el)
        return cls(field_, m, len(names), gens, names, embedding, ambient)


# ---------------------------------------------------------------------------
# Gaussian elimination with pivots at the highest-priority column


class Echelon:
    """Row echelon form; each row's pivot is its highest-priority column.

    ``priority`` maps a column to an integer; larger means eliminated first.
    Rows may carry a combination vector that is updated alongside.
    """

    def __init__(self, field: GF, priority):
        self.field = field
        self.priority = priority
        self.rows: dict = {}
        self.combos: dict = {}

    def __len__(self):
        return len(self.rows)

    def reduce(self, vec: Element, combo: Element | None = None) -> tuple[Element, Element]:
        f = self.field
        v = dict(vec)
        cmb = dict(combo or {})
        pr = self.priority
        heap = [(-pr(c), c) for c in v]
        heapq.heapify(heap)
        done = set()
        while heap:
            _, c = heapq.heappop(heap)
            if c in done or c not in v:
                continue
            done.add(c)
            row = self.rows.get(c)
            if row is None:
                continue
            coef = v[c]
            neg = f.neg(coef)
            for col, val in row.items():
                nv = f.add(v.get(col, 0), f.mul(neg, val))
                if nv:
                    if col not in v:
                        heapq.heappush(heap, (-pr(col), col))
                    v[col] = nv
                else:
                    v.pop(col, None)
            for key, val in self.combos[c].items():
                nv = f.add(cmb.get(key, 0), f.mul(coef, val))
                if nv:
                    cmb[key] = nv
                else:
                    cmb.pop(key, None)
        return v, cmb

    def add(self, vec: Element, combo: Element | None = None) -> Element | None:
        """Insert ``vec``; returns the stored row or None when dependent."""
        v, cmb = self.reduce(vec)
        if not v:
            return None
        pivot = max(v, key=self.priority)
        inv = self.field.inv(v[pivot])
        row = {c: self.field.mul(x, inv) for c, x in v.items()}
        # combo tracks how the stored row is written in terms of inserted items
        base = dict(combo or {})
        neg_cmb = {k: self.field.neg(x) for k, x in cmb.items()}
        full = elem_add(self.field, base, neg_cmb)
        self.rows[pivot] = row
        self.combos[pivot] = {k: self.field.mul(x, inv) for k, x in full.items()}
        return row


# ---------------------------------------------------------------------------
# truncated spans


def translates_within(module: FqModule, region: set[Mono], radius_hint: Sequence[Sym] | None = None) -> list[Element]:
    """All ``g * u`` (``g`` a generator) whose support lies inside ``region``."""
    by_coord: dict[int, list[Sym]] = {}
    for i, w in region:
        by_coord.setdefault(i, []).append(w)
    out = []
    seen = set()
    for gi, g in enumerate(module.generators):
        (i0, w0) = min(g, key=mono_key)
        inv0 = sinv(w0)
        for v in by_coord.get(i0, []):
            u = smul(inv0, v)
            if (gi, u) in seen:
                continue
            seen.add((gi, u))
            t = elem_times_word(g, u)
            if all(m in region for m in t):
                out.append(t)
    return out


def ball(forest: Iterable[Mono], radius: int, rank: int) -> set[Mono]:
    region = set(forest)
    frontier = list(region)
    for _ in range(radius):
        nxt = []
        for i, w in frontier:
            for s in range(2 * rank):
                m = (i, smul(w, (s,)))
                if m not in region:
                    region.add(m)
                    nxt.append(m)
        frontier = nxt
    return region


# ---------------------------------------------------------------------------
# Schreier transversals and Lewin bases


@dataclass
class SchreierTransversal:
    monomials: list[Mono]
    phi: dict[Mono, dict[int, int]]  # boundary monomial -> coordinates over the transversal
    rho: list[list[list[int]]]  # one |T| x |T| matrix per ring letter
    radius: int

    @property
    def size(self) -> int:
        return len(self.monomials)

    def boundary(self, m: int) -> list[Mono]:
        tset = set(self.monomials)
        out = [(i, ()) for i in range(m) if (i, ()) not in tset]
        for t in self.monomials:
            for b in range(len(self.rho)):
                tb = (t[0], smul(t[1], (2 * b,)))
                if tb not in tset:
                    out.append(tb)
        return out


def _vec_mat(field: GF, vec: list[int], mat: list[list[int]]) -> list[int]:
    n = len(mat[0]) if mat else 0
    out = [0] * n
    for i, c in enumerate(vec):
        if c:
            row = mat[i]
            for j in range(n):
                if row[j]:
                    out[j] = field.add(out[j], field.mul(c, row[j]))
    return out


def codim_and_transversal(module: FqModule, cap: int = 64, max_radius: int = 8) -> tuple[int, SchreierTransversal]:
    """Codimension of the submodule and a Schreier transversal.

    The span of generator translates inside a ball of radius ``R`` is
    eliminated with the largest ShortLex monomial as pivot.  Monomials are
    then taken greedily in ShortLex order whenever the parent is already in
    the transversal and the normal form is independent.  The result is
    accepted once the induced action on the transversal is by invertible
    matrices and kills every generator, which certifies the codimension
    exactly; otherwise ``R`` grows.
    """
    f = module.field
    r, m = module.rank, module.m
    start = max(1, module.max_length())
    for R in range(start, max_radius + 1):
        words = words_up_to(r, R)
        monos = sorted(((i, w) for w in words for i in range(m)), key=mono_key)
        rank_of = {mono: k for k, mono in enumerate(monos)}
        region = set(monos)
        span = Echelon(f, rank_of.__getitem__)
        for t in translates_within(module, region):
            span.add(t)
        tech = Echelon(f, rank_of.__getitem__)
        T: list[Mono] = []
        tset: set[Mono] = set()
        for mono in monos:
            i, w = mono
            if len(w) >= R:
                break
            if w and (i, w[:-1]) not in tset:
                continue
            nf, _ = span.reduce({mono: 1})
            if not nf:
                continue
            if tech.add(nf, {len(T): 1}) is None:
                continue
            T.append(mono)
            tset.add(mono)
            if len(T) > cap:
                raise CapExceeded(f"codimension exceeds cap {cap} (possibly infinite)")
        tindex = {t: k for k, t in enumerate(T)}

        def express(mono: Mono) -> dict[int, int] | None:
            if mono in tindex:
                return {tindex[mono]: 1}
            if mono not in rank_of:
                return None
            nf, _ = span.reduce({mono: 1})
            if not nf:
                return {}
            resid, combo = tech.reduce(nf)
            if resid:
                return None
            return combo

        phi: dict[Mono, dict[int, int]] = {}
        ok = True
        for i in range(m):
            if (i, ()) not in tset:
                c = express((i, ()))
                if c is None:
                    ok = False
                    break
                phi[(i, ())] = c
        rho = []
        if ok:
            for b in range(r):
                mat = []
                for t in T:
                    tb = (t[0], smul(t[1], (2 * b,)))
                    c = express(tb)
                    if c is None:
                        ok = False
                        break
                    if tb not in tset:
                        phi[tb] = c
                    row = [0] * len(T)
                    for k, x in c.items():
                        row[k] = x
                    mat.append(row)
                if not ok:
                    break
                rho.append(mat)
        if not ok:
            continue
        inverses = []
        for mat in rho:
            inv = mat_inverse(f, mat) if T else []
            if inv is None:
                ok = False
                break
            inverses.append(inv)
        if not ok:
            continue
        st = SchreierTransversal(T, phi, rho, R)
        if all(not any(_psi(f, st, inverses, m, g)) for g in module.generators):
            return len(T), st
    raise CapExceeded(f"no certified transversal up to radius {max_radius}")


def _psi(field: GF, st: SchreierTransversal, inverses, m: int, g: Element) -> list[int]:
    n = st.size
    tindex = {t: k for k, t in enumerate(st.monomials)}
    total = [0] * n
    for (i, w), c in g.items():
        root = (i, ())
        if root in tindex:
            vec = [0] * n
            vec[tindex[root]] = 1
        else:
            vec = [0] * n
            for k, x in st.phi[root].items():
                vec[k] = x
        for s in w:
            vec = _vec_mat(field, vec, st.rho[s >> 1] if s % 2 == 0 else inverses[s >> 1]) if n else vec
        for k in range(n):
            if vec[k]:
                total[k] = field.add(total[k], field.mul(c, vec[k]))
    return total


def lewin_basis(module: FqModule, st: SchreierTransversal) -> list[Element]:
    """``f - phi(f)`` for every ``f`` in the boundary of the transversal."""
    f = module.field
    out = []
    for b in st.boundary(module.m):
        el = {b: 1}
        for k, x in st.phi[b].items():
            el = elem_add(f, el, {st.monomials[k]: f.neg(x)})
        out.append(el)
    return out


def module_rank(module: FqModule, cap: int = 64) -> int:
    """Rank via the Schreier formula ``m + codim * (rank - 1)``; checked against the Lewin basis size."""
    c, st = codim_and_transversal(module, cap)
    basis = lewin_basis(module, st)
    expected = module.m + c * (module.rank - 1)
    if len(basis) != expected:
        raise TheoremViolation(f"Lewin basis has {len(basis)} elements, Schreier formula gives {expected}")
    return len(basis)


def reduced_rank(module: FqModule, cap: int = 64) -> int:
    """``max(0, rk(M) - m)``, that is ``-chi`` of the quotient when positive."""
    return max(0, module_rank(module, cap) - module.m)


@dataclass
class CoordinateReduction:
    reduced: FqModule
    kept: list[int]
    dropped: list[int]
    rank_full: int
    rank_reduced: int


def reduce_coordinates(module: FqModule, cap: int = 64) -> CoordinateReduction:
    """Restrict to the coordinates touched by a Schreier transversal.

    The remaining coordinates each contribute one basis element of the form
    ``e_s - phi(e_s)``, so ``rk(N) = rk(N^R) + |S|``; both sides are computed
    independently and compared.
    """
    c, st = codim_and_transversal(module, cap)
    kept = sorted({i for i, _ in st.monomials})
    dropped = [i for i in range(module.m) if i not in kept]
    renum = {i: k for k, i in enumerate(kept)}
    # boundary elements t*b - phi(t*b) live on kept coordinates; e_s - phi(e_s) are dropped
    gens = []
    for b in st.boundary(module.m):
        if b[1] == ():
            continue
        el = {(renum[b[0]], b[1]): 1}
        for k, x in st.phi[b].items():
            i, w = st.monomials[k]
            el = elem_add(module.field, el, {(renum[i], w): module.field.neg(x)})
        gens.append(el)
    reduced = FqModule(module.field, len(kept), module.rank, gens, module.letter_names)
    rank_full = module_rank(module, cap)
    rank_reduced = module_rank(reduced, cap) if kept else 0
    if rank_full != rank_reduced + len(dropped):
        raise TheoremViolation(f"rk(N) = {rank_full} but rk(N^R) + |S| = {rank_reduced} + {len(dropped)}")
    return CoordinateReduction(reduced, kept, dropped, rank_full, rank_reduced)


# ---------------------------------------------------------------------------
# representations and M_beta


def mat_identity(n: int) -> list[list[int]]:
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def mat_mul(field: GF, a, b) -> list[list[int]]:
    n, k, m = len(a), len(b), len(b[0]) if b else 0
    out = [[0] * m for _ in range(n)]
    for i in range(n):
        ai = a[i]
        oi = out[i]
        for l in range(k):
            x = ai[l]
            if x:
                bl = b[l]
                for j in range(m):
                    if bl[j]:
                        oi[j] = field.add(oi[j], field.mul(x, bl[j]))
    return out


def mat_inverse(field: GF, a) -> list[list[int]] | None:
    n = len(a)
    aug = [list(row) + [1 if i == j else 0 for j in range(n)] for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col]), None)
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = field.inv(aug[col][col])
        aug[col] = [field.mul(inv, x) for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                c = field.neg(aug[r][col])
                aug[r] = [field.add(x, field.mul(c, y)) for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def mat_rank(field: GF, rows: Sequence[Sequence[int]]) -> int:
    return len(_rref(field, rows)[0])


def _rref(field: GF, rows: Sequence[Sequence[int]]) -> tuple[list[list[int]], list[int]]:
    a = [list(r) for r in rows]
    if not a:
        return [], []
    ncols = len(a[0])
    pivots = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(a)) if a[i][col]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = field.inv(a[r][col])
        a[r] = [field.mul(inv, x) for x in a[r]]
        for i in range(len(a)):
            if i != r and a[i][col]:
                c = field.neg(a[i][col])
                a[i] = [field.add(x, field.mul(c, y)) for x, y in zip(a[i], a[r])]
        pivots.append(col)
        r += 1
        if r == len(a):
            break
    return a[:r], pivots


def nullspace(field: GF, rows: Sequence[Sequence[int]], ncols: int) -> list[list[int]]:
    red, pivots = _rref(field, rows) if rows else ([], [])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        v = [0] * ncols
        v[fc] = 1
        for row, pc in zip(red, pivots):
            if row[fc]:
                v[pc] = field.neg(row[fc])
        basis.append(v)
    return basis


def general_linear(field: GF, n: int, cap: int = 200_000) -> list[tuple[tuple[int, ...], ...]]:
    out = []
    q = field.q
    if q ** (n * n) > 50 * cap:
        raise CapExceeded(f"GL_{n}(F_{q}) enumeration too large")
    for entries in itertools.product(range(q), repeat=n * n):
        mat = [entries[i * n : (i + 1) * n] for i in range(n)]
        if mat_rank(field, mat) == n:
            out.append(tuple(tuple(r) for r in mat))
    return out


def random_invertible(field: GF, n: int, rng: random.Random) -> list[list[int]]:
    """Uniform element of ``GL_n(F_q)`` by rejection sampling."""
    while True:
        mat = [[rng.randrange(field.q) for _ in range(n)] for _ in range(n)]
        if mat_rank(field, mat) == n:
            return mat


def word_matrix(field: GF, images: Sequence, word: Word, n: int) -> list[list[int]]:
    """``images[b1]^{s1} images[b2]^{s2} ...`` for ``word``."""
    out = mat_identity(n)
    inv_cache: dict[int, list[list[int]]] = {}
    for b, s in word:
        m = images[b]
        if s < 0:
            if b not in inv_cache:
                inv_cache[b] = mat_inverse(field, m)
            m = inv_cache[b]
        out = mat_mul(field, out, m)
    return out


@dataclass
class Rep:
    """A homomorphism from ``H`` (free on ``basis``) to ``GL_d(F_q)``."""

    field: GF
    letters: tuple[str, ...]
    basis: list[Word]
    images: list[list[list[int]]]

    def __post_init__(self):
        if len(self.basis) != len(self.images):
            raise PreconditionError("one image per basis word")
        for img in self.images:
            if mat_inverse(self.field, img) is None:
                raise PreconditionError("images must be invertible")

    @property
    def d(self) -> int:
        return len(self.images[0]) if self.images else 0


def m_beta(rep: Rep) -> FqModule:
    """``nu(h, i) = e_i h - sum_j beta(h)_ij e_j`` over ``K[H]^d``, ``h`` in the basis."""
    f = rep.field
    gens = []
    for k, img in enumerate(rep.images):
        for i in range(rep.d):
            el = {(i, (2 * k,)): 1}
            for j in range(rep.d):
                if img[i][j]:
                    el = elem_add(f, el, {(j, ()): f.neg(img[i][j])})
            gens.append(el)
    return FqModule(f, rep.d, len(rep.basis), gens, embedding=list(rep.basis), ambient_letters=rep.letters)


def m_beta_ambient(rep: Rep) -> FqModule:
    """The same generators as elements of ``K[F]^d``."""
    return m_beta(rep).to_ambient()


# ---------------------------------------------------------------------------
# explorations


@dataclass
class ExplorationReport:
    labels: list[str]
    radius: int
    saturated: bool

    @property
    def coincidences(self) -> int:
        return self.labels.count("coincidence")


def _validate_exploration(forest: Sequence[Mono], rank: int) -> list[tuple[Mono, int]] | None:
    exposed: set[Mono] = set()
    seen_coords: set[int] = set()
    steps: list = []
    for v in forest:
        if v in exposed:
            raise PreconditionError("order repeats a vertex")
        i, w = v
        if i not in seen_coords:
            steps.append((None, None))
            seen_coords.add(i)
        else:
            found = None
            for s in range(2 * rank):
                u = (i, smul(w, (s,)))
                if u in exposed:
                    found = (u, s ^ 1)  # edge u --(s^1)--> v
                    break
            if found is None:
                raise PreconditionError(f"vertex {v} is not adjacent to an exposed vertex")
            steps.append(found)
        exposed.add(v)
    return steps


def _classify_once(module: FqModule, order: list[Mono], steps, radius: int):
    f = module.field
    r = module.rank
    forest = set(order)
    region = ball(order, radius, r)
    vecs = translates_within(module, region)
    pos = {v: k for k, v in enumerate(order)}
    big = len(order) + 1
    outside = sorted(region - forest, key=mono_key)
    outside_rank = {m: big + k for k, m in enumerate(outside)}

    def prio(c):
        return pos[c] if c in pos else outside_rank[c]

    ech = Echelon(f, prio)
    for v in vecs:
        ech.add(v)
    pivots = {c for c in ech.rows if c in pos}
    labels = []
    exposed: list[Mono] = []
    for t, v in enumerate(order):
        exposed.append(v)
        u, b = steps[t]
        forced = False
        if u is not None:
            ex = set(exposed)
            dset = {x for x in ex if (x[0], smul(x[1], (b,))) in ex}
            forced = _has_support(f, vecs, region, dset, u)
        if forced:
            labels.append("forced")
        elif v in pivots:
            labels.append("coincidence")
        else:
            labels.append("free")
    return labels, len(pivots)


def _has_support(field: GF, vecs: list[Element], region: set[Mono], allowed: set[Mono], target: Mono) -> bool:
    """Does ``span(vecs) ∩ K^allowed`` contain an element with ``target`` in its support?"""
    others = sorted(region - allowed, key=mono_key)
    inner = sorted(allowed - {target}, key=mono_key)
    rank = {m: k for k, m in enumerate(inner)}
    rank[target] = len(inner)
    base = len(inner) + 1
    for k, m in enumerate(others):
        rank[m] = base + k
    ech = Echelon(field, rank.__getitem__)
    for v in vecs:
        ech.add(v)
    return target in ech.rows


def classify_exploration(module: FqModule, forest: Iterable[Mono], order: Sequence[Mono] | None = None, max_radius: int = 4) -> ExplorationReport:
    """Label each exposure step as free, forced or a coincidence.

    Intersections ``N ∩ K^S`` are computed from generator translates inside
    a ball around the forest.  The ball grows until two consecutive radii
    give the same labels and span dimension; ``saturated`` records whether
    that happened within ``max_radius``.
    """
    forest = set(forest)
    if order is None:
        order = sorted(forest, key=mono_key)
    order = list(order)
    if set(order) != forest:
        raise PreconditionError("order must list the forest exactly")
    steps = _validate_exploration(order, module.rank)
    history = []
    for radius in range(1, max_radius + 1):
        history.append(_classify_once(module, order, steps, radius))
        if len(history) >= 2 and history[-1] == history[-2]:
            return ExplorationReport(history[-1][0], radius, True)
    return ExplorationReport(history[-1][0], max_radius, False)


def is_efficient(module: FqModule, max_radius: int = 4) -> tuple[bool, int]:
    """``N ∩ span(E_m) = 0`` judged from truncated spans; returns (efficient, radius).

    A hit is a proof of inefficiency.  No hit up to ``max_radius`` is
    evidence only.
    """
    f = module.field
    base = {(i, ()) for i in range(module.m)}
    support = {mono for g in module.generators for mono in g}
    forest = base | {(i, w[:k]) for (i, w) in support for k in range(len(w) + 1)}
    for radius in range(0, max_radius + 1):
        region = ball(forest, radius, module.rank)
        vecs = translates_within(module, region)
        others = sorted(region - base, key=mono_key)
        rank = {m: k for k, m in enumerate(sorted(base, key=mono_key))}
        for k, m in enumerate(others):
            rank[m] = len(base) + k
        ech = Echelon(f, rank.__getitem__)
        for v in vecs:
            ech.add(v)
        if any(c in base for c in ech.rows):
            return False, radius
    return True, max_radius


def rank_by_exploration(module: FqModule, forest: Iterable[Mono], max_radius: int = 4) -> tuple[int, ExplorationReport]:
    """Rank of a module generated on ``forest`` as the number of coincidences."""
    rep = classify_exploration(module, forest, max_radius=max_radius)
    return rep.coincidences, rep


# ---------------------------------------------------------------------------
# intertwiners over GL_n(F_q)


def inter_solution_space(field: GF, alpha_h: Sequence, beta_h: Sequence, d: int, n: int) -> list[list[int]]:
    """Basis of ``{M in K^{d x n} : M alpha(h) = beta(h) M}`` (row-major vectors)."""
    rows = []
    for A, Bm in zip(alpha_h, beta_h):
        for k in range(d):
            for j in range(n):
                row = [0] * (d * n)
                for l in range(n):
                    if A[l][j]:
                        row[k * n + l] = field.add(row[k * n + l], A[l][j])
                for mm in range(d):
                    if Bm[k][mm]:
                        row[mm * n + j] = field.add(row[mm * n + j], field.neg(Bm[k][mm]))
                if any(row):
                    rows.append(row)
    return nullspace(field, rows, d * n)


def inter_count(field: GF, alpha_h: Sequence, beta_h: Sequence, d: int, n: int, enum_cap: int = 1 << 20) -> tuple[int, int]:
    """``(|Inter|, |injective Inter|)`` for one pair of representations.

    ``alpha_h`` and ``beta_h`` are the images of a basis of ``H``.  Injective
    solutions (rank ``d``) are counted by enumerating the solution space.
    """
    basis = inter_solution_space(field, alpha_h, beta_h, d, n)
    q = field.q
    total = q ** len(basis)
    if total > enum_cap:
        raise CapExceeded(f"solution space of size {total} too large to enumerate")
    inj = 0
    for coeffs in itertools.product(range(q), repeat=len(basis)):
        vec = [0] * (d * n)
        for c, bv in zip(coeffs, basis):
            if c:
                for k in range(d * n):
                    if bv[k]:
                        vec[k] = field.add(vec[k], field.mul(c, bv[k]))
        mat = [vec[k * n : (k + 1) * n] for k in range(d)]
        if mat_rank(field, mat) == d:
            inj += 1
    return total, inj


def expected_inter(
    g: BGraph,
    rep: Rep,
    n: int,
    mode: str = "exhaustive",
    samples: int = 200,
    seed: int = 0,
    cap: int = 10**6,
) -> tuple[Fraction, Fraction] | tuple[float, float]:
    """Average of ``(|Inter|, |Inter^inj|)`` over ``alpha`` in ``Hom(F, GL_n(F_q))``.

    ``rep.basis`` must be the basis of ``g`` returned by :func:`basis_words`.
    """
    f = rep.field
    words = basis_words(g)
    if [tuple(w) for w in words] != [tuple(w) for w in rep.basis]:
        raise PreconditionError("rep basis must match the graph's spanning-tree basis")
    used = sorted(g.letter_support())
    nl = len(g.letters)
    d = rep.d
    glist = general_linear(f, n)
    if mode == "exhaustive":
        if len(glist) ** len(used) > cap:
            raise CapExceeded(f"{len(glist) ** len(used)} assignments exceed cap {cap}")
        tot = inj = 0
        count = 0
        for combo in itertools.product(glist, repeat=len(used)):
            imgs: list = [mat_identity(n)] * nl
            for b, m in zip(used, combo):
                imgs[b] = m
            ah = [word_matrix(f, imgs, w, n) for w in words]
            a, bq = inter_count(f, ah, rep.images, d, n)
            tot += a
            inj += bq
            count += 1
        return Fraction(tot, count), Fraction(inj, count)
    if mode == "mc":
        rng = random.Random(f"{seed}:expected-inter:{n}")
        tot = inj = 0
        for _ in range(samples):
            imgs = [mat_identity(n)] * nl
            for b in used:
                imgs[b] = rng.choice(glist)
            ah = [word_matrix(f, imgs, w, n) for w in words]
            a, bq = inter_count(f, ah, rep.images, d, n)
            tot += a
            inj += bq
        return tot / samples, inj / samples
    raise PreconditionError(f"unknown mode {mode!r}")


def subspaces(field: GF, n: int, d: int) -> list[list[list[int]]]:
    """All ``d``-dimensional subspaces of ``K^n`` as RREF bases."""
    out = []
    q = field.q
    for pivots in itertools.combinations(range(n), d):
        free_slots = [(r, c) for r, p in enumerate(pivots) for c in range(p + 1, n) if c not in pivots]
        for vals in itertools.product(range(q), repeat=len(free_slots)):
            rows = [[0] * n for _ in range(d)]
            for r, p in enumerate(pivots):
                rows[r][p] = 1
            for (r, c), v in zip(free_slots, vals):
                rows[r][c] = v
            out.append(rows)
    return out


def _in_rowspace(field: GF, rref_rows: list[list[int]], pivots: list[int], vec: list[int]) -> bool:
    v = list(vec)
    for row, p in zip(rref_rows, pivots):
        if v[p]:
            c = field.neg(v[p])
            v = [field.add(x, field.mul(c, y)) for x, y in zip(v, row)]
    return not any(v)


def _conj_orbits(field: GF, glist, tuples: list[tuple]) -> list[tuple[tuple, int]]:
    n = len(glist[0])
    pairs = [(m, tuple(tuple(r) for r in mat_inverse(field, [list(x) for x in m]))) for m in glist]
    seen: set = set()
    reps = []
    for t in tuples:
        if t in seen:
            continue
        orbit = set()
        for g, gi in pairs:
            orbit.add(tuple(tuple(tuple(r) for r in mat_mul(field, mat_mul(field, gi, x), g)) for x in t))
        seen |= orbit
        reps.append((t, len(orbit)))
    return reps


def grassmann_fixed_bruteforce(g: BGraph, n: int, q: int, d: int) -> Fraction:
    """Expected number of ``alpha(H)``-invariant ``d``-subspaces of ``F_q^n``, two ways.

    Route one: ``(1/|GL_d|) sum_beta E_alpha |Inter^inj(alpha, beta)|``, with
    ``alpha`` grouped into simultaneous-conjugacy orbits.  Route two checks
    every subspace against every ``alpha`` directly.  They must agree.
    """
    f = GF(q)
    words = basis_words(g)
    used = sorted(g.letter_support())
    nl = len(g.letters)
    gl_n = general_linear(f, n)
    gl_d = general_linear(f, d)
    alphas = list(itertools.product(gl_n, repeat=len(used)))
    if len(alphas) > 200_000:
        raise CapExceeded("too many assignments for exhaustive enumeration")

    def images(combo):
        imgs: list = [mat_identity(n)] * nl
        for b, m in zip(used, combo):
            imgs[b] = [list(r) for r in m]
        return [word_matrix(f, imgs, w, n) for w in words]

    # route one: intertwiners
    betas = list(itertools.product(gl_d, repeat=len(words)))
    total_inj = 0
    for combo, weight in _conj_orbits(f, gl_n, alphas):
        ah = images(combo)
        for beta in betas:
            _, inj = inter_count(f, ah, [[list(r) for r in m] for m in beta], d, n)
            total_inj += weight * inj
    route_inter = Fraction(total_inj, len(alphas) * len(gl_d))

    # route two: subspaces
    spaces = [(s, _rref(f, s)[1]) for s in subspaces(f, n, d)]
    total = 0
    for combo in alphas:
        ah = images(combo)
        for rows, piv in spaces:
            if all(_in_rowspace(f, rows, piv, mat_mul(f, [row], A)[0]) for A in ah for row in rows):
                total += 1
    route_direct = Fraction(total, len(alphas))
    if route_inter != route_direct:
        raise TheoremViolation(f"Grassmann routes disagree: {route_inter} vs {route_direct}")
    return route_direct


def gaussian_binomial(n: int, d: int, q: int) -> int:
    num = den = 1
    for k in range(d):
        num *= q ** (n - k) - 1
        den *= q ** (k + 1) - 1
    return num // den


# ---------------------------------------------------------------------------
# probes


@dataclass
class ProbeReport:
    value: Fraction | None
    method: str
    certificate: dict = field(default_factory=dict)
    certified: int = 0
    skipped: int = 0
    candidates: int = 0
    min_rank: int | None = None


def sbarpi_q_probe(
    g: BGraph,
    d: int,
    q: int = 2,
    max_radius: int = 3,
    support_cap: int = 6,
) -> ProbeReport:
    """Upper bound on the stable q-compressed rank from small overmodules.

    For each ``beta`` (up to conjugacy) the candidates are ``N = M_beta^F +
    f K[F]`` with ``f`` supported on ``E_d`` times the prefix tree of the
    basis of ``H``.  Efficient candidates (``E_d`` independent modulo ``N``)
    have their rank counted by an exploration of that forest.  When the
    rank of ``H`` exceeds one, every certified rank must be at least ``2d``.
    """
    f = GF(q)
    words = basis_words(g)
    r_h = len(words)
    letters = g.letters
    tree = sorted(prefix_closure(to_sym(w) for w in words), key=lambda w: (len(w), w))
    forest = [(i, w) for w in tree for i in range(d)]
    if len(forest) > support_cap:
        raise CapExceeded(f"support of {len(forest)} monomials exceeds cap {support_cap}")
    gl_d = general_linear(f, d)
    betas = _conj_orbits(f, gl_d, list(itertools.product(gl_d, repeat=r_h))) if r_h else [((), 1)]
    best: tuple | None = None
    certified = skipped = candidates = 0
    min_rank = None
    for beta, _ in betas:
        rep = Rep(f, letters, words, [[list(r) for r in m] for m in beta])
        base = m_beta_ambient(rep)
        extras: list[Element | None] = [None]
        for vals in itertools.product(range(q), repeat=len(forest)):
            if not any(vals):
                continue
            lead = next(v for v in vals if v)
            if lead != 1:
                continue
            extras.append({mono: v for mono, v in zip(forest, vals) if v})
        for extra in extras:
            candidates += 1
            gens = list(base.generators) + ([extra] if extra else [])
            mod = FqModule(f, d, len(letters), gens, letters)
            eff, _ = is_efficient(mod, max_radius)
            if not eff:
                continue
            rk, rep_x = rank_by_exploration(mod, forest, max_radius)
            if not rep_x.saturated:
                skipped += 1
                continue
            certified += 1
            if min_rank is None or rk < min_rank:
                min_rank = rk
            if r_h > 1 and rk < 2 * d:
                raise TheoremViolation(f"efficient overmodule of rank {rk} < 2d = {2 * d}")
            key = (rk, extra is not None)
            if best is None or key < best[0]:
                best = (key, beta, extra)
    if best is None:
        return ProbeReport(None, "upper-bound", {}, certified, skipped, candidates, None)
    (rk, _), beta, extra = best
    cert = {
        "beta": [[list(r) for r in m] for m in beta],
        "extra": None if extra is None else [
            [word_to_str(from_sym(w), letters) if w else "", i + 1, str(c)] for (i, w), c in sorted(extra.items(), key=lambda kv: mono_key(kv[0]))
        ],
        "rank": rk,
    }
    return ProbeReport(Fraction(rk, d) - 1, "upper-bound", cert, certified, skipped, candidates, min_rank)


@dataclass
class KHNCReport:
    rank_h: int
    rank_m: int
    rank_intersection: int
    codim_m: int
    codim_intersection: int
    lhs: Fraction
    rhs: Fraction

    @property
    def slack(self) -> Fraction:
        return self.rhs - self.lhs


def khnc_probe(h_words: Sequence[Word], module: FqModule, cap: int = 64) -> KHNCReport:
    """Both sides of the q-analogue of the Hanna Neumann inequality.

    ``module`` is a finite-codimension submodule of ``K[F]^d``.  The
    intersection with ``K[H]^d`` has codimension equal to the dimension of
    the span of the images of ``E_d`` under ``H``, and both ranks follow
    from the Schreier formula.  Nothing is asserted.
    """
    f = module.field
    d = module.m
    r = module.rank
    c, st = codim_and_transversal(module, cap)
    inverses = [mat_inverse(f, m) for m in st.rho]
    h_mats = []
    for w in h_words:
        mat = mat_identity(c)
        for b, s in w:
            mat = mat_mul(f, mat, st.rho[b] if s > 0 else inverses[b])
        h_mats.append(mat)
    tindex = {t: k for k, t in enumerate(st.monomials)}
    start = []
    for i in range(d):
        vec = [0] * c
        if (i, ()) in tindex:
            vec[tindex[(i, ())]] = 1
        else:
            for k, x in st.phi[(i, ())].items():
                vec[k] = x
        start.append(vec)
    # Krylov closure of the start vectors under the H images
    basis_rows: list[list[int]] = []
    queue = list(start)
    while queue:
        v = queue.pop()
        if mat_rank(f, basis_rows + [v]) > len(basis_rows):
            basis_rows.append(v)
            for mat in h_mats:
                queue.append(_vec_mat(f, v, mat))
    c_int = len(basis_rows)
    r_h = len(h_words)
    rank_m = d + c * (r - 1)
    rank_int = d + c_int * (r_h - 1)
    lhs = Fraction(rank_int, d) - 1
    rhs = (Fraction(rank_m, d) - 1) * (r_h - 1)
    return KHNCReport(r_h, rank_m, rank_int, c, c_int, lhs, rhs)


def augmentation_module(field: GF, coset_graph: BGraph) -> FqModule:
    """Kernel of ``K[F] -> K[J\\F]`` for a finite-index ``J`` given by its covering graph.

    Generated by ``t_v b - t_{v b}`` over vertices ``v`` and letters ``b``
    together with ``e - t_root``, where ``t_v`` is the tree path to ``v``.
    """
    from .bgraph import spanning_tree

    tree = spanning_tree(coset_graph)
    paths = {v: to_sym(p) for v, p in tree.paths.items()}
    gens = []
    for b, lst in enumerate(coset_graph.edges):
        for s, t in lst:
            lhs = smul(paths[s], (2 * b,))
            rhs = paths[t]
            if lhs != rhs:
                gens.append(elem_add(field, {(0, lhs): 1}, {(0, rhs): field.neg(1)}))
    return FqModule(field, 1, len(coset_graph.letters), gens, coset_graph.letters)
