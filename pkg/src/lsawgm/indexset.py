"""Trees, multitrees, completion and the stable-expansion / cone constructions.

Tensor indices are stored as packed int64 keys: each coordinate's 1D code
(see ``basis1d.WaveletBasis.code``) occupies a fixed bit field, time code in
the most significant field.  Sorting keys therefore sorts lexicographically by
(time code, space codes...), and a code orders by (level, kind, translation).

The tree test works on dyadic cells: a function of level j is supported on a
union of cells of width 2^-(j+1); it is covered by its coarser neighbours iff
each of those cells lies inside a cell of width 2^-j that belongs to the support
of some member one level below.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .basis1d import Index1D, Kind, WaveletBasis, _ranges, periodic_time_trial, space_dirichlet, time_test

L_MAX_DEFAULT = 28
_CHUNK = 1 << 21


class Side(enum.Enum):
    TRIAL = "trial"
    TEST = "test"


class StructureError(ValueError):
    """An index set lacks the multitree structure an operation relies on."""


class LevelCapError(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class TensorIndex:
    time: Index1D
    space: tuple[Index1D, ...]

    @property
    def coords(self) -> tuple[Index1D, ...]:
        return (self.time,) + tuple(self.space)


class TensorBasis:
    """Per-coordinate bases plus the bit layout of packed keys."""

    def __init__(self, bases: Sequence[WaveletBasis], side: Side | None = None, level_cap: int = L_MAX_DEFAULT):
        self.bases = tuple(bases)
        self.d = len(self.bases)
        self.side = side
        self.bits = 63 // self.d
        self.level_cap = min(level_cap, self.bits - 2)
        self.mask = (1 << self.bits) - 1
        self.shifts = [self.bits * (self.d - 1 - i) for i in range(self.d)]

    def __eq__(self, other) -> bool:
        return isinstance(other, TensorBasis) and self.bases == other.bases

    def __hash__(self) -> int:
        return hash(self.bases)

    def __repr__(self) -> str:
        return f"TensorBasis({', '.join(b.family.value for b in self.bases)})"

    def with_basis(self, i: int, basis: WaveletBasis) -> "TensorBasis":
        b = list(self.bases)
        b[i] = basis
        return TensorBasis(b, None, self.level_cap)

    def pack(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, self.d)
        key = np.zeros(len(codes), dtype=np.int64)
        for i in range(self.d):
            key |= codes[:, i] << self.shifts[i]
        return key

    def unpack(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        out = np.empty((len(keys), self.d), dtype=np.int64)
        for i in range(self.d):
            out[:, i] = (keys >> self.shifts[i]) & self.mask
        return out

    def levels(self, codes) -> np.ndarray:
        codes = np.asarray(codes).reshape(-1, self.d)
        return np.column_stack([b.decode(codes[:, i])[0] for i, b in enumerate(self.bases)])

    def key_of(self, idx: TensorIndex) -> int:
        return int(self.pack([[b.code_of(c) for b, c in zip(self.bases, idx.coords)]])[0])

    def index_of(self, key: int) -> TensorIndex:
        codes = self.unpack(np.array([key]))[0]
        c = [b.index_of(int(x)) for b, x in zip(self.bases, codes)]
        return TensorIndex(c[0], tuple(c[1:]))

    def check_cap(self, levels) -> None:
        if np.size(levels) and int(np.max(levels)) > self.level_cap:
            raise LevelCapError(f"level {int(np.max(levels))} exceeds cap {self.level_cap}")


def trial_basis(n: int = 1, j0: int = 2, T: float = 1.0) -> TensorBasis:
    return TensorBasis([periodic_time_trial(j0, T)] + [space_dirichlet(j0)] * n, Side.TRIAL)


def test_basis(n: int = 1, j0: int = 2, T: float = 1.0) -> TensorBasis:
    return TensorBasis([time_test(j0, T)] + [space_dirichlet(j0)] * n, Side.TEST)


class MultiTree:
    """Immutable sorted set of packed tensor keys over a TensorBasis.

    The constructor does not verify the tree structure; ``is_multitree`` does.
    """

    __slots__ = ("tb", "keys", "_codes", "_weights")

    def __init__(self, tb: TensorBasis, keys):
        self.tb = tb
        self.keys = np.unique(np.asarray(keys, dtype=np.int64))
        self._codes = None
        self._weights = None

    @classmethod
    def from_indices(cls, tb: TensorBasis, indices: Iterable[TensorIndex]) -> "MultiTree":
        return cls(tb, np.array([tb.key_of(i) for i in indices], dtype=np.int64))

    @classmethod
    def from_codes(cls, tb: TensorBasis, codes) -> "MultiTree":
        return cls(tb, tb.pack(codes))

    @property
    def codes(self) -> np.ndarray:
        if self._codes is None:
            self._codes = self.tb.unpack(self.keys)
        return self._codes

    def __len__(self) -> int:
        return len(self.keys)

    def __iter__(self):
        return (self.tb.index_of(int(k)) for k in self.keys)

    def __contains__(self, idx) -> bool:
        key = self.tb.key_of(idx) if isinstance(idx, TensorIndex) else int(idx)
        i = np.searchsorted(self.keys, key)
        return bool(i < len(self.keys) and self.keys[i] == key)

    def __eq__(self, other) -> bool:
        return isinstance(other, MultiTree) and self.tb == other.tb and np.array_equal(self.keys, other.keys)

    def __repr__(self) -> str:
        return f"MultiTree({self.tb!r}, #={len(self)})"

    def issubset(self, other: "MultiTree") -> bool:
        return bool(np.all(np.isin(self.keys, other.keys, assume_unique=True)))

    def union(self, other: "MultiTree") -> "MultiTree":
        return MultiTree(self.tb, np.union1d(self.keys, other.keys))

    def positions(self, keys) -> np.ndarray:
        """Positions of keys in this set (-1 where absent)."""
        keys = np.asarray(keys, dtype=np.int64)
        i = np.searchsorted(self.keys, keys)
        ic = np.minimum(i, len(self.keys) - 1) if len(self.keys) else i
        ok = (i < len(self.keys)) & (self.keys[ic] == keys) if len(self.keys) else np.zeros(len(keys), bool)
        return np.where(ok, ic, -1)

    def levels(self) -> np.ndarray:
        return self.tb.levels(self.codes)

    def to_text(self, side: str | None = None) -> str:
        """One line per index: side, then level translation kind per coordinate."""
        tag = side or (self.tb.side.value if self.tb.side else "mixed")
        lines = []
        for row in self.codes:
            parts = [tag]
            for b, c in zip(self.tb.bases, row):
                lv, k, kd = b.decode(np.array([c]))
                parts += [str(int(lv[0])), str(int(k[0])), "S" if kd[0] == Kind.SCALING else "W"]
            lines.append(" ".join(parts))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, tb: TensorBasis, text: str) -> "MultiTree":
        rows = []
        for line in text.splitlines():
            f = line.split()
            if not f:
                continue
            vals = f[1:]
            if len(vals) != 3 * tb.d:
                raise ValueError(f"bad index line: {line!r}")
            row = []
            for i, b in enumerate(tb.bases):
                lv, k, kd = vals[3 * i : 3 * i + 3]
                row.append(b.code_of(Index1D(int(lv), int(k), Kind.SCALING if kd == "S" else Kind.WAVELET)))
            rows.append(row)
        return cls.from_codes(tb, np.array(rows, dtype=np.int64).reshape(-1, tb.d))


# ---------------------------------------------------------------- tree test
def _cells(basis: WaveletBasis, codes):
    """(level, owner row, cell) for all cells of width 2^-(level+1) in the supports."""
    level, lo, hi = basis._unwrapped_extent(codes)
    cnt = hi - lo
    rep = np.repeat(np.arange(len(codes)), cnt)
    cell = lo[rep] + _ranges(cnt)
    if basis.periodic:
        cell = np.mod(cell, np.left_shift(np.int64(1), level[rep] + 1))
    return level[rep], rep, cell


def _ckey(fid, grid, cell):
    # 28 bits fiber id, 5 bits grid, 30 bits cell
    return (fid.astype(np.int64) << 35) | (grid.astype(np.int64) << 30) | cell.astype(np.int64)


def _fibers(tb: TensorBasis, codes, i: int):
    other = codes.copy()
    other[:, i] = 0
    _, fid = np.unique(tb.pack(other), return_inverse=True)
    return fid.reshape(-1)


def _coverage(tb: TensorBasis, codes, i: int):
    """Cover keys and demand keys of coordinate i, with their owner rows."""
    b = tb.bases[i]
    fid = _fibers(tb, codes, i)
    lev, own, cell = _cells(b, codes[:, i])
    cover = _ckey(fid[own], lev + 1, cell)
    q = lev > b.j0
    dlev, down, dcell = lev[q], own[q], cell[q] // 2
    demand = _ckey(fid[down], dlev, dcell)
    return cover, own, demand, down


def uncovered(tb: TensorBasis, codes) -> np.ndarray:
    """Boolean (N, d): element uncovered in its coordinate-i slice."""
    codes = np.asarray(codes, dtype=np.int64).reshape(-1, tb.d)
    out = np.zeros(codes.shape, dtype=bool)
    if len(codes) == 0:
        return out
    for i in range(tb.d):
        cover, _, demand, down = _coverage(tb, codes, i)
        cover = np.unique(cover)
        miss = ~np.isin(demand, cover, assume_unique=False)
        out[:, i] = np.bincount(down[miss], minlength=len(codes)) > 0
    return out


def is_tree(slice_: Iterable[Index1D], basis: WaveletBasis) -> bool:
    idx = list(slice_)
    if not idx:
        return True
    codes = np.array([[basis.code_of(x)] for x in idx], dtype=np.int64)
    return not bool(uncovered(TensorBasis([basis]), codes).any())


def is_multitree(s: MultiTree) -> bool:
    return not bool(uncovered(s.tb, s.codes).any())


def require_multitree(s: MultiTree, what: str = "index set") -> None:
    if not is_multitree(s):
        raise StructureError(f"{what} is not a multitree")


# --------------------------------------------------------------- completion
def _canonical_parent(basis: WaveletBasis, code):
    """Wavelet floor(k/2) one level down; it covers its child on its own."""
    level, k, _ = basis.decode(code)
    return basis.code(level - 1, k // 2, int(Kind.WAVELET))


def complete_to_multitree(s: MultiTree) -> MultiTree:
    """Smallest (inclusion-minimal) multitree containing s.

    Canonical parents of uncovered elements are added until a fixed point,
    then added elements are pruned in order of decreasing total level as long
    as the set stays a multitree.
    """
    tb = s.tb
    keys = s.keys
    codes = s.codes
    while True:
        bad = uncovered(tb, codes)
        if not bad.any():
            break
        new = []
        for i in range(tb.d):
            rows = np.flatnonzero(bad[:, i])
            if len(rows) == 0:
                continue
            c = codes[rows].copy()
            c[:, i] = _canonical_parent(tb.bases[i], c[:, i])
            new.append(tb.pack(c))
        keys = np.union1d(keys, np.concatenate(new))
        codes = tb.unpack(keys)
    if len(keys) == len(s.keys):
        return MultiTree(tb, keys)
    return MultiTree(tb, _prune(tb, keys, codes, s.keys))


def _prune(tb: TensorBasis, keys, codes, original):
    added = np.flatnonzero(~np.isin(keys, original, assume_unique=True))
    cover_of: list[list[list[int]]] = []
    demand_of: list[list[list[int]]] = []
    cover_cnt: list[Counter] = []
    demand_cnt: list[Counter] = []
    for i in range(tb.d):
        cover, own, demand, down = _coverage(tb, codes, i)
        cover_cnt.append(Counter(cover.tolist()))
        demand_cnt.append(Counter(demand.tolist()))
        sel = np.isin(own, added)
        co = [[] for _ in range(len(keys))]
        for o, c in zip(own[sel].tolist(), cover[sel].tolist()):
            co[o].append(c)
        sel = np.isin(down, added)
        de = [[] for _ in range(len(keys))]
        for o, c in zip(down[sel].tolist(), demand[sel].tolist()):
            de[o].append(c)
        cover_of.append(co)
        demand_of.append(de)
    lsum = tb.levels(codes[added]).sum(axis=1)
    order = added[np.lexsort((-keys[added], -lsum))]
    alive = np.ones(len(keys), dtype=bool)
    for x in order.tolist():
        ok = True
        for i in range(tb.d):
            cc, dc = cover_cnt[i], demand_cnt[i]
            for c in cover_of[i][x]:
                if cc[c] < 2 and dc[c] > 0:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        alive[x] = False
        for i in range(tb.d):
            for c in cover_of[i][x]:
                cover_cnt[i][c] -= 1
            for c in demand_of[i][x]:
                demand_cnt[i][c] -= 1
    return keys[alive]


# --------------------------------------------------------------- expansions
class Variant(enum.Enum):
    FULL = "full"
    REDUCED = "reduced"
    TEMPORAL = "temporal"


def _raise_vectors(d: int, ell: int, variant: Variant):
    if variant == Variant.FULL:
        return [tuple([ell] * d)]
    if variant == Variant.REDUCED:
        return [tuple(ell if j == i else 0 for j in range(d)) for i in range(d)]
    return [tuple(ell if j == 0 else 0 for j in range(d))]


def _neighbor_table(src: WaveletBasis, dst: WaveletBasis, ucodes, raise_: int, top_only: bool):
    """CSR lists of dst neighbours (distance <= D_dst 2^-L) for each source code."""
    lev = src.decode(ucodes)[0]
    rows, cods = [], []
    lmax = int(lev.max()) + raise_ if len(lev) else 0
    for L in range(dst.j0, lmax + 1):
        if top_only:
            sel = (lev + raise_ == L) | ((lev == src.j0) & (L <= src.j0 + raise_))
        else:
            sel = lev + raise_ >= L
        r = np.flatnonzero(sel)
        if len(r) == 0:
            continue
        q, c = dst.near_codes(src, ucodes[r], L, dst.D * dst.T * 2.0**-L)
        rows.append(r[q])
        cods.append(c)
    if not rows:
        return np.zeros(len(ucodes) + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    r = np.concatenate(rows)
    c = np.concatenate(cods)
    o = np.lexsort((c, r))
    r, c = r[o], c[o]
    start = np.zeros(len(ucodes) + 1, dtype=np.int64)
    np.add.at(start, r + 1, 1)
    return np.cumsum(start), c


def _expand(s: MultiTree, dst_tb: TensorBasis, raises, top_only: bool) -> np.ndarray:
    d = s.tb.d
    codes = s.codes
    out = []
    for rv in raises:
        uinv, tabs = [], []
        for j in range(d):
            u, inv = np.unique(codes[:, j], return_inverse=True)
            start, nb = _neighbor_table(s.tb.bases[j], dst_tb.bases[j], u, rv[j], top_only)
            if len(nb):
                dst_tb.check_cap(dst_tb.bases[j].decode(nb)[0])
            uinv.append(inv.reshape(-1))
            tabs.append((start, nb))
        cnt = np.ones(len(codes), dtype=np.int64)
        for j in range(d):
            start = tabs[j][0]
            cnt *= start[uinv[j] + 1] - start[uinv[j]]
        # chunk over source rows to bound memory
        csum = np.cumsum(cnt)
        lo = 0
        while lo < len(codes):
            base = csum[lo - 1] if lo else 0
            hi = int(np.searchsorted(csum, base + _CHUNK, side="right"))
            hi = max(hi, lo + 1)
            rr = np.arange(lo, hi)
            cc = cnt[rr]
            rep = np.repeat(rr, cc)
            t = _ranges(cc)
            tup = np.empty((len(rep), d), dtype=np.int64)
            for j in range(d - 1, -1, -1):
                start, nb = tabs[j]
                u = uinv[j][rep]
                cj = start[u + 1] - start[u]
                tup[:, j] = nb[start[u] + t % cj]
                t //= cj
            out.append(np.unique(dst_tb.pack(tup)))
            lo = hi
    if not out:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(out))


def expand(s: MultiTree, dst_tb: TensorBasis, ell: int, variant: Variant, assume_multitree: bool | None = None) -> MultiTree:
    """Generic expansion: all dst indices lambda with some mu in s such that, in every
    coordinate j, |lambda_j| <= |mu_j| + raise_j and dist(supp) <= D_dst 2^-|lambda_j|,
    completed to a multitree."""
    if ell < 1:
        raise ValueError("expansion level must be >= 1")
    if len(s) == 0:
        return MultiTree(dst_tb, np.zeros(0, dtype=np.int64))
    if assume_multitree is None:
        assume_multitree = is_multitree(s)
    keys = _expand(s, dst_tb, _raise_vectors(s.tb.d, ell, variant), top_only=assume_multitree)
    return complete_to_multitree(MultiTree(dst_tb, keys))


def _test_of(s: MultiTree) -> TensorBasis:
    b = s.tb.bases
    tt = [time_test(b[0].j0, b[0].T)] + list(b[1:])
    return TensorBasis(tt, Side.TEST, s.tb.level_cap)


def _trial_of(s: MultiTree) -> TensorBasis:
    b = s.tb.bases
    tt = [periodic_time_trial(b[0].j0, b[0].T)] + list(b[1:])
    return TensorBasis(tt, Side.TRIAL, s.tb.level_cap)


def full_stable_expansion(trial_set: MultiTree, ell: int = 1) -> MultiTree:
    return expand(trial_set, _test_of(trial_set), ell, Variant.FULL)


def reduced_stable_expansion(trial_set: MultiTree, ell: int = 1) -> MultiTree:
    return expand(trial_set, _test_of(trial_set), ell, Variant.REDUCED)


def temporal_stable_expansion(trial_set: MultiTree, ell: int = 1) -> MultiTree:
    return expand(trial_set, _test_of(trial_set), ell, Variant.TEMPORAL)


def stable_expansion(trial_set: MultiTree, ell: int, variant: Variant) -> MultiTree:
    return expand(trial_set, _test_of(trial_set), ell, Variant(variant))


def reduced_multitree_cone(trial_set: MultiTree, ell: int = 1) -> MultiTree:
    return expand(trial_set, _trial_of(trial_set), ell, Variant.REDUCED)


def full_multitree_cone(trial_set: MultiTree, ell: int = 1) -> MultiTree:
    return expand(trial_set, _trial_of(trial_set), ell, Variant.FULL)


def full_expansion_to_trial(test_set: MultiTree, ell: int = 1) -> MultiTree:
    """Full expansion with the roles inverted: trial indices near a test set."""
    return expand(test_set, _trial_of(test_set), ell, Variant.FULL)


# ------------------------------------------------------------- sparse grids
def _level_codes(tb: TensorBasis, i: int, rel: int) -> np.ndarray:
    return tb.bases[i].codes_on_level(tb.bases[i].j0 + rel)


def _box(tb: TensorBasis, rel_levels) -> np.ndarray:
    grids = np.meshgrid(*[_level_codes(tb, i, r) for i, r in enumerate(rel_levels)], indexing="ij")
    return tb.pack(np.column_stack([g.reshape(-1) for g in grids]))


def _level_vectors(d: int, J: int):
    if d == 1:
        return [(j,) for j in range(J + 1)]
    return [(a,) + rest for a in range(J + 1) for rest in _level_vectors(d - 1, J - a)]


def sparse_grid_sets(J: int, n: int = 1, j0: int = 2, T: float = 1.0) -> tuple[MultiTree, MultiTree]:
    """Uniform sets {sum of levels relative to j0 <= J}; the test set adds one
    extra temporal level on top of the minimal spatial level."""
    if J < 0:
        raise ValueError("J must be nonnegative")
    tr, te = trial_basis(n, j0, T), test_basis(n, j0, T)
    vecs = _level_vectors(n + 1, J)
    hat = np.concatenate([_box(tr, v) for v in vecs])
    check = np.concatenate([_box(te, v) for v in vecs] + [_box(te, (J + 1,) + (0,) * n)])
    return MultiTree(tr, hat), MultiTree(te, check)


def sparse_grid_count(tb: TensorBasis, J: int) -> int:
    """Closed-form cardinality of the trial sparse grid."""
    d = tb.d
    per = [[len(_level_codes(tb, i, r)) for r in range(J + 1)] for i in range(d)]
    return int(sum(np.prod([per[i][v[i]] for i in range(d)]) for v in _level_vectors(d, J)))


def full_box(tb: TensorBasis, J: int) -> MultiTree:
    """All indices with every relative level <= J."""
    vecs = [v for v in np.ndindex(*([J + 1] * tb.d))]
    return MultiTree(tb, np.concatenate([_box(tb, v) for v in vecs]))
