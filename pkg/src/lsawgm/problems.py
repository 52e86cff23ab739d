"""Model problems, right-hand sides and solution evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .assembly import MASS, OperatorSpec, cdr_operator, heat_operator, set_weights, synthesis_matrix, weights
from .basis1d import PiecewisePoly, WaveletBasis, _ranges, gauss_points
from .indexset import MultiTree, TensorBasis, TensorIndex
from .tensorapply import ApplyPlan

QUAD_ORDER = 10
QUAD_FLOOR = 9


# ------------------------------------------------------------- quadrature
def _cell_values(basis: WaveletBasis, codes, G: int):
    """Piecewise-linear data on grid G: (row, cell, value at left end, value at right end)."""
    S = synthesis_matrix(basis, codes, G).tocoo()
    lo, _ = basis.node_range(G)
    N = 2**G
    node = S.col.astype(np.int64) + lo
    val = S.data * 2.0 ** (G / 2) / math.sqrt(basis.T)
    rows, cells, side, vals = [], [], [], []
    for off, s in ((0, 0), (-1, 1)):  # node n is the left end of cell n, the right end of cell n-1
        c = node + off
        if basis.periodic:
            c = np.mod(c, N)
            ok = np.ones(len(c), bool)
        else:
            ok = (c >= 0) & (c < N)
        rows.append(S.row[ok])
        cells.append(c[ok])
        side.append(np.full(ok.sum(), s))
        vals.append(val[ok])
    rows, cells, side, vals = map(np.concatenate, (rows, cells, side, vals))
    key = rows.astype(np.int64) * N + cells
    u, inv = np.unique(key, return_inverse=True)
    out = np.zeros((len(u), 2))
    np.add.at(out, (inv.reshape(-1), side), vals)
    return u // N, u % N, out


def _gauss(G: int, cells, T: float):
    xg, wg = np.polynomial.legendre.leggauss(QUAD_ORDER)
    s = 0.5 * (xg + 1.0)
    h = T / 2**G
    pts = (cells[:, None] + s[None, :]) * h
    w = 0.5 * wg * h
    shape = np.column_stack([w * (1.0 - s), w * s])  # (q, 2)
    return pts, shape


def _moments(f, Gt, tcells, Tt, Gx, xcells, Tx, budget=4_000_000):
    """M[a, b, p, q] = int_{cell a x cell b} f * shape_p(t) * shape_q(x)."""
    pt, wt = _gauss(Gt, np.asarray(tcells), Tt)
    px, wx = _gauss(Gx, np.asarray(xcells), Tx)
    out = np.empty((len(tcells), len(xcells), 2, 2))
    step = max(1, budget // max(1, pt.size * QUAD_ORDER))
    for i in range(0, len(xcells), step):
        sl = slice(i, i + step)
        F = f(pt.reshape(-1)[:, None], px[sl].reshape(-1)[None, :]).reshape(len(tcells), QUAD_ORDER, -1, QUAD_ORDER)
        out[:, sl] = np.einsum("aibk,ip,kq->abpq", F, wt, wx, optimize=True)
    return out


class CellQuadrature:
    """int int f psi_t psi_x by composite Gauss on cells of width min(wavelet mesh, 2^-floor).

    Results are cached per pair of 1D functions; per-direction intermediate
    contractions are cached per code.
    """

    def __init__(self, f: Callable, bt: WaveletBasis, bx: WaveletBasis, floor: int = QUAD_FLOOR):
        self.f, self.bt, self.bx, self.F = f, bt, bx, floor
        self._y = ({}, {})  # per direction: code -> contraction on the coarse grid

    def _grids(self, b: WaveletBasis, codes):
        return np.maximum(b.levels(codes) + 1, self.F)

    def _contract(self, direction: int, codes):
        """For each code of the fine-side basis: (2^F coarse cells, 2) moments against it."""
        cache = self._y[direction]
        fine_b = self.bx if direction == 0 else self.bt
        todo = np.array(sorted({int(c) for c in codes} - cache.keys()), dtype=np.int64)
        G = self._grids(fine_b, todo)
        for g in np.unique(G):
            part = todo[G == g]
            row, cell, v = _cell_values(fine_b, part, int(g))
            uc, ci = np.unique(cell, return_inverse=True)
            coarse = np.arange(2**self.F)
            if direction == 0:
                M = _moments(self.f, self.F, coarse, self.bt.T, int(g), uc, self.bx.T)  # (a, b, p, q)
                M = M.transpose(1, 3, 0, 2)  # (b, q, a, p)
            else:
                M = _moments(self.f, int(g), uc, self.bt.T, self.F, coarse, self.bx.T)  # (a, b, p, q)
                M = M.transpose(0, 2, 1, 3)  # (a, p, b, q)
            V = sp.csr_matrix((v.reshape(-1), (np.repeat(row, 2), (2 * ci[:, None] + np.arange(2)).reshape(-1))),
                              shape=(len(part), 2 * len(uc)))
            Y = V @ M.reshape(2 * len(uc), -1)
            for c, y in zip(part, Y):
                cache[int(c)] = y
        return np.array([cache[int(c)] for c in codes]) if len(codes) else np.zeros((0, 2 * 2**self.F))

    def entries(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, 2)
        out = np.zeros(len(codes))
        if not len(codes):
            return out
        Gt = self._grids(self.bt, codes[:, 0])
        Gx = self._grids(self.bx, codes[:, 1])
        for direction, sel in ((0, Gt == self.F), (1, (Gt > self.F) & (Gx == self.F))):
            idx = np.flatnonzero(sel)
            if not len(idx):
                continue
            coarse_b, c_coarse, c_fine = (self.bt, codes[idx, 0], codes[idx, 1]) if direction == 0 else (self.bx, codes[idx, 1], codes[idx, 0])
            uf, fi = np.unique(c_fine, return_inverse=True)
            Y = self._contract(direction, uf)
            uc, cinv = np.unique(c_coarse, return_inverse=True)
            row, cell, v = _cell_values(coarse_b, uc, self.F)
            Vc = sp.csr_matrix((v.reshape(-1), (np.repeat(row, 2), (2 * cell[:, None] + np.arange(2)).reshape(-1))),
                               shape=(len(uc), 2 * 2**self.F))
            for s in range(0, len(idx), 4096):
                sl = slice(s, s + 4096)
                A = Vc[cinv.reshape(-1)[sl]]
                out[idx[sl]] = np.asarray(A.multiply(Y[fi.reshape(-1)[sl]]).sum(axis=1)).reshape(-1)
        fine = np.flatnonzero((Gt > self.F) & (Gx > self.F))
        if len(fine):
            out[fine] = self._fine_fine(codes[fine])
        return out

    def _fine_fine(self, codes):
        out = np.zeros(len(codes))
        ut, tinv = np.unique(codes[:, 0], return_inverse=True)
        tinv = tinv.reshape(-1)
        for i, tc in enumerate(ut):
            ent = np.flatnonzero(tinv == i)
            gt = int(self.bt.levels(np.array([tc]))[0]) + 1
            _, tcell, tv = _cell_values(self.bt, np.array([tc]), gt)
            xc = codes[ent, 1]
            gx = self._grids(self.bx, xc)
            for g in np.unique(gx):
                e = ent[gx == g]
                ux, xinv = np.unique(codes[e, 1], return_inverse=True)
                row, xcell, xv = _cell_values(self.bx, ux, int(g))
                uc, ci = np.unique(xcell, return_inverse=True)
                M = _moments(self.f, gt, tcell, self.bt.T, int(g), uc, self.bx.T)
                Y = np.einsum("ap,abpq->bq", tv, M)  # (xcells, 2)
                per = np.zeros(len(ux))
                np.add.at(per, row, np.sum(xv * Y[ci], axis=1))
                out[e] = per[xinv.reshape(-1)]
        return out


# ------------------------------------------------------------- problems
@dataclass
class ProblemSpec:
    """Operator, right-hand side and (optionally) the exact solution.

    The rhs is either separable, f(t) * 1(x), with f piecewise polynomial in
    time, or a general analytic f(t, x) for one space dimension.
    """

    name: str
    operator: OperatorSpec
    time_factor: PiecewisePoly | None = None
    f: Callable | None = None
    exact_solution: Callable | None = None
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _quad: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.operator.n

    def raw_entries(self, tb: TensorBasis, codes) -> np.ndarray:
        """Unweighted integrals of f against the tensor functions of `codes`."""
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, tb.d)
        keys = tb.pack(codes)
        ck, cv = self._cache.get(tb, (np.zeros(0, np.int64), np.zeros(0)))
        pos = np.searchsorted(ck, keys)
        hit = pos < len(ck)
        hit[hit] = ck[pos[hit]] == keys[hit]
        miss_keys, first = np.unique(keys[~hit], return_index=True)
        if len(miss_keys):
            new = self._compute(tb, codes[~hit][first])
            ak = np.concatenate([ck, miss_keys])
            av = np.concatenate([cv, new])
            o = np.argsort(ak)
            ck, cv = ak[o], av[o]
            self._cache[tb] = (ck, cv)
        return cv[np.searchsorted(ck, keys)]

    def _compute(self, tb: TensorBasis, codes) -> np.ndarray:
        if self.time_factor is not None:
            return _time_integrals(tb.bases[0], codes[:, 0], self.time_factor) * np.prod(
                [_space_integrals(tb.bases[i], codes[:, i]) for i in range(1, tb.d)], axis=0)
        if self.f is None:
            raise ValueError("problem has no right-hand side")
        if tb.d != 2:
            raise ValueError("analytic right-hand sides are implemented for one space dimension")
        q = self._quad.get(tb)
        if q is None:
            q = self._quad[tb] = CellQuadrature(self.f, tb.bases[0], tb.bases[1])
        return q.entries(codes)

    def rhs(self, test_set: MultiTree) -> np.ndarray:
        """D^Y-scaled load vector on a test set."""
        return set_weights(test_set) * self.raw_entries(test_set.tb, test_set.codes)


def _time_integrals(b: WaveletBasis, codes, factor: PiecewisePoly) -> np.ndarray:
    """Exact integrals of factor * psi: Gauss on each wavelet cell split at the factor's breakpoints."""
    cache = factor.__dict__.setdefault("_ints", {})
    todo = np.array(sorted({int(c) for c in codes if (b, int(c)) not in cache}), dtype=np.int64)
    if len(todo):
        xg, wg = np.polynomial.legendre.leggauss(gauss_points(1, factor.degree))
        B = np.asarray(factor.breakpoints, float)
        res = np.zeros(len(todo))
        G = b.levels(todo) + 1
        for g in np.unique(G):
            part = np.flatnonzero(G == g)
            row, cell, v = _cell_values(b, todo[part], int(g))
            h = b.T / 2**int(g)
            lo, hi = cell * h, (cell + 1) * h
            i0 = np.searchsorted(B, lo, side="right")
            inner = np.searchsorted(B, hi, side="left") - i0
            nsub = inner + 1
            c = np.repeat(np.arange(len(cell)), nsub)
            j = _ranges(nsub)
            left = np.where(j == 0, lo[c], B[np.minimum(i0[c] + j - 1, len(B) - 1)])
            right = np.where(j == inner[c], hi[c], B[np.minimum(i0[c] + j, len(B) - 1)])
            x = 0.5 * (left + right)[:, None] + 0.5 * (right - left)[:, None] * xg[None, :]
            w = 0.5 * (right - left)[:, None] * wg[None, :]
            s_ = (x - lo[c][:, None]) / h
            psi = v[c, 0][:, None] * (1.0 - s_) + v[c, 1][:, None] * s_
            val = np.sum(w * psi * factor(x), axis=1)
            np.add.at(res, part[row[c]], val)
        for code, r in zip(todo, res):
            cache[(b, int(code))] = float(r)
    return np.array([cache[(b, int(c))] for c in codes])


def _space_integrals(b: WaveletBasis, codes) -> np.ndarray:
    """Exact integral of each function: hat integrals 2^{-g/2} (halved for boundary half-hats)."""
    g, nodes, coeffs = b.expansion(codes)
    hat = 2.0 ** (-g[:, None] / 2.0) * math.sqrt(b.T) * np.where(b.hat_is_half(g[:, None], nodes), 0.5, 1.0)
    return np.sum(coeffs * hat, axis=1)


def sawtooth(N: int = 3, K: float = 1.0, T: float = 1.0) -> PiecewisePoly:
    """K (N t/T - floor(N t/T)) on [0, T] as a piecewise polynomial."""
    bp = np.linspace(0.0, T, N + 1)
    return PiecewisePoly(bp, np.tile([0.0, K * N / T], (N, 1)))


def heat_problem(N: int = 3, K: float = 1.0, T: float = 1.0, n: int = 1) -> ProblemSpec:
    if N < 1 or K <= 0:
        raise ValueError("need N >= 1 and K > 0")
    if T != 1.0:
        raise ValueError("the bases are built on the unit time interval")
    return ProblemSpec("heat", heat_operator(n), time_factor=sawtooth(N, K, T), params={"N": N, "K": K, "T": T, "n": n})


_A = 1000.0


def _center(t):
    return 0.5 + 0.25 * np.sin(2.0 * np.pi * t)


def cdr_exact(t, x):
    return np.exp(-_A * (x - _center(t)) ** 2)


def cdr_source(t, x):
    """u_t - u_xx + u_x + u for the moving Gaussian."""
    z = x - _center(t)
    dc = 0.5 * np.pi * np.cos(2.0 * np.pi * t)
    u = np.exp(-_A * z * z)
    return u * (2.0 * _A * z * dc - (4.0 * _A * _A * z * z - 2.0 * _A) - 2.0 * _A * z + 1.0)


def cdr_problem() -> ProblemSpec:
    return ProblemSpec("cdr", cdr_operator(), f=cdr_source, exact_solution=cdr_exact, params={})


def rhs_entry(problem: ProblemSpec, tb: TensorBasis, test_idx: TensorIndex) -> float:
    """D^Y-scaled integral of f against one test function."""
    codes = np.array([[b.code_of(i) for b, i in zip(tb.bases, test_idx.coords)]], dtype=np.int64)
    return float(weights(tb, codes)[0] * problem.raw_entries(tb, codes)[0])


# ------------------------------------------------------------- evaluation
def _synthesize(b: WaveletBasis, codes, x) -> np.ndarray:
    """Values (P, #codes) of basis functions from their fine-hat expansions."""
    g, nodes, coeffs = b.expansion(codes)
    n = np.left_shift(np.int64(1), g).astype(float)[:, None]
    s = x[:, None, None] / b.T * n[None]  # position in units of the expansion grid
    dist = np.abs(s - nodes[None])
    if b.periodic:
        dist = np.minimum(dist, n[None] - dist)
    hats = np.maximum(0.0, 1.0 - dist) * (np.sqrt(n / b.T))[None]
    return np.einsum("pkw,kw->pk", hats, coeffs)


def evaluate(tree: MultiTree, u: np.ndarray, points) -> np.ndarray:
    """sum_lambda u_lambda D_lambda psi_lambda at points of shape (P, d)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tb = tree.tb
    if pts.shape[1] != tb.d:
        raise ValueError("points need one column per coordinate")
    for i, b in enumerate(tb.bases):
        if np.any((pts[:, i] < 0) | (pts[:, i] > b.T)):
            raise ValueError("evaluation point outside the domain")
    codes = tree.codes
    coef = np.asarray(u, dtype=float) * weights(tb, codes)
    acc = None
    for i, b in enumerate(tb.bases):
        uc, inv = np.unique(codes[:, i], return_inverse=True)
        Vi = sp.csr_matrix(_synthesize(b, uc, pts[:, i]))[:, inv.reshape(-1)]
        acc = Vi if acc is None else acc.multiply(Vi).tocsr()
    return np.asarray(acc @ coef).reshape(-1) if acc is not None else np.zeros(len(pts))


def _exact_norm_sq(exact: Callable, T: float = 1.0, floor: int = QUAD_FLOOR) -> float:
    cells = np.arange(2**floor)
    pt, wt = _gauss(floor, cells, T)
    px, wx = _gauss(floor, cells, 1.0)
    # the shape columns add up to the plain Gauss weights, identical on every cell
    w_t = np.tile(wt.sum(axis=1), len(cells))
    w_x = np.tile(wx.sum(axis=1), len(cells))
    t, x = pt.reshape(-1), px.reshape(-1)
    total = 0.0
    for lo in range(0, len(t), 512):
        V = exact(t[lo : lo + 512, None], x[None, :])
        total += float(w_t[lo : lo + 512] @ (V * V) @ w_x)
    return total


def l2_error(problem: ProblemSpec, tree: MultiTree, u: np.ndarray) -> float:
    """L2(0,T; L2) distance to the exact solution via ||u||^2 - 2 (u, u_h) + ||u_h||^2."""
    if problem.exact_solution is None:
        raise ValueError("problem has no exact solution")
    tb = tree.tb
    uu = problem._cache.setdefault("exact_norm_sq", _exact_norm_sq(problem.exact_solution, tb.bases[0].T))
    q = problem._quad.get(("exact", tb))
    if q is None:
        q = problem._quad[("exact", tb)] = CellQuadrature(problem.exact_solution, tb.bases[0], tb.bases[1])
    coef = np.asarray(u, dtype=float)
    cross = float(coef @ (weights(tb, tree.codes) * q.entries(tree.codes)))
    mass = OperatorSpec(tb.d - 1, ((MASS,) * tb.d,))
    hh = float(coef @ ApplyPlan(mass, tree, tree)(coef)) if len(tree) else 0.0
    return math.sqrt(max(uu - 2.0 * cross + hh, 0.0))
