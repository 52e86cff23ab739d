"""Matrix-free application of sums of Kronecker products on multitrees.

A 1D factor A is split into its upper part U (test level <= trial level) and
its strictly lower part L.  Both are applied level by level in hat
representation:

* U, descending: G_g = R_g G_{g+1} + A_{g+1} X_g, where X_g is the level-g input
  expanded in hats of grid g+1 and R_g restricts test hats one grid coarser;
  outputs of level g read G_g.
* L, ascending: S_{g+1} = P_g S_g + X_g carries the input of all coarser levels
  in hats of grid g+1; outputs of level g read A_{g+1} P_g S_g.

Every fiber (all coordinates but the active one frozen) is handled at once by
keying hats with (fiber id, node).  The tensor recursion splits coordinate c
into U + L, evaluating U first in c and then the remaining coordinates through
an intermediate multitree (Pi-bar), and L after the remaining coordinates
(through Pi).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import FormTerm1D, OperatorSpec, set_weights
from .basis1d import WaveletBasis
from .indexset import MultiTree, StructureError, TensorBasis, complete_to_multitree, is_multitree

_NB = 32
_NMASK = (1 << _NB) - 1


class Role(enum.Enum):
    FULL = "full"
    LOWER_STRICT = "lower_strict"
    UPPER_INCLUSIVE = "upper_inclusive"


@dataclass(frozen=True)
class SplitMatrix1D:
    term: FormTerm1D
    role: Role = Role.FULL


def _nk(fid, node):
    return (np.asarray(fid, dtype=np.int64) << _NB) | np.asarray(node, dtype=np.int64)


def _lookup(S, keys):
    """Positions of keys in the sorted array S, -1 where absent."""
    i = np.searchsorted(S, keys)
    ok = i < len(S)
    ok[ok] = S[i[ok]] == keys[ok]
    return np.where(ok, i, -1)


def _spm(ri, ckeys, vals, nrows: int, C) -> sp.csr_matrix:
    """Sparse matrix with known row positions and column keys looked up in the
    sorted array C; entries with absent columns are dropped, duplicates summed."""
    ci = _lookup(C, ckeys)
    ok = ci >= 0
    return sp.csr_matrix((vals[ok], (ri[ok], ci[ok])), shape=(nrows, len(C)))


def _isin_sorted(keys, S):
    i = np.searchsorted(S, keys)
    ok = i < len(S)
    ok[ok] = S[i[ok]] == keys[ok]
    return ok


def _cell_nodes(src: WaveletBasis, dst: WaveletBasis, G: int, nodes):
    """dst hats of grid G sharing a cell with the given src hats: (row, dst node)."""
    N = 2**G
    rows, out = [], []
    for off in (-1, 0):
        cell = nodes + off
        if src.periodic:
            cell = np.mod(cell, N)
            okc = np.ones(len(cell), dtype=bool)
        else:
            okc = (cell >= 0) & (cell < N)
        for d in (0, 1):
            m = dst.wrap_nodes(G, cell + d)
            ok = okc & (m >= 0)
            rows.append(np.flatnonzero(ok))
            out.append(m[ok])
    return np.concatenate(rows), np.concatenate(out)


def _band(src: WaveletBasis, dst: WaveletBasis, G: int, keys):
    """Keys of dst hats sharing a cell with src hats (same fiber)."""
    fid, node = keys >> _NB, keys & _NMASK
    r, m = _cell_nodes(src, dst, G, node)
    return np.unique(_nk(fid[r], m))


def _coarse(b: WaveletBasis, g: int, keys):
    """Keys of grid-g hats whose refinement touches the given grid-(g+1) hats."""
    fid, node = keys >> _NB, keys & _NMASK
    cand = np.concatenate([node // 2, (node + 1) // 2])
    f2 = np.concatenate([fid, fid])
    w = b.wrap_nodes(g, cand)
    ok = w >= 0
    return np.unique(_nk(f2[ok], w[ok]))


def _hat_matrix(out_b, in_b, G, R, C, form: FormTerm1D):
    """b(in hat, out hat) on grid G between key spaces R (out) and C (in)."""
    from .assembly import hat_band

    fid, node = R >> _NB, R & _NMASK
    r, m, v = hat_band(out_b, in_b, G, node, form)
    return _spm(r, _nk(fid[r], m), v, len(R), C)


def _refine_matrix(b: WaveletBasis, g: int, Rc, Cf):
    """Two-scale matrix: rows grid-g hats Rc, columns grid-(g+1) hats Cf."""
    fid, node = Rc >> _NB, Rc & _NMASK
    fine, c = b.refine_nodes(g, node)
    ck = _nk(np.repeat(fid, 3), fine.reshape(-1))
    return _spm(np.repeat(np.arange(len(Rc)), 3), ck, c.reshape(-1), len(Rc), Cf)


def _expansion_entries(b: WaveletBasis, codes, fid):
    """(row, hat key, coefficient) of the fine-hat expansions."""
    _, nodes, coeffs = b.expansion(codes)
    w = nodes.shape[1]
    rows = np.repeat(np.arange(len(codes)), w)
    keys = _nk(np.repeat(fid, w), nodes.reshape(-1))
    vals = coeffs.reshape(-1)
    nz = vals != 0.0
    return rows[nz], keys[nz], vals[nz]


def _group_columns(col_forms):
    forms = []
    for f in col_forms:
        if f not in forms:
            forms.append(f)
    groups = [np.array([i for i, g in enumerate(col_forms) if g == f], dtype=np.int64) for f in forms]
    return forms, groups


class UniPlan:
    """Unidirectional application in coordinate c from in_set to out_set.

    Column m of the input is multiplied by the 1D matrix of col_forms[m].
    """

    def __init__(self, out_tb: TensorBasis, out_codes, in_tb: TensorBasis, in_codes, c: int, role: Role, col_forms):
        self.role = Role(role)
        self.n_out = len(out_codes)
        self.n_in = len(in_codes)
        self.forms, self.groups = _group_columns(list(col_forms))
        self.M = len(col_forms)
        self.mults = 0
        ob, ib = out_tb.bases[c], in_tb.bases[c]
        self.ob, self.ib = ob, ib
        # shared fiber numbering
        ofr = out_codes.copy()
        ofr[:, c] = 0
        ifr = in_codes.copy()
        ifr[:, c] = 0
        ok_ = out_tb.pack(ofr)
        ik_ = in_tb.pack(ifr)
        fibers = np.intersect1d(ok_, ik_)
        ofid = np.searchsorted(fibers, ok_)
        ifid = np.searchsorted(fibers, ik_)
        o_act = _isin_sorted(ok_, fibers)
        i_act = _isin_sorted(ik_, fibers)
        olev = ob.decode(out_codes[:, c])[0]
        ilev = ib.decode(in_codes[:, c])[0]
        self.u_steps = []
        self.l_steps = []
        if not o_act.any() or not i_act.any():
            return
        in_levels = {int(g): np.flatnonzero(i_act & (ilev == g)) for g in np.unique(ilev[i_act])}
        out_levels = {int(g): np.flatnonzero(o_act & (olev == g)) for g in np.unique(olev[o_act])}
        in_exp = {}
        for g, rows in in_levels.items():
            r, k, v = _expansion_entries(ib, in_codes[rows, c], ifid[rows])
            in_exp[g] = (rows, r, k, v)
        out_exp = {}
        for g, rows in out_levels.items():
            r, k, v = _expansion_entries(ob, out_codes[rows, c], ofid[rows])
            out_exp[g] = (rows, r, k, v)
        if self.role in (Role.FULL, Role.UPPER_INCLUSIVE):
            self._build_upper(in_levels, out_levels, in_exp, out_exp)
        if self.role in (Role.FULL, Role.LOWER_STRICT):
            self._build_lower(in_levels, out_levels, in_exp, out_exp)

    # ------------------------------------------------------------- upper
    def _build_upper(self, in_levels, out_levels, in_exp, out_exp):
        ob, ib = self.ob, self.ib
        gmax = max(in_levels)
        gmin = min(out_levels)
        Z_prev = None
        for g in range(gmax, gmin - 1, -1):
            parts = []
            if g in in_exp:
                rows, r, k, v = in_exp[g]
                Zx = np.unique(k)
                parts.append(_band(ib, ob, g + 1, Zx))
            if Z_prev is not None and len(Z_prev):
                parts.append(_coarse(ob, g + 1, Z_prev))
            Z = np.unique(np.concatenate(parts)) if parts else np.zeros(0, np.int64)
            step = {"g": g, "Z": Z}
            if Z_prev is not None and len(Z_prev) and len(Z):
                step["R"] = _refine_matrix(ob, g + 1, Z, Z_prev)
            if g in in_exp and len(Z):
                rows, r, k, v = in_exp[g]
                Xh = sp.csr_matrix((v, (np.searchsorted(Zx, k), r)), shape=(len(Zx), len(rows)))
                step["in_rows"] = rows
                step["AX"] = [(_hat_matrix(ob, ib, g + 1, Z, Zx, f) @ Xh).tocsr() for f in self.forms]
            if g in out_exp and len(Z):
                rows, r, k, v = out_exp[g]
                W = _spm(r, k, v, len(rows), Z)
                step["out_rows"] = rows
                step["W"] = W
            self.u_steps.append(step)
            Z_prev = Z

    def _apply_upper(self, X, Y):
        for fi, cols in enumerate(self.groups):
            G = None
            for st in self.u_steps:
                Gn = None
                if "R" in st and G is not None:
                    Gn = st["R"] @ G
                    self.mults += st["R"].nnz * len(cols)
                if "AX" in st:
                    A = st["AX"][fi]
                    t = A @ X[st["in_rows"]][:, cols]
                    self.mults += A.nnz * len(cols)
                    Gn = t if Gn is None else Gn + t
                if Gn is None:
                    Gn = np.zeros((len(st["Z"]), len(cols)))
                if "W" in st:
                    Y[np.ix_(st["out_rows"], cols)] += st["W"] @ Gn
                    self.mults += st["W"].nnz * len(cols)
                G = Gn

    # ------------------------------------------------------------- lower
    def _build_lower(self, in_levels, out_levels, in_exp, out_exp):
        ob, ib = self.ob, self.ib
        glo = min(in_levels)
        top = max(out_levels)
        if top <= glo:
            return
        empty = np.zeros(0, np.int64)
        # band[g]: trial hats on grid g+1 that outputs of level g or finer sweeps read
        # need[g]: trial hats on grid g feeding band[g] through refinement
        band, need = {}, {top + 1: empty}
        for g in range(top, glo, -1):
            parts = [need[g + 1]]
            if g in out_exp:
                parts.append(_band(ob, ib, g + 1, np.unique(out_exp[g][2])))
            band[g] = np.unique(np.concatenate(parts))
            need[g] = _coarse(ib, g, band[g]) if len(band[g]) else empty
        self.l_start = self._restricted_input(in_exp, glo, need[glo + 1])
        steps = []
        for g in range(glo + 1, top + 1):
            B = band[g]
            st = {"P": _refine_matrix(ib, g, need[g], B).T.tocsr()}
            if g in out_exp:
                rows, r, k, v = out_exp[g]
                Tn = np.unique(k)
                W = _spm(r, k, v, len(rows), Tn)
                st["out_rows"] = rows
                st["C"] = [(W @ _hat_matrix(ob, ib, g + 1, Tn, B, f)).tocsr() for f in self.forms]
            if g < top:
                st["sel"] = np.searchsorted(B, need[g + 1])
                st["next"] = self._restricted_input(in_exp, g, need[g + 1])
            steps.append(st)
        self.l_steps = steps

    def _restricted_input(self, in_exp, g, space):
        """Level-g input in hats of grid g+1, restricted to the key space."""
        if g not in in_exp or not len(space):
            return (len(space), None, None)
        rows, r, k, v = in_exp[g]
        X = _spm(r, k, v, len(rows), space).T.tocsr()
        return (len(space), rows, X)

    def _feed(self, spec, X, cols):
        n, rows, M = spec
        if M is None:
            return np.zeros((n, len(cols)))
        self.mults += M.nnz * len(cols)
        return M @ X[rows][:, cols]

    def _apply_lower(self, X, Y):
        for fi, cols in enumerate(self.groups):
            S = self._feed(self.l_start, X, cols)
            for st in self.l_steps:
                T = st["P"] @ S
                self.mults += st["P"].nnz * len(cols)
                if "C" in st:
                    C = st["C"][fi]
                    Y[np.ix_(st["out_rows"], cols)] += C @ T
                    self.mults += C.nnz * len(cols)
                if "sel" in st:
                    S = T[st["sel"]] + self._feed(st["next"], X, cols)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(self.n_in, self.M)
        Y = np.zeros((self.n_out, self.M))
        if self.u_steps:
            self._apply_upper(X, Y)
        if self.l_steps:
            self._apply_lower(X, Y)
        return Y


def _proj_keys(tb: TensorBasis, codes, upto: int):
    c = codes.copy()
    c[:, upto + 1 :] = 0
    return tb.pack(c)


def _same_level_overlaps(src: WaveletBasis, dst: WaveletBasis, codes, offset: int):
    """For each code, dst codes at level |code| + offset overlapping it (positive measure).

    Returns (row, dst code)."""
    u, inv = np.unique(codes, return_inverse=True)
    inv = inv.reshape(-1)
    lev = src.decode(u)[0]
    rows, cods = [], []
    for L in np.unique(lev):
        tgt = int(L) + offset
        if tgt < dst.j0:
            continue
        r = np.flatnonzero(lev == L)
        q, c = dst.near_codes(src, u[r], tgt, 0.0, strict=True)
        rows.append(r[q])
        cods.append(c)
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    ur = np.concatenate(rows)
    uc = np.concatenate(cods)
    order = np.argsort(ur, kind="stable")
    ur, uc = ur[order], uc[order]
    start = np.searchsorted(ur, np.arange(len(u) + 1))
    cnt = (start[1:] - start[:-1])[inv]
    row = np.repeat(np.arange(len(codes)), cnt)
    from .basis1d import _ranges

    pos = np.repeat(start[:-1][inv], cnt) + _ranges(cnt)
    return row, uc[pos]


def _intermediate(src: MultiTree, src_codes, c: int, offset: int, dst_tb: TensorBasis, restrict_tb: TensorBasis, restrict_codes) -> MultiTree:
    """{src member with coordinate c replaced by a dst_tb.bases[c] function at level
    |.|+offset overlapping it}, restricted to the coords<=c projection of the
    restrict set, completed to a multitree."""
    row, code = _same_level_overlaps(src.tb.bases[c], dst_tb.bases[c], src_codes[:, c], offset)
    cand = src_codes[row].copy()
    cand[:, c] = code
    keep = np.isin(_proj_keys(dst_tb, cand, c), np.unique(_proj_keys(restrict_tb, restrict_codes, c)))
    return complete_to_multitree(MultiTree(dst_tb, dst_tb.pack(cand[keep])))


class TensorPlan:
    """Recursive Kronecker splitting of one operator restricted to (out_set, in_set)."""

    def __init__(self, out_set: MultiTree, in_set: MultiTree, c: int, col_forms: list[tuple[FormTerm1D, ...]]):
        self.c = c
        self.n_out, self.n_in = len(out_set), len(in_set)
        self.M = len(col_forms)
        d = out_set.tb.d
        forms_c = [t[c] for t in col_forms]
        self.leaf = c == d - 1
        self.inter_sizes = []
        if self.leaf:
            self.full = UniPlan(out_set.tb, out_set.codes, in_set.tb, in_set.codes, c, Role.FULL, forms_c)
            return
        ob = list(out_set.tb.bases)
        ib = list(in_set.tb.bases)
        pibar_tb = TensorBasis(ob[: c + 1] + ib[c + 1 :], None, out_set.tb.level_cap)
        pi_tb = TensorBasis(ob[:c] + [ib[c]] + ob[c + 1 :], None, out_set.tb.level_cap)
        pibar = _intermediate(in_set, in_set.codes, c, 0, pibar_tb, out_set.tb, out_set.codes)
        pi = _intermediate(out_set, out_set.codes, c, -1, pi_tb, in_set.tb, in_set.codes)
        self.pibar, self.pi = pibar, pi
        self.U = UniPlan(pibar.tb, pibar.codes, in_set.tb, in_set.codes, c, Role.UPPER_INCLUSIVE, forms_c)
        self.restU = TensorPlan(out_set, pibar, c + 1, col_forms)
        self.restL = TensorPlan(pi, in_set, c + 1, col_forms)
        self.L = UniPlan(out_set.tb, out_set.codes, pi.tb, pi.codes, c, Role.LOWER_STRICT, forms_c)
        self.inter_sizes = [len(pibar), len(pi)] + self.restU.inter_sizes + self.restL.inter_sizes

    def apply(self, X: np.ndarray) -> np.ndarray:
        if self.leaf:
            return self.full.apply(X)
        return self.restU.apply(self.U.apply(X)) + self.L.apply(self.restL.apply(X))

    @property
    def inter_sets(self) -> list[MultiTree]:
        """All intermediate sets of the recursion, outermost first."""
        if self.leaf:
            return []
        return [self.pibar, self.pi] + self.restU.inter_sets + self.restL.inter_sets

    @property
    def mults(self) -> int:
        if self.leaf:
            return self.full.mults
        return self.U.mults + self.L.mults + self.restU.mults + self.restL.mults


class ApplyPlan:
    """Preconditioned B (or B^T) restricted to out_set x in_set, reusable across calls."""

    def __init__(self, spec: OperatorSpec, out_set: MultiTree, in_set: MultiTree, check: bool = True):
        if out_set.tb.d != spec.n + 1 or in_set.tb.d != spec.n + 1:
            raise ValueError("basis dimension does not match the operator")
        for a, b in zip(out_set.tb.bases, in_set.tb.bases):
            if a.T != b.T or a.j0 != b.j0:
                raise ValueError("basis mismatch between the two sets")
        if check:
            if not is_multitree(out_set):
                raise StructureError("output set is not a multitree")
            if not is_multitree(in_set):
                raise StructureError("input set is not a multitree")
        self.spec = spec
        self.out_set, self.in_set = out_set, in_set
        self.w_out = set_weights(out_set)
        self.w_in = set_weights(in_set)
        self.plan = TensorPlan(out_set, in_set, 0, list(spec.terms)) if len(out_set) and len(in_set) else None

    @property
    def mults(self) -> int:
        return self.plan.mults if self.plan else 0

    def stats(self) -> dict:
        sizes = self.plan.inter_sizes if self.plan else []
        return {"out": len(self.out_set), "in": len(self.in_set), "intermediate": int(sum(sizes)), "mults": self.mults}

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != len(self.in_set):
            raise ValueError("coefficient vector does not match the input set")
        if self.plan is None:
            return np.zeros((len(self.out_set),) + v.shape[1:])
        cols = v.reshape(len(v), -1)
        out = np.zeros((len(self.out_set), cols.shape[1]))
        M = self.spec.M
        for j in range(cols.shape[1]):
            X = np.repeat((self.w_in * cols[:, j])[:, None], M, axis=1)
            out[:, j] = self.w_out * self.plan.apply(X).sum(axis=1)
        return out.reshape((len(self.out_set),) + v.shape[1:])


class Operator:
    """B restricted to (test set, trial set) with cached plans for both directions."""

    def __init__(self, spec: OperatorSpec, test_set: MultiTree, trial_set: MultiTree, check: bool = True):
        self.spec = spec
        self.test_set, self.trial_set = test_set, trial_set
        self._fwd = None
        self._adj = None
        self._check = check

    @property
    def forward(self) -> ApplyPlan:
        if self._fwd is None:
            self._fwd = ApplyPlan(self.spec, self.test_set, self.trial_set, self._check)
        return self._fwd

    @property
    def adjoint(self) -> ApplyPlan:
        if self._adj is None:
            self._adj = ApplyPlan(self.spec.transposed(), self.trial_set, self.test_set, self._check)
        return self._adj

    def matvec(self, v):
        return self.forward(v)

    def rmatvec(self, w):
        return self.adjoint(w)


def apply(spec: OperatorSpec, test_set: MultiTree, trial_set: MultiTree, v) -> np.ndarray:
    """B restricted to test_set x trial_set times v."""
    return ApplyPlan(spec, test_set, trial_set)(v)


def apply_transpose(spec: OperatorSpec, trial_set: MultiTree, test_set: MultiTree, w) -> np.ndarray:
    """B^T restricted to trial_set x test_set times w."""
    return ApplyPlan(spec.transposed(), trial_set, test_set)(w)


def unidirectional_apply(matrix: SplitMatrix1D, out_tree: MultiTree, in_tree: MultiTree, X, coord: int = 0, counter: dict | None = None) -> np.ndarray:
    """Apply one 1D factor in coordinate `coord`, identity elsewhere (fiberwise).

    Entries are b(in function, out function) without diagonal scaling.
    """
    plan = UniPlan(out_tree.tb, out_tree.codes, in_tree.tb, in_tree.codes, coord, matrix.role, [matrix.term])
    Y = plan.apply(np.asarray(X, dtype=float).reshape(-1, 1))[:, 0]
    if counter is not None:
        counter["mults"] = counter.get("mults", 0) + plan.mults
    return Y
