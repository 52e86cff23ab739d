"""Bilinear-form descriptors, exact 1D entries, diagonal scalings, the dense
reference matrix, Riesz-constant estimates and operator-norm bounds."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis1d import Family, Index1D, UnsupportedDerivativeError, WaveletBasis, gauss_product_integral
from .indexset import MultiTree, TensorBasis

DENSE_GUARD = 10**7


class SizeGuardError(ValueError):
    pass


@dataclass(frozen=True)
class FormTerm1D:
    """b(u, v) = int coeff(x) D^trial_deriv u  D^test_deriv v dx; coeff as monomial coefficients."""

    trial_deriv: int = 0
    test_deriv: int = 0
    coeff: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.trial_deriv not in (0, 1) or self.test_deriv not in (0, 1):
            raise UnsupportedDerivativeError("derivative orders must be 0 or 1")

    def transposed(self) -> "FormTerm1D":
        return FormTerm1D(self.test_deriv, self.trial_deriv, self.coeff)

    @property
    def constant(self) -> bool:
        return all(c == 0.0 for c in self.coeff[1:])

    def element(self) -> np.ndarray:
        """Reference cell matrix E[out_shape, in_shape] for shapes (1-x, x) on [0, 1].

        Rows belong to the test factor, columns to the trial factor.
        """
        if not self.constant:
            raise NotImplementedError("cell matrices are only tabulated for constant coefficients")
        dt, dr = self.test_deriv, self.trial_deriv
        if (dt, dr) == (0, 0):
            e = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
        elif (dt, dr) == (1, 1):
            e = np.array([[1.0, -1.0], [-1.0, 1.0]])
        elif (dt, dr) == (0, 1):
            e = np.array([[-0.5, 0.5], [-0.5, 0.5]])
        else:
            e = np.array([[-0.5, -0.5], [0.5, 0.5]])
        return self.coeff[0] * e


MASS = FormTerm1D(0, 0)
STIFF = FormTerm1D(1, 1)
DT = FormTerm1D(1, 0)  # <u', v>
CONV = FormTerm1D(1, 0)


@dataclass(frozen=True)
class OperatorSpec:
    n: int
    terms: tuple[tuple[FormTerm1D, ...], ...]
    alpha: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if len(self.terms) < 1:
            raise ValueError("need at least one term")
        if any(len(t) != self.n + 1 for t in self.terms):
            raise ValueError("every term needs one factor per coordinate")
        if not (0 < self.alpha <= self.gamma):
            raise ValueError("need 0 < alpha <= gamma")

    @property
    def M(self) -> int:
        return len(self.terms)

    def transposed(self) -> "OperatorSpec":
        return OperatorSpec(self.n, tuple(tuple(f.transposed() for f in t) for t in self.terms), self.alpha, self.gamma)


def heat_operator(n: int = 1) -> OperatorSpec:
    """u_t - Laplace u: (d/dt x mass) + sum_i (mass x stiffness_i)."""
    terms = [(DT,) + (MASS,) * n]
    for i in range(n):
        terms.append((MASS,) + tuple(STIFF if k == i else MASS for k in range(n)))
    return OperatorSpec(n, tuple(terms), 1.0, 1.0)


def cdr_operator() -> OperatorSpec:
    """u_t - u_xx + u_x + u on (0,1); a(v, v) = |v'|^2 + |v|^2 on H^1_0 gives alpha = 1, gamma = sqrt(3)."""
    terms = ((DT, MASS), (MASS, STIFF), (MASS, CONV), (MASS, MASS))
    return OperatorSpec(1, terms, 1.0, math.sqrt(3.0))


# ------------------------------------------------------------------ entries
_USE_CACHE = True


def set_entry_cache(enabled: bool) -> None:
    global _USE_CACHE
    _USE_CACHE = bool(enabled)
    _entry_cached.cache_clear()


@lru_cache(maxsize=None)
def _pp(basis: WaveletBasis, idx: Index1D):
    return basis.pp(idx)


def _entry(term: FormTerm1D, tb: WaveletBasis, ti: Index1D, rb: WaveletBasis, ri: Index1D, npts):
    f = _pp(tb, ti)
    g = _pp(rb, ri)
    for _ in range(term.test_deriv):
        f = f.derivative()
    for _ in range(term.trial_deriv):
        g = g.derivative()
    return gauss_product_integral(f, g, term.coeff, npts=npts)


@lru_cache(maxsize=1 << 20)
def _entry_cached(term, tb, ti, rb, ri, npts):
    return _entry(term, tb, ti, rb, ri, npts)


def entry1d(term: FormTerm1D, test: tuple[WaveletBasis, Index1D], trial: tuple[WaveletBasis, Index1D], npts: int | None = None) -> float:
    """int coeff D^test_deriv psi_test D^trial_deriv psi_trial by Gauss-Legendre on the breakpoint union."""
    tb, ti = test
    rb, ri = trial
    tb.validate(ti)
    rb.validate(ri)
    if tb.T != rb.T:
        raise ValueError("bases live on different intervals")
    if _USE_CACHE:
        return _entry_cached(term, tb, ti, rb, ri, npts)
    return _entry(term, tb, ti, rb, ri, npts)


def _overlap_pairs(out_b: WaveletBasis, out_codes, in_b: WaveletBasis, in_codes):
    """Index pairs (i, j) whose supports intersect in a set of positive measure."""
    olo, ohi = out_b.support_pieces(out_codes)
    ilo, ihi = in_b.support_pieces(in_codes)
    hit = np.zeros((len(out_codes), len(in_codes)), dtype=bool)
    for p in range(2):
        for q in range(2):
            a = np.fmax(olo[:, p, None], ilo[None, :, q])
            b = np.fmin(ohi[:, p, None], ihi[None, :, q])
            hit |= a < b
    return np.nonzero(hit)


def matrix1d(term: FormTerm1D, out_b: WaveletBasis, out_codes, in_b: WaveletBasis, in_codes, npts=None) -> np.ndarray:
    """Dense 1D matrix [entry1d(term, out_i, in_j)] by quadrature (rows: test factor)."""
    out_codes = np.asarray(out_codes, dtype=np.int64)
    in_codes = np.asarray(in_codes, dtype=np.int64)
    A = np.zeros((len(out_codes), len(in_codes)))
    oi = [out_b.index_of(int(c)) for c in out_codes]
    ii = [in_b.index_of(int(c)) for c in in_codes]
    for i, j in zip(*_overlap_pairs(out_b, out_codes, in_b, in_codes)):
        A[i, j] = entry1d(term, (out_b, oi[i]), (in_b, ii[j]), npts)
    return A


# ----------------------------------------------------------- preconditioner
def _norm_tables(bases, codes, route: str):
    l2, h1 = [], []
    for i, b in enumerate(bases):
        u, inv = np.unique(codes[:, i], return_inverse=True)
        if route == "closed":
            vals = np.column_stack(b.norms_table(u))
        else:
            vals = np.array([b.norms(b.index_of(int(c))) for c in u]).reshape(-1, 2)
        a, h = vals[inv.reshape(-1), 0], vals[inv.reshape(-1), 1]
        l2.append(a)
        h1.append(h)
    return l2, h1


def weights(tb: TensorBasis, codes, route: str = "closed") -> np.ndarray:
    """Diagonal scaling: X-norm proxy for periodic-time (trial) sets, Y-norm proxy otherwise.

    route='closed' uses the hat-Gram closed forms, route='quadrature' the Gauss route.
    """
    codes = np.asarray(codes, dtype=np.int64).reshape(-1, tb.d)
    l2, h1 = _norm_tables(tb.bases, codes, route)
    sl2 = [a**2 for a in l2[1:]]
    sh1 = [h**2 for h in h1[1:]]
    prod = np.ones(len(codes))
    for a in sl2:
        prod = prod * a
    nv = prod.copy()
    for i in range(len(sl2)):
        t = sh1[i].copy()
        for k in range(len(sl2)):
            if k != i:
                t = t * sl2[k]
        nv = nv + t
    if tb.bases[0].family == Family.PERIODIC_TIME_TRIAL:
        lmax = np.max(tb.levels(codes)[:, 1:], axis=1).astype(float)
        nvd = prod / (1.0 + 4.0**lmax)
        return 1.0 / np.sqrt(l2[0] ** 2 * nv + h1[0] ** 2 * nvd)
    return 1.0 / np.sqrt(l2[0] ** 2 * nv)


def set_weights(s: MultiTree) -> np.ndarray:
    """``weights`` of a whole set, memoized on the (immutable) set."""
    if s._weights is None:
        s._weights = weights(s.tb, s.codes)
    return s._weights


def preconditioner_weights(tb: TensorBasis, idx) -> float:
    """Scalar form of ``weights`` for one TensorIndex."""
    return float(weights(tb, tb.unpack(np.array([tb.key_of(idx)])))[0])


# -------------------------------------------------------------- dense oracle
def assemble_dense(spec: OperatorSpec, out_set: MultiTree, in_set: MultiTree, guard: int = DENSE_GUARD, npts=None) -> np.ndarray:
    """D^out [sum_m prod_i entry1d] D^in, rows = out_set (test side of spec), cols = in_set.

    Assemble B with (test set, trial set) and B^T with (spec.transposed(), trial set, test set).
    """
    if len(out_set) * len(in_set) > guard:
        raise SizeGuardError(f"dense matrix {len(out_set)}x{len(in_set)} exceeds guard {guard}")
    oc, ic = out_set.codes, in_set.codes
    A = np.zeros((len(oc), len(ic)))
    for term in spec.terms:
        P = np.ones_like(A)
        for i, f in enumerate(term):
            uo, io = np.unique(oc[:, i], return_inverse=True)
            ui, ii = np.unique(ic[:, i], return_inverse=True)
            m = matrix1d(f, out_set.tb.bases[i], uo, in_set.tb.bases[i], ui, npts)
            P *= m[np.ix_(io.reshape(-1), ii.reshape(-1))]
        A += P
    wo = weights(out_set.tb, oc, route="quadrature")
    wi = weights(in_set.tb, ic, route="quadrature")
    return wo[:, None] * A * wi[None, :]


def export_matrix(path, A: np.ndarray) -> None:
    """Row-major whitespace-separated text, 17 significant digits."""
    np.savetxt(path, np.atleast_2d(A), fmt="%.17g")


# --------------------------------------------------------------- hat grams
def hat_band(out_b: WaveletBasis, in_b: WaveletBasis, G: int, out_nodes, form: FormTerm1D):
    """Nonzero hat-hat entries on grid G for the given output nodes.

    Returns (row, in_node, value) with row indexing out_nodes.  Entries are
    b(phi^in_{G,m}, phi^out_{G,n}) for L2-normalized hats.
    """
    out_nodes = np.asarray(out_nodes, dtype=np.int64)
    N = 2**G
    T = out_b.T
    E = form.element() * (2.0**G / T) ** (form.test_deriv + form.trial_deriv)
    rows, nodes, vals = [], [], []
    for so, off in ((1, -1), (0, 0)):  # cell left of the node: node is its right corner
        cell = out_nodes + off
        if out_b.periodic:
            cell = np.mod(cell, N)
            okc = np.ones(len(cell), dtype=bool)
        else:
            okc = (cell >= 0) & (cell < N)
        for si, d in ((0, 0), (1, 1)):
            m = in_b.wrap_nodes(G, cell + d)
            ok = okc & (m >= 0)
            rows.append(np.flatnonzero(ok))
            nodes.append(m[ok])
            vals.append(np.full(int(ok.sum()), E[so, si]))
    return np.concatenate(rows), np.concatenate(nodes), np.concatenate(vals)


def _local(basis: WaveletBasis, g: int, nodes):
    return np.asarray(nodes) - basis.node_range(g)[0]


def hat_matrix(basis: WaveletBasis, G: int, form: FormTerm1D) -> sp.csr_matrix:
    lo, hi = basis.node_range(G)
    nodes = np.arange(lo, hi + 1)
    r, m, v = hat_band(basis, basis, G, nodes, form)
    n = len(nodes)
    return sp.csr_matrix((v, (r, _local(basis, G, m))), shape=(n, n))


def prolongation(basis: WaveletBasis, g: int) -> sp.csr_matrix:
    """Rows: hats of grid g, columns: hats of grid g+1 (two-scale coefficients)."""
    lo, hi = basis.node_range(g)
    nodes = np.arange(lo, hi + 1)
    fine, c = basis.refine_nodes(g, nodes)
    flo, fhi = basis.node_range(g + 1)
    rows = np.repeat(np.arange(len(nodes)), 3)
    return sp.csr_matrix((c.reshape(-1), (rows, fine.reshape(-1) - flo)), shape=(len(nodes), fhi - flo + 1))


def synthesis_matrix(basis: WaveletBasis, codes, G: int) -> sp.csr_matrix:
    """Rows: functions, columns: hats of grid G (needs G >= level + 1 for every function)."""
    codes = np.asarray(codes, dtype=np.int64)
    g, nodes, coeffs = basis.expansion(codes)
    if len(g) and G < int(g.max()):
        raise ValueError("grid too coarse for the given functions")
    lo, hi = basis.node_range(G)
    R, C, V = [], [], []
    for gg in np.unique(g):
        rows = np.flatnonzero(g == gg)
        glo, ghi = basis.node_range(int(gg))
        m = sp.csr_matrix(
            (coeffs[rows].reshape(-1), (np.repeat(np.arange(len(rows)), nodes.shape[1]), nodes[rows].reshape(-1) - glo)),
            shape=(len(rows), ghi - glo + 1),
        )
        for q in range(int(gg), G):
            m = m @ prolongation(basis, q)
        m = m.tocoo()
        R.append(rows[m.row])
        C.append(m.col)
        V.append(m.data)
    if not R:
        return sp.csr_matrix((0, hi - lo + 1))
    return sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))), shape=(len(codes), hi - lo + 1))


# ------------------------------------------------------------ Riesz bounds
class NormKind(enum.Enum):
    L2 = "L2"
    H1 = "H1"
    DUAL_PROXY = "DualProxy"


_DUAL_FINE = 12


def gram_matrix(basis: WaveletBasis, norm: NormKind, J: int) -> tuple[np.ndarray, np.ndarray]:
    """(Gram matrix in the chosen norm, normalization vector) for all functions of levels <= J."""
    norm = NormKind(norm)
    codes = np.arange(0, basis.dim(J + 1), dtype=np.int64)
    if norm == NormKind.DUAL_PROXY:
        G = max(J + 3, _DUAL_FINE)
        E = synthesis_matrix(basis, codes, G)
        Mm = hat_matrix(basis, G, MASS)
        K = (Mm + hat_matrix(basis, G, STIFF)).tocsc()
        R = (Mm @ E.T).toarray()
        Z = spla.splu(K).solve(R)
        gram = R.T @ Z
        l2, _ = basis.norms_table(codes)
        lev = basis.decode(codes)[0].astype(float)
        scale = l2**2 / (1.0 + 4.0**lev)
        return gram, scale
    E = synthesis_matrix(basis, codes, J + 1)
    Mm = hat_matrix(basis, J + 1, MASS)
    if norm == NormKind.H1:
        Mm = Mm + hat_matrix(basis, J + 1, STIFF)
    gram = (E @ Mm @ E.T).toarray()
    return gram, np.diag(gram).copy()


def estimate_riesz_constants(basis: WaveletBasis, norm: NormKind, J: int) -> tuple[float, float]:
    """Extreme eigenvalues of the normalized Gram matrix on levels j0..J."""
    if J < basis.j0:
        raise ValueError("J must be >= j0")
    gram, scale = gram_matrix(basis, norm, J)
    s = 1.0 / np.sqrt(scale)
    ev = scipy.linalg.eigvalsh(s[:, None] * gram * s[None, :])
    return float(ev[0]), float(ev[-1])


@dataclass(frozen=True)
class RieszConstants:
    """(c, C) pairs for every univariate factor; space entries per coordinate."""

    time_trial_L2: tuple[float, float]
    time_trial_H1: tuple[float, float]
    time_test_L2: tuple[float, float]
    space_L2: tuple[tuple[float, float], ...]
    space_V: tuple[tuple[float, float], ...]
    space_Vdual: tuple[tuple[float, float], ...]

    @classmethod
    def unit(cls, n: int = 1) -> "RieszConstants":
        one = (1.0, 1.0)
        return cls(one, one, one, (one,) * n, (one,) * n, (one,) * n)

    @classmethod
    def estimate(cls, n: int = 1, J: int = 8, j0: int = 2, T: float = 1.0) -> "RieszConstants":
        from .basis1d import periodic_time_trial, space_dirichlet, time_test

        per, tt, sd = periodic_time_trial(j0, T), time_test(j0, T), space_dirichlet(j0)
        sl2 = estimate_riesz_constants(sd, NormKind.L2, J)
        sv = estimate_riesz_constants(sd, NormKind.H1, J)
        sdu = estimate_riesz_constants(sd, NormKind.DUAL_PROXY, J)
        return cls(
            estimate_riesz_constants(per, NormKind.L2, J),
            estimate_riesz_constants(per, NormKind.H1, J),
            estimate_riesz_constants(tt, NormKind.L2, J),
            (sl2,) * n,
            (sv,) * n,
            (sdu,) * n,
        )

    def all_values(self):
        vals = list(self.time_trial_L2 + self.time_trial_H1 + self.time_test_L2)
        for group in (self.space_L2, self.space_V, self.space_Vdual):
            for pair in group:
                vals += list(pair)
        return vals


@dataclass(frozen=True)
class OperatorBounds:
    normB: float
    normBinv: float
    kappa: float
    cX: float
    CX: float
    cY: float
    CY: float
    details: dict = field(default_factory=dict, compare=False)


def _tensor_v(l2, v):
    """Lower/upper Riesz bounds of the tensor V basis from univariate ones."""
    n = len(l2)
    lo = min(min(l2[m][0], v[m][0]) * math.prod(l2[k][0] for k in range(n) if k != m) for m in range(n))
    hi = max(max(l2[m][1], v[m][1]) * math.prod(l2[k][1] for k in range(n) if k != m) for m in range(n))
    return lo, hi


def operator_bounds(riesz: RieszConstants, alpha: float, gamma: float) -> OperatorBounds:
    """Bounds for ||B||, ||B^-1|| and kappa(B^T B) = (||B|| ||B^-1||)^2."""
    if alpha <= 0 or gamma <= 0 or any(x <= 0 for x in riesz.all_values()):
        raise ValueError("bounds need positive inputs")
    cV, CV = _tensor_v(riesz.space_L2, riesz.space_V)
    cVd, CVd = _tensor_v(riesz.space_L2, riesz.space_Vdual)
    cX = min(riesz.time_trial_L2[0] * cV, riesz.time_trial_H1[0] * cVd)
    CX = max(riesz.time_trial_L2[1] * CV, riesz.time_trial_H1[1] * CVd)
    cY = riesz.time_test_L2[0] * cV
    CY = riesz.time_test_L2[1] * CV
    gB = math.sqrt(2.0) * max(1.0, gamma)
    bB = math.sqrt(2.0) * max(1.0, 1.0 / alpha) / (alpha * min(1.0, gamma**-2))
    normB = gB * math.sqrt(CX * CY)
    normBinv = bB / math.sqrt(cX * cY)
    return OperatorBounds(normB, normBinv, (normB * normBinv) ** 2, cX, CX, cY, CY, {"cV": cV, "CV": CV, "cVd": cVd, "CVd": CVd})
