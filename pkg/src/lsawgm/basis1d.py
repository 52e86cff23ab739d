"""Univariate piecewise-linear biorthogonal (2,2) spline wavelet families.

Every function is stored through its expansion in L2-normalized hat functions
phi_{g,n} = 2^{g/2} hat(2^g x - n) on one dyadic grid g (g = level + 1), which
makes the piecewise-polynomial form exact.  Three families share one interior
mask and differ in how the hat space ends:

* periodic time trial basis: hats wrap modulo 2^g;
* time test basis: hats at every node 0..2^g, half hats at the ends;
* spatial Dirichlet basis: interior nodes 1..2^g-1 only.

Index codes are compact integers ordered by (level, kind, translation) and
are what the multitree machinery stores.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

_R = 2.0 ** -0.5
# interior primal wavelet taps on fine nodes 2k-1 .. 2k+3
WAVELET_TAPS = _R * np.array([0.25, 0.5, -1.5, 0.5, 0.25])
# hat refinement taps on fine nodes 2n-1, 2n, 2n+1
HAT_TAPS = _R * np.array([0.5, 1.0, 0.5])
# dual masks of the periodic family, used only for biorthogonality checks
DUAL_SCALING_TAPS = _R * np.array([-0.25, 0.5, 1.5, 0.5, -0.25])  # nodes 2n-2..2n+2
DUAL_WAVELET_TAPS = _R * np.array([0.5, -1.0, 0.5])  # nodes 2k..2k+2

# left boundary wavelets as (node offsets, taps); the right one is the mirror image
_LEFT_BOUNDARY = {
    "time_test": (np.array([0, 1, 2, 3]), _R * np.array([1.5, -1.5, 0.5, 0.25])),
    "space_dirichlet": (np.array([1, 2, 3]), _R * np.array([-0.75, 0.5, 0.25])),
}

WIDTH = 5  # maximal number of fine hats in one expansion


class Kind(enum.IntEnum):
    SCALING = 0
    WAVELET = 1


class Family(enum.Enum):
    PERIODIC_TIME_TRIAL = "periodic_time_trial"
    TIME_TEST = "time_test"
    SPACE_DIRICHLET = "space_dirichlet"


class InvalidIndexError(ValueError):
    pass


class UnsupportedDerivativeError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Index1D:
    level: int
    translation: int
    kind: Kind = Kind.WAVELET

    def __repr__(self) -> str:
        tag = "S" if self.kind == Kind.SCALING else "W"
        return f"{tag}({self.level},{self.translation})"


class PiecewisePoly:
    """Exact piecewise polynomial; on [x_i, x_{i+1}) the value is
    sum_q coeffs[i, q] * (x - x_i)**q."""

    def __init__(self, breakpoints, coeffs):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if self.breakpoints.ndim != 1 or len(self.breakpoints) != len(self.coeffs) + 1:
            raise ValueError("need one more breakpoint than pieces")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    def derivative(self) -> "PiecewisePoly":
        q = np.arange(1, self.degree + 1)
        if len(q) == 0:
            return PiecewisePoly(self.breakpoints, np.zeros((len(self.coeffs), 1)))
        return PiecewisePoly(self.breakpoints, self.coeffs[:, 1:] * q)

    def __call__(self, x, deriv: int = 0):
        p = self
        for _ in range(deriv):
            p = p.derivative()
        x = np.asarray(x, dtype=float)
        bp = p.breakpoints
        i = np.searchsorted(bp, x, side="right") - 1
        # the right end of the domain takes the value of the last piece
        i = np.where(x == bp[-1], len(bp) - 2, i)
        inside = (i >= 0) & (i < len(bp) - 1)
        ic = np.clip(i, 0, len(bp) - 2)
        s = x - bp[ic]
        val = np.zeros_like(s)
        for q in range(p.degree, -1, -1):
            val = val * s + p.coeffs[ic, q]
        return np.where(inside, val, 0.0)

    def support(self) -> list[tuple[float, float]]:
        """Closure of the set where the function is nonzero, as disjoint intervals."""
        nz = np.any(self.coeffs != 0.0, axis=1)
        out: list[tuple[float, float]] = []
        for i in np.flatnonzero(nz):
            a, b = self.breakpoints[i], self.breakpoints[i + 1]
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
        return out

    def integrate(self) -> float:
        h = np.diff(self.breakpoints)
        q = np.arange(self.degree + 1)
        return float(np.sum(self.coeffs * h[:, None] ** (q + 1) / (q + 1)))


def gauss_points(deg_f: int, deg_g: int, deg_coeff: int = 0) -> int:
    """Gauss-Legendre points per piece: exact for the product plus one spare."""
    return -(-(deg_f + deg_g + deg_coeff + 1) // 2) + 1


def gauss_product_integral(f: PiecewisePoly, g: PiecewisePoly, coeff=(1.0,), extra_breaks=(), npts: int | None = None):
    """Integral of coeff(x) f(x) g(x) by Gauss-Legendre on the breakpoint union.

    coeff holds monomial coefficients in x.  With the default point count the
    rule is exact for the polynomial integrand.
    """
    lo = max(f.breakpoints[0], g.breakpoints[0])
    hi = min(f.breakpoints[-1], g.breakpoints[-1])
    if hi <= lo:
        return 0.0
    bp = np.union1d(np.union1d(f.breakpoints, g.breakpoints), np.asarray(extra_breaks, float))
    bp = bp[(bp >= lo) & (bp <= hi)]
    if npts is None:
        npts = gauss_points(f.degree, g.degree, len(coeff) - 1)
    xg, wg = np.polynomial.legendre.leggauss(npts)
    a, b = bp[:-1], bp[1:]
    x = (0.5 * (b - a))[:, None] * xg[None, :] + (0.5 * (a + b))[:, None]
    w = (0.5 * (b - a))[:, None] * wg[None, :]
    c = np.polynomial.polynomial.polyval(x, np.asarray(coeff, float))
    return float(np.sum(w * c * f(x) * g(x)))


class WaveletBasis:
    """One of the three (2,2) families on [0, T] with minimal level j0."""

    order = 2
    dual_order = 2

    def __init__(self, family: Family, j0: int = 2, T: float = 1.0):
        if j0 < 2:
            raise ValueError("minimal level must be at least 2")
        self.family = Family(family)
        self.j0 = j0
        self.T = float(T)
        self.periodic = self.family == Family.PERIODIC_TIME_TRIAL
        self.dirichlet = self.family == Family.SPACE_DIRICHLET
        # dim V_g = 2^g + _e
        self._e = {Family.PERIODIC_TIME_TRIAL: 0, Family.TIME_TEST: 1, Family.SPACE_DIRICHLET: -1}[self.family]
        self.first_node = 1 if self.dirichlet else 0
        self.D = 3.0  # sup over indices of 2^level * diam(supp)

    def __repr__(self) -> str:
        return f"WaveletBasis({self.family.value})"

    def __eq__(self, other) -> bool:
        return isinstance(other, WaveletBasis) and (self.family, self.j0, self.T) == (other.family, other.j0, other.T)

    def __hash__(self) -> int:
        return hash((self.family, self.j0, self.T))

    # ------------------------------------------------------------------ hats
    def dim(self, g: int) -> int:
        return 2**g + self._e

    def node_range(self, g: int) -> tuple[int, int]:
        """Inclusive range of admissible hat nodes on grid g."""
        n = 2**g
        if self.periodic:
            return 0, n - 1
        if self.dirichlet:
            return 1, n - 1
        return 0, n

    def wrap_nodes(self, g, nodes):
        """Map integer nodes to admissible ones; -1 marks nodes outside the space."""
        nodes = np.asarray(nodes, dtype=np.int64)
        g = np.asarray(g, dtype=np.int64)
        n = np.left_shift(np.int64(1), g)
        if self.periodic:
            return np.mod(nodes, n)
        lo = 1 if self.dirichlet else 0
        hi = n - 1 if self.dirichlet else n
        return np.where((nodes >= lo) & (nodes <= hi), nodes, -1)

    def refine_nodes(self, g, nodes):
        """Fine nodes (N, 3) on grid g+1 and coefficients of the two-scale relation
        phi_{g,n} = sum c phi_{g+1,m}; dropped nodes carry coefficient 0."""
        nodes = np.asarray(nodes, dtype=np.int64)
        fine = 2 * nodes[:, None] + np.array([-1, 0, 1])
        w = self.wrap_nodes(np.asarray(g) + 1, fine)
        c = np.where(w >= 0, HAT_TAPS[None, :], 0.0)
        return np.where(w >= 0, w, 2 * nodes[:, None]), c

    def coarse_nodes(self, g, fine_nodes):
        """Nodes n on grid g whose refinement touches the given grid-(g+1) nodes."""
        fine_nodes = np.asarray(fine_nodes, dtype=np.int64)
        cand = np.concatenate([fine_nodes // 2, (fine_nodes + 1) // 2])
        w = self.wrap_nodes(g, cand)
        return np.unique(w[w >= 0])

    def hat_is_half(self, g, nodes):
        """True for the boundary half hats of the test time family."""
        if self.periodic or self.dirichlet:
            return np.zeros(np.shape(nodes), dtype=bool)
        nodes = np.asarray(nodes)
        return (nodes == 0) | (nodes == np.left_shift(np.int64(1), np.asarray(g, dtype=np.int64)))

    # ------------------------------------------------------------- counting
    def count(self, level: int, kind: Kind) -> int:
        if kind == Kind.SCALING:
            return self.dim(self.j0) if level == self.j0 else 0
        return 2**level if level >= self.j0 else 0

    def validate(self, idx: Index1D) -> None:
        if idx.level < self.j0:
            raise InvalidIndexError(f"{idx!r}: level below j0={self.j0}")
        if idx.kind == Kind.SCALING and idx.level != self.j0:
            raise InvalidIndexError(f"{idx!r}: scaling functions only on level j0")
        if not 0 <= idx.translation < self.count(idx.level, idx.kind):
            raise InvalidIndexError(f"{idx!r}: translation out of range for {self!r}")

    def code(self, level, k, kind):
        level = np.asarray(level, dtype=np.int64)
        k = np.asarray(k, dtype=np.int64)
        kind = np.asarray(kind)
        wav = np.left_shift(np.int64(1), level) + self._e + k
        return np.where(kind == Kind.SCALING, k, wav)

    def code_of(self, idx: Index1D) -> int:
        self.validate(idx)
        return int(self.code(idx.level, idx.translation, int(idx.kind)))

    def decode(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        ns = self.dim(self.j0)
        scal = codes < ns
        level = np.frexp(np.maximum(codes - self._e, 1).astype(np.float64))[1].astype(np.int64) - 1
        level = np.where(scal, self.j0, level)
        k = np.where(scal, codes, codes - (np.left_shift(np.int64(1), level) + self._e))
        kind = np.where(scal, int(Kind.SCALING), int(Kind.WAVELET))
        return level, k, kind

    def index_of(self, code: int) -> Index1D:
        level, k, kind = self.decode(np.array([code]))
        return Index1D(int(level[0]), int(k[0]), Kind(int(kind[0])))

    def indices_on_level(self, level: int) -> list[Index1D]:
        out = []
        if level == self.j0:
            out += [Index1D(level, k, Kind.SCALING) for k in range(self.count(level, Kind.SCALING))]
        out += [Index1D(level, k, Kind.WAVELET) for k in range(self.count(level, Kind.WAVELET))]
        return out

    def codes_on_level(self, level: int) -> np.ndarray:
        """All codes of one level (both kinds on j0), ascending."""
        lo = 0 if level == self.j0 else self.dim(level)
        return np.arange(lo, self.dim(level + 1), dtype=np.int64)

    def levels(self, codes):
        return self.decode(codes)[0]

    # ------------------------------------------------------------ expansion
    def expansion(self, codes):
        """Fine-hat expansion on grid level+1.

        Returns grid (N,), nodes (N, WIDTH), coeffs (N, WIDTH); unused slots carry
        a zero coefficient and a copy of an admissible node.
        """
        level, k, kind = self.decode(codes)
        N = len(level)
        g = level + 1
        nfine = np.left_shift(np.int64(1), g)
        nodes = np.zeros((N, WIDTH), dtype=np.int64)
        coeffs = np.zeros((N, WIDTH))
        scal = kind == Kind.SCALING
        # scaling functions: hat on node n of grid j0 refined once
        n = k + self.first_node
        nodes[scal, :3] = (2 * n[scal, None] - 1) + np.arange(3)
        nodes[scal, 3:] = nodes[scal, 1:2]
        coeffs[scal, :3] = HAT_TAPS
        wav = ~scal
        nodes[wav] = (2 * k[wav, None] - 1) + np.arange(WIDTH)
        coeffs[wav] = WAVELET_TAPS
        if not self.periodic:
            offs, taps = _LEFT_BOUNDARY[self.family.value]
            m = len(offs)
            left = wav & (k == 0)
            right = wav & (k == np.left_shift(np.int64(1), level) - 1)
            nodes[left] = offs[0]
            coeffs[left] = 0.0
            nodes[left, :m] = offs
            coeffs[left, :m] = taps
            nodes[right] = nfine[right, None] - offs[0]
            coeffs[right] = 0.0
            nodes[right, :m] = nfine[right, None] - offs[::-1]
            coeffs[right, :m] = taps[::-1]
        wrapped = self.wrap_nodes(g[:, None], nodes)
        bad = wrapped < 0
        coeffs[bad] = 0.0
        # replace inadmissible nodes by the first admissible node of the row
        first_ok = np.argmax(~bad, axis=1)
        fill = wrapped[np.arange(N), first_ok]
        wrapped = np.where(bad, fill[:, None], wrapped)
        return g, wrapped, coeffs

    def _unwrapped_extent(self, codes):
        """Support [lo, hi] in units of 2^-(level+1), before periodic wrapping."""
        level, k, kind = self.decode(codes)
        scal = kind == Kind.SCALING
        n = k + self.first_node
        lo = np.where(scal, 2 * n - 2, 2 * k - 2)
        hi = np.where(scal, 2 * n + 2, 2 * k + 4)
        if not self.periodic:
            nfine = np.left_shift(np.int64(1), level + 1)
            left = (~scal) & (k == 0)
            right = (~scal) & (k == np.left_shift(np.int64(1), level) - 1)
            lo = np.where(left, 0, lo)
            hi = np.where(right, nfine, hi)
            lo = np.maximum(lo, 0)
            hi = np.minimum(hi, nfine)
        return level, lo, hi

    def support_pieces(self, codes):
        """Supports as at most two closed intervals in [0, T] (absent piece: nan)."""
        level, lo, hi = self._unwrapped_extent(codes)
        h = self.T / np.left_shift(np.int64(1), level + 1).astype(float)
        a = lo * h
        b = hi * h
        plo = np.full((len(a), 2), np.nan)
        phi = np.full((len(a), 2), np.nan)
        plo[:, 0], phi[:, 0] = a, b
        if self.periodic:
            T = self.T
            under = a < 0
            over = b > T
            plo[under, 0], phi[under, 0] = 0.0, b[under]
            plo[under, 1], phi[under, 1] = a[under] + T, T
            plo[over, 0], phi[over, 0] = a[over], T
            plo[over, 1], phi[over, 1] = 0.0, b[over] - T
        return plo, phi

    def is_boundary_adapted(self, codes):
        """Wavelets whose mask differs from the interior one."""
        level, k, kind = self.decode(codes)
        if self.periodic:
            return np.zeros(len(level), dtype=bool)
        wav = kind == Kind.WAVELET
        return wav & ((k == 0) | (k == np.left_shift(np.int64(1), level) - 1))

    # ---------------------------------------------------- function objects
    def pp(self, idx: Index1D) -> PiecewisePoly:
        """Exact piecewise-linear representation on [0, T]."""
        code = self.code_of(idx)
        g, nodes, coeffs = self.expansion(np.array([code]))
        g = int(g[0])
        n = 2**g
        vals = np.zeros(n + 1)
        for node, c in zip(nodes[0], coeffs[0]):
            if c == 0.0:
                continue
            vals[node] += c * 2.0 ** (g / 2) / math.sqrt(self.T)
            if self.periodic and node == 0:
                vals[n] += c * 2.0 ** (g / 2) / math.sqrt(self.T)
        x = np.linspace(0.0, self.T, n + 1)
        slope = np.diff(vals) / np.diff(x)
        return PiecewisePoly(x, np.column_stack([vals[:-1], slope]))

    def eval(self, idx: Index1D, x, deriv: int = 0):
        if deriv not in (0, 1):
            raise UnsupportedDerivativeError(f"derivative order {deriv} exceeds d-1 = 1")
        x = np.asarray(x, dtype=float)
        if self.periodic:
            x = np.mod(x, self.T)
        elif np.any((x < 0) | (x > self.T)):
            raise ValueError("evaluation point outside [0, T]")
        return self.pp(idx)(x, deriv)

    def support(self, idx: Index1D) -> list[tuple[float, float]]:
        plo, phi = self.support_pieces(np.array([self.code_of(idx)]))
        out = [(float(plo[0, i]), float(phi[0, i])) for i in range(2) if not np.isnan(plo[0, i])]
        return sorted(out)

    def norms(self, idx: Index1D) -> tuple[float, float]:
        """(L2 norm, H1 seminorm) by Gauss quadrature on the exact representation."""
        p = self.pp(idx)
        dp = p.derivative()
        return math.sqrt(gauss_product_integral(p, p)), math.sqrt(gauss_product_integral(dp, dp))

    def norms_table(self, codes):
        """Vectorized closed-form (L2 norm, H1 seminorm) from the hat Gram matrices."""
        g, nodes, coeffs = self.expansion(codes)
        n = np.left_shift(np.int64(1), g)[:, None, None]
        d = nodes[:, :, None] - nodes[:, None, :]
        if self.periodic:
            d = np.mod(d, n)
            adj = (d == 1) | (d == n - 1)
        else:
            adj = np.abs(d) == 1
        same = d == 0
        half = self.hat_is_half(g[:, None], nodes)
        cc = coeffs[:, :, None] * coeffs[:, None, :]
        # duplicate nodes only occur in padded slots whose coefficients vanish
        mdiag = np.where(half, 1.0 / 3.0, 2.0 / 3.0)
        sdiag = np.where(half, 1.0, 2.0)
        eye = np.eye(WIDTH, dtype=bool)[None]
        m = np.sum(cc * (same & eye) * mdiag[:, :, None], axis=(1, 2)) + np.sum(cc * adj, axis=(1, 2)) / 6.0
        s = np.sum(cc * (same & eye) * sdiag[:, :, None], axis=(1, 2)) - np.sum(cc * adj, axis=(1, 2))
        s = s * 4.0 ** g.astype(float)
        return np.sqrt(m) / 1.0, np.sqrt(s) / self.T

    # ----------------------------------------------------- geometric queries
    def near(self, level: int, qlo, qhi, radius: float, strict: bool = False):
        """All functions of one level close to query intervals.

        qlo, qhi: arrays of query intervals in [0, T].  With strict=True the
        test is a positive-measure overlap, otherwise dist <= radius.
        Returns (query_index, code) arrays.
        """
        qlo = np.asarray(qlo, dtype=float)
        qhi = np.asarray(qhi, dtype=float)
        ok = ~np.isnan(qlo)
        qid = np.flatnonzero(ok)
        a, b = qlo[ok], qhi[ok]
        r = 0.0 if strict else float(radius)
        qs, cs = [], []
        h = self.T * 2.0 ** -(level + 1)
        # wavelet candidates from the interior support formula [2k-2, 2k+4] h
        klo = np.ceil(((a - r) / h - 4) / 2).astype(np.int64)
        khi = np.floor(((b + r) / h + 2) / 2).astype(np.int64)
        nw = 2**level
        if not self.periodic:
            klo = np.maximum(klo, 0)
            khi = np.minimum(khi, nw - 1)
        else:
            khi = np.minimum(khi, klo + nw - 1)
        cnt = np.maximum(khi - klo + 1, 0)
        rep = np.repeat(np.arange(len(a)), cnt)
        k = np.repeat(klo, cnt) + _ranges(cnt)
        if self.periodic:
            k = np.mod(k, nw)
        qs.append(qid[rep])
        cs.append(self.code(level, k, int(Kind.WAVELET)))
        if level == self.j0:
            H = self.T * 2.0 ** -self.j0
            nlo = np.ceil((a - r) / H - 1).astype(np.int64)
            nhi = np.floor((b + r) / H + 1).astype(np.int64)
            lo_n, hi_n = self.node_range(self.j0)
            ns = self.dim(self.j0)
            if not self.periodic:
                nlo = np.maximum(nlo, lo_n)
                nhi = np.minimum(nhi, hi_n)
            else:
                nhi = np.minimum(nhi, nlo + ns - 1)
            cnt = np.maximum(nhi - nlo + 1, 0)
            rep = np.repeat(np.arange(len(a)), cnt)
            nn = np.repeat(nlo, cnt) + _ranges(cnt)
            if self.periodic:
                nn = np.mod(nn, ns)
            qs.append(qid[rep])
            cs.append(self.code(level, nn - self.first_node, int(Kind.SCALING)))
        q = np.concatenate(qs)
        c = np.concatenate(cs)
        if len(q) == 0:
            return q, c
        plo, phi = self.support_pieces(c)
        aq, bq = qlo[q], qhi[q]
        if strict:
            hit = (np.fmax(plo, aq[:, None]) < np.fmin(phi, bq[:, None])) & ~np.isnan(plo)
        else:
            dist = np.fmax(np.fmax(plo - bq[:, None], aq[:, None] - phi), 0.0)
            hit = (dist <= r) & ~np.isnan(plo)
        keep = np.any(hit, axis=1)
        q, c = q[keep], c[keep]
        if self.periodic and len(q):
            key = np.unique(q * (1 << 32) + c)
            q, c = key >> 32, key & ((1 << 32) - 1)
        return q, c

    def near_codes(self, src: "WaveletBasis", src_codes, level: int, radius: float, strict: bool = False):
        """Functions of this basis on `level` near the supports of src functions.

        Returns (row, code) pairs, row indexing src_codes, sorted and unique.
        """
        plo, phi = src.support_pieces(src_codes)
        n = len(plo)
        rows, codes = [], []
        for p in range(2):
            q, c = self.near(level, plo[:, p], phi[:, p], radius, strict)
            rows.append(q)
            codes.append(c)
        q = np.concatenate(rows)
        c = np.concatenate(codes)
        key = np.unique(q.astype(np.int64) * (1 << 32) + c)
        del n
        return key >> 32, key & ((1 << 32) - 1)

    def neighbors(self, idx: Index1D, dst: "WaveletBasis", level_offset: int) -> list[Index1D]:
        """Indices mu of dst on level |idx| + offset with dist(supp) <= D_dst 2^-|mu|."""
        if level_offset < 0:
            raise ValueError("level offset must be nonnegative")
        code = self.code_of(idx)
        L = idx.level + level_offset
        _, c = dst.near_codes(self, np.array([code]), L, dst.D * dst.T * 2.0**-L)
        return [dst.index_of(int(x)) for x in np.sort(c)]


def _ranges(cnt):
    """Concatenation of arange(c) for c in cnt."""
    cnt = np.asarray(cnt, dtype=np.int64)
    tot = int(cnt.sum())
    if tot == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.repeat(np.cumsum(cnt) - cnt, cnt)
    return np.arange(tot, dtype=np.int64) - starts


_CACHE: dict = {}


def periodic_time_trial(j0: int = 2, T: float = 1.0) -> WaveletBasis:
    return _get(Family.PERIODIC_TIME_TRIAL, j0, T)


def time_test(j0: int = 2, T: float = 1.0) -> WaveletBasis:
    return _get(Family.TIME_TEST, j0, T)


def space_dirichlet(j0: int = 2) -> WaveletBasis:
    return _get(Family.SPACE_DIRICHLET, j0, 1.0)


def _get(family, j0, T):
    key = (family, j0, float(T))
    if key not in _CACHE:
        _CACHE[key] = WaveletBasis(family, j0, T)
    return _CACHE[key]


# functional spellings of the basis queries
def eval(basis: WaveletBasis, idx: Index1D, x, deriv: int = 0):  # noqa: A001 - mirrors the operation name
    basis.validate(idx)
    return basis.eval(idx, x, deriv)


def support(basis: WaveletBasis, idx: Index1D):
    return basis.support(idx)


def neighbors(src_basis: WaveletBasis, idx: Index1D, dst_basis: WaveletBasis, level_offset: int):
    return src_basis.neighbors(idx, dst_basis, level_offset)


def norms(basis: WaveletBasis, idx: Index1D):
    basis.validate(idx)
    return basis.norms(idx)
