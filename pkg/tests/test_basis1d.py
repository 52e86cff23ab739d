import numpy as np
import pytest

from lsawgm.basis1d import (
    DUAL_SCALING_TAPS,
    DUAL_WAVELET_TAPS,
    HAT_TAPS,
    WAVELET_TAPS,
    Index1D,
    InvalidIndexError,
    Kind,
    UnsupportedDerivativeError,
    eval as beval,
    gauss_product_integral,
    neighbors,
    norms,
    periodic_time_trial,
    space_dirichlet,
    support,
    time_test,
)

BASES = [periodic_time_trial(), time_test(), space_dirichlet()]
IDS = ["periodic", "test", "dirichlet"]


def _all(basis, J):
    return [i for j in range(basis.j0, J + 1) for i in basis.indices_on_level(j)]


def test_scaling_functions_sum_to_constant():
    # L2-normalized level-2 hats add up to 2^(j0/2) = 2 on the whole interval
    b = time_test()
    x = np.linspace(0.0, 1.0, 57)
    total = sum(b.eval(Index1D(2, k, Kind.SCALING), x) for k in range(b.dim(2)))
    assert np.allclose(total, 2.0, atol=1e-14)


@pytest.mark.parametrize("basis", BASES, ids=IDS)
def test_vanishing_moment(basis):
    for idx in _all(basis, 7):
        if idx.kind == Kind.SCALING:
            continue
        flagged = basis.is_boundary_adapted(np.array([basis.code_of(idx)]))[0]
        m = basis.pp(idx).integrate()
        if not flagged or basis.dirichlet:
            assert abs(m) < 1e-12, idx


def test_dirichlet_boundary_values():
    b = space_dirichlet()
    for idx in _all(b, 7):
        assert b.eval(idx, 0.0) == 0.0
        assert abs(b.eval(idx, 1.0)) < 1e-14


def test_periodicity():
    b = periodic_time_trial()
    for idx in _all(b, 6):
        assert abs(b.eval(idx, 0.0) - b.eval(idx, 1.0)) < 1e-12


def test_mask_biorthogonality_periodic():
    # primal hat/wavelet masks against the dual masks on a periodic fine grid
    n = 32
    def vec(taps, start):
        v = np.zeros(n)
        for i, t in enumerate(taps):
            v[(start + i) % n] += t
        return v
    P = [vec(HAT_TAPS, 2 * k - 1) for k in range(n // 2)]
    W = [vec(WAVELET_TAPS, 2 * k - 1) for k in range(n // 2)]
    Pd = [vec(DUAL_SCALING_TAPS, 2 * k - 2) for k in range(n // 2)]
    Wd = [vec(DUAL_WAVELET_TAPS, 2 * k) for k in range(n // 2)]
    G = np.array([[a @ b for b in Pd + Wd] for a in P + W])
    assert np.allclose(G, np.eye(n), atol=1e-12)


@pytest.mark.parametrize("basis", BASES, ids=IDS)
def test_refinement_exactness(basis):
    """eval equals the hat expansion on the next finer grid."""
    for idx in _all(basis, 5)[::3]:
        g, nodes, coeffs = basis.expansion(np.array([basis.code_of(idx)]))
        x = np.linspace(0, 1, 301)
        ref = np.zeros_like(x)
        N = 2 ** int(g[0])
        for node, c in zip(nodes[0], coeffs[0]):
            for shift in ((-1, 0, 1) if basis.periodic else (0,)):
                ref += c * 2 ** (g[0] / 2) * np.maximum(0.0, 1 - np.abs(N * x - node - shift * N))
        assert np.allclose(basis.eval(idx, x), ref, atol=1e-12)


def test_unsupported_derivative_and_invalid_index():
    b = time_test()
    with pytest.raises(UnsupportedDerivativeError):
        b.eval(Index1D(3, 0), 0.5, deriv=2)
    with pytest.raises(InvalidIndexError):
        b.eval(Index1D(3, 8), 0.5)
    with pytest.raises(InvalidIndexError):
        b.eval(Index1D(4, 0, Kind.SCALING), 0.5)
    with pytest.raises(ValueError):
        b.eval(Index1D(3, 0), 1.5)


def test_support_examples():
    b = time_test()
    for k in range(1, b.dim(2) - 1):
        assert support(b, Index1D(2, k, Kind.SCALING)) == [((k - 1) / 4, (k + 1) / 4)]
    for basis in BASES:
        for idx in _all(basis, 8):
            if idx.kind == Kind.WAVELET:
                assert sum(h - l for l, h in support(basis, idx)) <= basis.D * 2.0**-idx.level + 1e-15


@pytest.mark.parametrize("basis", BASES, ids=IDS)
def test_support_against_grid_scan(basis):
    """Support agrees with a scan of a fine dyadic grid for nonzero values."""
    x = (np.arange(2**12) + 0.5) / 2**12
    for idx in _all(basis, 5):
        v = basis.eval(idx, x)
        nz = np.abs(v) > 1e-14
        pieces = support(basis, idx)
        inside = np.zeros_like(nz)
        for lo, hi in pieces:
            inside |= (x > lo) & (x < hi)
        assert np.array_equal(nz, inside), idx


def test_periodic_wrapped_support():
    b = periodic_time_trial()
    pieces = support(b, Index1D(3, 0))
    assert len(pieces) == 2 and pieces[0][0] == 0.0 and pieces[1][1] == 1.0
    assert sum(h - l for l, h in pieces) <= b.D * 2**-3


def _dist(p, q):
    # distance inside [0, T] between unions of support pieces
    return min(max(0.0, c - b, a - d) for a, b in p for c, d in q)


@pytest.mark.parametrize("pair", [(0, 1), (1, 0), (2, 2), (0, 0)])
@pytest.mark.parametrize("offset", [0, 1, 2])
def test_neighbors_brute_force(pair, offset):
    src, dst = BASES[pair[0]], BASES[pair[1]]
    for idx in _all(src, 5)[::2]:
        got = set(neighbors(src, idx, dst, offset))
        L = idx.level + offset
        want = {m for m in dst.indices_on_level(L)
                if _dist(support(src, idx), support(dst, m)) <= dst.D * 2.0**-L + 1e-14}
        assert got == want, (idx, offset)


def test_neighbors_symmetry_and_bounded_count():
    a, b = time_test(), periodic_time_trial()
    for idx in _all(a, 5):
        for m in neighbors(a, idx, b, 0):
            assert idx in neighbors(b, m, a, 0)
    counts = [max(len(neighbors(a, i, a, 0)) for i in a.indices_on_level(j)) for j in range(2, 13)]
    assert len(set(counts[3:])) == 1  # independent of level once interior functions dominate


def test_norms_examples():
    b = time_test()
    # interior hat: int phi^2 = 2/3 for L2-normalized hats; the scaling functions are level-j0 hats
    l2, _ = norms(b, Index1D(2, 2, Kind.SCALING))
    assert abs(l2**2 - 2.0 / 3.0) < 1e-14
    for basis in BASES:
        h = [norms(basis, Index1D(j, 2**(j - 1)))[1] for j in range(5, 11)]
        ratios = [h[i + 1] / h[i] for i in range(len(h) - 1)]
        assert all(abs(r - 2.0) < 0.02 for r in ratios[1:])


@pytest.mark.parametrize("basis", BASES, ids=IDS)
def test_closed_form_norms_match_quadrature(basis):
    codes = np.concatenate([basis.codes_on_level(j) for j in range(2, 7)])
    l2, h1 = basis.norms_table(codes)
    q = np.array([norms(basis, basis.index_of(int(c))) for c in codes])
    assert np.allclose(l2, q[:, 0], rtol=1e-13) and np.allclose(h1, q[:, 1], rtol=1e-13)


def test_bounded_overlap_per_level():
    for basis in BASES:
        worst = []
        for j in range(2, 13):
            codes = basis.codes_on_level(j)
            lo, hi = basis.support_pieces(codes)
            # count same-level functions whose support meets a given one
            q, c = basis.near(j, np.nan_to_num(lo[:, 0]), np.nan_to_num(hi[:, 0]), 0.0, strict=True)
            worst.append(np.bincount(q).max())
        assert max(worst) <= 8


def test_gauss_product_integral_exact():
    b = time_test()
    p = b.pp(Index1D(3, 2))
    for extra in (0, 3):
        npts = None if extra == 0 else 6
        assert abs(gauss_product_integral(p, p, npts=npts) - norms(b, Index1D(3, 2))[0] ** 2) < 1e-14


def test_functional_eval_wrapper():
    b = periodic_time_trial()
    assert beval(b, Index1D(3, 1), 1.3) == pytest.approx(b.eval(Index1D(3, 1), 0.3), abs=1e-14)
