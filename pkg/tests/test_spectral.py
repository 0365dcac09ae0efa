import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from wittenmorse.errors import (AmbiguousGap, AsymmetricInput, IndexOutOfRange, NegativeSpectrum,
                                NoConvergence)
from wittenmorse.simplicial import cycle, hodge_laplacian, octahedron, torus_grid
from wittenmorse.spectral import (SparseSymOperator, SpectrumRequest, assemble, dense_eigs,
                                  kernel_dimension, laplacian_from_coboundaries, smallest_eigs)


def periodic_laplacian(N, h=1.0):
    main = np.full(N, 2.0)
    A = sp.diags([main, -np.ones(N - 1), -np.ones(N - 1)], [0, 1, -1]).tolil()
    A[0, N - 1] = A[N - 1, 0] = -1.0
    return SparseSymOperator.from_matrix(A.tocsr() / h**2)


def random_sparse_psd(n, rng, density=0.1):
    B = sp.random(n, n, density=density, random_state=rng, format="csr")
    return SparseSymOperator.from_matrix((B.T @ B + 0.1 * sp.identity(n)).tocsr())


# --- assemble --------------------------------------------------------------

def test_assemble_scalar():
    op = assemble([(0, 0, 2.0)], 1)
    assert op.dim == 1
    assert dense_eigs(op)[0].tolist() == [2.0]


def test_assemble_two_by_two():
    vals, _ = dense_eigs(assemble([(0, 1, 1.0), (1, 0, 1.0)], 2))
    assert np.allclose(vals, [-1, 1])


def test_assemble_periodic_graph_laplacian():
    entries = [(i, i, 2.0) for i in range(4)]
    entries += [(i, (i + 1) % 4, -1.0) for i in range(4)] + [((i + 1) % 4, i, -1.0) for i in range(4)]
    vals, _ = dense_eigs(assemble(entries, 4))
    assert np.allclose(vals, [0, 2, 2, 4])


def test_assemble_sums_duplicates():
    op = assemble([(0, 0, 1.0), (0, 0, 1.5)], 1)
    assert op.toarray()[0, 0] == 2.5


def test_assemble_rejects_asymmetric():
    with pytest.raises(AsymmetricInput):
        assemble([(0, 1, 1.0)], 2)


@pytest.mark.parametrize("entry", [(2, 0, 1.0), (0, -1, 1.0)])
def test_assemble_index_out_of_range(entry):
    with pytest.raises(IndexOutOfRange):
        assemble([entry], 2)


def test_assemble_rejects_nonfinite():
    with pytest.raises(ValueError):
        assemble([(0, 0, np.nan)], 1)


def test_gram_form_matches_product():
    rng = np.random.default_rng(0)
    C = sp.random(30, 20, density=0.2, random_state=rng, format="csr")
    op = SparseSymOperator.from_gram(C)
    assert np.allclose(op.toarray(), (C.T @ C).toarray())
    assert np.allclose((op * 4.0).toarray(), 4 * op.toarray())


def test_laplacian_from_coboundaries_is_sum_of_parts():
    cx = octahedron()
    d0, d1 = cx.coboundary(0).astype(float), cx.coboundary(1).astype(float)
    op = laplacian_from_coboundaries(d0, d1, cx.count(1))
    assert np.allclose(op.toarray(), (d0 @ d0.T + d1.T @ d1).toarray())


# --- smallest_eigs ---------------------------------------------------------

def test_diagonal_two_smallest():
    res = smallest_eigs(SparseSymOperator.from_matrix(sp.diags([3.0, 1.0, 2.0])), SpectrumRequest(2))
    assert np.allclose(res.eigenvalues, [1, 2])


def test_periodic_laplacian_closed_form():
    N, h = 64, 2 * np.pi / 64
    op = periodic_laplacian(N, h)
    res = smallest_eigs(op, SpectrumRequest(3, method="lanczos"))
    lam1 = (2 / h**2) * (1 - np.cos(2 * np.pi / N))
    assert np.allclose(res.eigenvalues, [0, lam1, lam1], atol=1e-8)


def test_octahedron_ground_state_is_zero():
    op = hodge_laplacian(octahedron(), None, 0)
    res = smallest_eigs(op, SpectrumRequest(1, method="lanczos"))
    assert abs(res.eigenvalues[0]) < 1e-10


@pytest.mark.parametrize("method", ["dense", "banded", "lanczos"])
def test_methods_agree_on_path_graph(method):
    N = 300
    A = sp.diags([np.linspace(2, 3, N), -np.ones(N - 1), -np.ones(N - 1)], [0, 1, -1]).tocsr()
    op = SparseSymOperator.from_matrix(A)
    ref = dense_eigs(op)[0][:5]
    res = smallest_eigs(op, SpectrumRequest(5, method=method, return_vectors=True))
    assert np.allclose(res.eigenvalues, ref, atol=1e-8)
    assert res.eigenvectors.shape == (N, 5)
    assert np.all(res.residuals < 1e-6)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(20, 200), k=st.integers(1, 8), seed=st.integers(0, 2**31 - 1))
def test_lanczos_matches_dense_oracle(n, k, seed):
    op = random_sparse_psd(n, np.random.default_rng(seed))
    ref = dense_eigs(op)[0][:k]
    res = smallest_eigs(op, SpectrumRequest(k, method="lanczos", seed=seed % 1000))
    assert np.allclose(res.eigenvalues, ref, atol=1e-8)


def test_lanczos_matches_dense_on_dec_operators():
    for cx in (octahedron(), cycle(40), torus_grid(8)):
        for p in range(cx.top_dimension + 1):
            op = hodge_laplacian(cx, None, p)
            k = min(6, op.dim - 1)
            res = smallest_eigs(op, SpectrumRequest(k, method="lanczos"))
            assert np.allclose(res.eigenvalues, dense_eigs(op)[0][:k], atol=1e-8)


def test_results_are_bit_stable():
    op = random_sparse_psd(150, np.random.default_rng(3))
    a = smallest_eigs(op, SpectrumRequest(4, method="lanczos", seed=7))
    b = smallest_eigs(op, SpectrumRequest(4, method="lanczos", seed=7))
    assert a.eigenvalues.tobytes() == b.eigenvalues.tobytes()


def test_no_convergence_reports_progress():
    op = random_sparse_psd(800, np.random.default_rng(1), density=0.05)
    with pytest.raises(NoConvergence) as info:
        smallest_eigs(op, SpectrumRequest(6, method="lanczos", max_iterations=1, tol=1e-14))
    assert info.value.iterations >= 1
    assert info.value.best_residual > 0


def test_request_validation():
    with pytest.raises(ValueError):
        SpectrumRequest(0)
    with pytest.raises(ValueError):
        smallest_eigs(SparseSymOperator.from_matrix(sp.identity(3)), SpectrumRequest(3))


# --- kernel_dimension ------------------------------------------------------

def test_kernel_of_diagonal():
    assert kernel_dimension(SparseSymOperator.from_matrix(sp.diags([0.0, 0.0, 5.0]))) == 2


def test_kernel_octahedron_one_forms():
    assert kernel_dimension(hodge_laplacian(octahedron(), None, 1)) == 0


def test_kernel_torus_one_forms():
    assert kernel_dimension(hodge_laplacian(torus_grid(16), None, 1)) == 2


def test_kernel_rejects_negative_spectrum():
    with pytest.raises(NegativeSpectrum):
        kernel_dimension(SparseSymOperator.from_matrix(sp.diags([-1.0, 1.0])))


def test_kernel_ambiguous_gap():
    with pytest.raises(AmbiguousGap):
        kernel_dimension(SparseSymOperator.from_matrix(sp.diags([5e-13, 1e-7, 1.0])))


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(1e-6, 1e6), zeros=st.integers(0, 4), seed=st.integers(0, 1000))
def test_kernel_scale_invariant(scale, zeros, seed):
    rng = np.random.default_rng(seed)
    vals = np.concatenate([np.zeros(zeros), rng.uniform(0.5, 3.0, 12)])
    Q, _ = np.linalg.qr(rng.standard_normal((vals.size, vals.size)))
    A = (Q * vals) @ Q.T
    op = SparseSymOperator.from_matrix(sp.csr_matrix((A + A.T) / 2))
    assert kernel_dimension(op) == zeros
    assert kernel_dimension(op * scale) == zeros


def test_kernel_on_lanczos_path():
    op = hodge_laplacian(torus_grid(32), None, 1)
    assert op.dim > 1500
    assert kernel_dimension(op) == 2
