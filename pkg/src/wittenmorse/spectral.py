"""Sparse symmetric operators and their low spectrum.

Every discretised operator in the package (Hodge and Witten Laplacians,
Schrodinger grids, model oscillators) ends up as a :class:`SparseSymOperator`.
The eigensolver only ever looks for the *smallest* eigenvalues: those are the
objects of study (kernels, low-lying clusters, semiclassical ground states).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    AmbiguousGap,
    AsymmetricInput,
    IndexOutOfRange,
    NegativeSpectrum,
    NoConvergence,
)

log = logging.getLogger(__name__)

DENSE_MAX_DIM = 1500
BANDED_MAX_BANDWIDTH = 64
SYMMETRY_RTOL = 1e-12


class SparseSymOperator:
    """Immutable real symmetric operator in CSR storage.

    An operator may remember a Gram factor C with A = C^T C. Its squared
    singular values are the eigenvalues of A, and near zero they are far more
    accurate than eigenvalues of A itself (error eps^2 ||A|| instead of eps ||A||).
    """

    def __init__(self, matrix: sp.spmatrix, factor=None):
        m = sp.csr_matrix(matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        m.data.setflags(write=False)
        self._m = m
        self._factor = None if factor is None else sp.csr_matrix(factor, dtype=float)

    @classmethod
    def from_gram(cls, factor) -> "SparseSymOperator":
        """A = C^T C, keeping C."""
        c = sp.csr_matrix(factor, dtype=float)
        if c.nnz and not np.all(np.isfinite(c.data)):
            raise ValueError("factor has non-finite entries")
        a = (c.T @ c).tocsr()
        return cls((a + a.T) * 0.5, factor=c)

    @property
    def factor(self):
        return self._factor

    @classmethod
    def from_matrix(cls, matrix, rtol: float = SYMMETRY_RTOL) -> "SparseSymOperator":
        """Check symmetry of an already-built matrix, then symmetrise it."""
        m = sp.csr_matrix(matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise AsymmetricInput(f"operator must be square, got shape {m.shape}")
        if m.nnz and not np.all(np.isfinite(m.data)):
            raise ValueError("operator has non-finite entries")
        scale = abs(m).max() if m.nnz else 0.0
        skew = abs(m - m.T).max() if m.nnz else 0.0
        if skew > rtol * scale:
            raise AsymmetricInput(
                f"max|A - A^T| = {skew:.3e} exceeds {rtol:g} * max|A| = {rtol * scale:.3e}"
            )
        return cls((m + m.T) * 0.5)

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._m

    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def shape(self):
        return self._m.shape

    @property
    def nnz(self) -> int:
        return self._m.nnz

    @cached_property
    def norm(self) -> float:
        """Infinity norm, an upper bound on the spectral radius."""
        if self._m.nnz == 0:
            return 0.0
        return float(abs(self._m).sum(axis=1).max())

    @cached_property
    def bandwidth(self) -> int:
        coo = self._m.tocoo()
        if coo.nnz == 0:
            return 0
        return int(np.abs(coo.row - coo.col).max())

    def toarray(self) -> np.ndarray:
        return self._m.toarray()

    def __matmul__(self, x):
        return self._m @ x

    def __add__(self, other):
        if isinstance(other, SparseSymOperator):
            other = other.matrix
        return SparseSymOperator.from_matrix(self._m + other)

    def __mul__(self, c: float):
        c = float(c)
        factor = self._factor * np.sqrt(c) if self._factor is not None and c >= 0 else None
        return SparseSymOperator(self._m * c, factor=factor)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SparseSymOperator(dim={self.dim}, nnz={self.nnz})"


def laplacian_from_coboundaries(lower, upper, dim: int) -> SparseSymOperator:
    """lower lower^T + upper^T upper, kept in Gram form.

    ``lower`` maps into the space (d_{p-1}), ``upper`` maps out of it (d_p);
    either may be None at the ends of a complex.
    """
    parts = []
    if lower is not None:
        parts.append(sp.csr_matrix(lower).T)
    if upper is not None:
        parts.append(sp.csr_matrix(upper))
    c = sp.vstack(parts, format="csr") if parts else sp.csr_matrix((0, dim))
    return SparseSymOperator.from_gram(c)


def assemble(entries, dim: int, rtol: float = SYMMETRY_RTOL) -> SparseSymOperator:
    """Build an operator from ``(row, col, value)`` triplets.

    Duplicate triplets are summed, the way finite-element style accumulation
    expects. Both halves of an off-diagonal pair must be supplied.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    entries = list(entries)
    if entries:
        rows, cols, vals = (np.asarray(a) for a in zip(*entries))
    else:
        rows = cols = np.zeros(0, dtype=int)
        vals = np.zeros(0)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    vals = vals.astype(float)
    bad = (rows < 0) | (rows >= dim) | (cols < 0) | (cols >= dim)
    if bad.any():
        i = int(np.argmax(bad))
        raise IndexOutOfRange(f"entry ({rows[i]}, {cols[i]}) outside a {dim}x{dim} operator")
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite value in entries")
    m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    return SparseSymOperator.from_matrix(m, rtol=rtol)


@dataclass(frozen=True)
class SpectrumRequest:
    k: int
    tol: float = 1e-9
    max_iterations: int = 200
    seed: int = 0
    method: str = "auto"
    return_vectors: bool = False
    target: str = "smallest-algebraic"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.target != "smallest-algebraic":
            raise ValueError("only the smallest-algebraic target is supported")
        if self.method not in ("auto", "dense", "banded", "lanczos"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    eigenvectors: np.ndarray | None = None
    method: str = ""
    iterations: int = 0
    info: dict = field(default_factory=dict)


def _residuals(op: SparseSymOperator, vals, vecs) -> np.ndarray:
    scale = op.norm or 1.0
    r = op.matrix @ vecs - vecs * vals
    return np.linalg.norm(r, axis=0) / scale


def dense_eigs(op: SparseSymOperator, k: int | None = None):
    """Dense LAPACK diagonalisation; the reference every other path is checked against."""
    a = op.toarray()
    if k is None or k >= op.dim:
        return sla.eigh(a)
    return sla.eigh(a, subset_by_index=[0, k - 1])


def _banded_eigs(op: SparseSymOperator, k: int, seed: int = 0):
    """Banded LAPACK eigenvalues, eigenvectors by block inverse iteration.

    Asking LAPACK for the vectors accumulates an n x n orthogonal factor, which
    costs O(n^2) memory and time. Instead each cluster of (near) equal
    eigenvalues gets a random block that is pushed through a few shifted banded
    solves and finished with Rayleigh-Ritz inside the block.
    """
    bw = op.bandwidth
    n = op.dim
    coo = op.matrix.tocoo()
    lower = coo.row >= coo.col
    ab = np.zeros((bw + 1, n))
    ab[coo.row[lower] - coo.col[lower], coo.col[lower]] = coo.data[lower]
    top = min(n - 1, k)
    vals = sla.eig_banded(ab, lower=True, eigvals_only=True, select="i", select_range=(0, top))
    scale = op.norm or 1.0
    full = np.zeros((2 * bw + 1, n))
    for d in range(bw + 1):
        full[bw + d, : n - d] = ab[d, : n - d]
        full[bw - d, d:] = ab[d, : n - d]
    rng = np.random.default_rng(seed)
    clusters, start = [], 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or vals[i] - vals[i - 1] > 1e-8 * scale:
            clusters.append((start, i))
            start = i
    vecs = np.zeros((n, 0))
    for a, b in clusters:
        if a >= k:
            break
        sigma = vals[a] - 1e-10 * scale
        shifted = full.copy()
        shifted[bw] -= sigma
        x = rng.standard_normal((n, b - a))
        for _ in range(4):
            x = sla.solve_banded((bw, bw), shifted, x)
            x -= vecs @ (vecs.T @ x)
            x, _ = np.linalg.qr(x)
        h = x.T @ (op.matrix @ x)
        _, s = np.linalg.eigh(0.5 * (h + h.T))
        vecs = np.hstack([vecs, x @ s])
    return vals[:k], vecs[:, :k]


def _orthonormalize_against(w, basis, rng):
    """Orthonormalise the columns of ``w`` against ``basis`` and each other (CGS2).

    Columns that collapse numerically are replaced by fresh random directions
    so the Krylov block keeps its width.
    """
    n, b = w.shape
    ref = np.linalg.norm(w, axis=0).max() or 1.0
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            w -= basis @ (basis.T @ w)
    q, r = np.linalg.qr(w)
    weak = np.abs(np.diag(r)) < 1e-8 * ref
    if basis is not None and basis.shape[1]:
        # one more pass: columns that shrank a lot in projection lose orthogonality
        q -= basis @ (basis.T @ q)
        q, _ = np.linalg.qr(q)
    if weak.any():
        # replacements are orthogonalised only against accepted columns
        cols = [q[:, ~weak]]
        for _ in range(int(weak.sum())):
            v = rng.standard_normal(n)
            acc = np.hstack(cols)
            for _ in range(2):
                if basis is not None and basis.shape[1]:
                    v -= basis @ (basis.T @ v)
                v -= acc @ (acc.T @ v)
            cols.append((v / np.linalg.norm(v))[:, None])
        q = np.hstack(cols)
    return q


def _block_lanczos(op: SparseSymOperator, req: SpectrumRequest):
    """Restarted block Lanczos, full reorthogonalisation, no spectral shift.

    Each cycle grows a block Krylov basis from the current Ritz vectors plus
    their residual block, does Rayleigh-Ritz on the whole basis and keeps the
    best Ritz vectors for the next cycle (thick restart).
    """
    a = op.matrix
    n = op.dim
    k = req.k
    scale = op.norm or 1.0
    rng = np.random.default_rng(req.seed)
    b = min(n, max(k + 4, 8))
    m = min(n, max(12 * b, 240))
    keep = max(k, min(m - b, max(2 * b, k + b)) if m > b else b)

    x = _orthonormalize_against(rng.standard_normal((n, b)), None, rng)
    v = x
    av = a @ x
    best = np.inf
    theta = y = res = None
    for cycle in range(1, req.max_iterations + 1):
        # expand
        blocks_v = [v]
        blocks_av = [av]
        j = v.shape[1]
        if cycle == 1:
            last = av[:, -b:]
        else:
            last = av[:, :b] - v[:, :b] * theta[:b]
        while j < m:
            basis = np.hstack(blocks_v) if len(blocks_v) > 1 else blocks_v[0]
            take = min(b, m - j)
            q = _orthonormalize_against(last.copy()[:, :take], basis, rng)
            aq = a @ q
            blocks_v.append(q)
            blocks_av.append(aq)
            last = aq
            j += take
        vv = np.hstack(blocks_v)
        avv = np.hstack(blocks_av)
        h = vv.T @ avv
        h = 0.5 * (h + h.T)
        theta, s = sla.eigh(h)
        nk = min(keep, s.shape[1])
        y = vv @ s[:, :nk]
        ay = avv @ s[:, :nk]
        res = np.linalg.norm(ay[:, :k] - y[:, :k] * theta[:k], axis=0) / scale
        worst = float(res.max())
        best = min(best, worst)
        if worst <= req.tol or vv.shape[1] >= n:
            return theta[:k], y[:, :k], res, cycle
        v, av = y, ay
    raise NoConvergence(req.max_iterations, best)


def smallest_eigs(op: SparseSymOperator, req: SpectrumRequest) -> SpectrumResult:
    """The ``req.k`` smallest eigenpairs of ``op``, with residual contract."""
    n = op.dim
    if req.k >= n:
        raise ValueError(f"k={req.k} must be smaller than dim={n}")
    method = req.method
    if method == "auto":
        if n <= DENSE_MAX_DIM:
            method = "dense"
        elif op.bandwidth <= BANDED_MAX_BANDWIDTH:
            method = "banded"
        else:
            method = "lanczos"
    iterations = 0
    if method == "dense":
        vals, vecs = dense_eigs(op, req.k)
    elif method == "banded":
        vals, vecs = _banded_eigs(op, req.k, req.seed)
    else:
        vals, vecs, _, iterations = _block_lanczos(op, req)
    order = np.argsort(vals, kind="stable")
    vals = np.asarray(vals)[order]
    vecs = np.asarray(vecs)[:, order]
    res = _residuals(op, vals, vecs)
    if method != "lanczos" and res.max() > req.tol:
        log.warning("%s solve residual %.2e above tolerance %.2e", method, res.max(), req.tol)
    return SpectrumResult(
        eigenvalues=vals,
        residuals=res,
        eigenvectors=vecs if req.return_vectors else None,
        method=method,
        iterations=iterations,
    )


def kernel_dimension(
    op: SparseSymOperator,
    gap_factor: float = 1e-6,
    zero_floor: float = 1e-12,
    psd_tol: float = 1e-9,
    seed: int = 0,
    method: str = "auto",
) -> int:
    """Dimension of the numerical kernel of a positive semidefinite operator.

    An eigenvalue is *clearly nonzero* above ``zero_floor * ||A||``, a level a
    few hundred times the round-off of a dense solve. The kernel
    is everything below the first clearly-nonzero eigenvalue, provided all of
    it sits at most ``gap_factor`` times that eigenvalue. Otherwise the split
    is ambiguous and the caller has to refine (bigger grid, other t, ...).
    Only ratios and ``||A||`` enter, so the count is invariant under positive
    rescaling of the operator. A Gram factor, when present, is used for the
    dense path.
    """
    n = op.dim
    scale = op.norm
    if scale == 0.0:
        return n
    window = n if n <= DENSE_MAX_DIM else min(n - 1, 16)
    while True:
        if window >= n and op.factor is not None:
            sv = sla.svdvals(op.factor.toarray()) if op.factor.shape[0] else np.zeros(0)
            vals = np.sort(np.concatenate([sv**2, np.zeros(max(0, n - sv.size))]))[:n]
        elif window >= n:
            vals = sla.eigvalsh(op.toarray())
        else:
            # tight residuals: Ritz values near zero carry error ~ residual^2 / gap
            req = SpectrumRequest(k=window, tol=1e-12, max_iterations=400, seed=seed, method=method)
            vals = smallest_eigs(op, req).eigenvalues
        if vals[0] < -psd_tol * scale:
            raise NegativeSpectrum(
                f"smallest eigenvalue {vals[0]:.3e} below -{psd_tol:g} * ||A|| = {-psd_tol * scale:.3e}"
            )
        mu = np.clip(vals, 0.0, None)
        above = np.flatnonzero(mu > zero_floor * scale)
        if above.size == 0:
            if window >= n:
                return n
            window = min(n - 1, 2 * window) if 2 * window < n else n
            continue
        idx = int(above[0])
        if idx == 0:
            return 0
        if mu[idx - 1] <= gap_factor * mu[idx]:
            return idx
        raise AmbiguousGap(
            f"no clean gap: eigenvalue {mu[idx - 1]:.3e} below {mu[idx]:.3e} "
            f"(ratio {mu[idx] / max(mu[idx - 1], 1e-300):.3g}, need {1 / gap_factor:.3g})"
        )
