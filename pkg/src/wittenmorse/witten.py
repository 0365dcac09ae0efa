"""Witten-deformed complexes.

Two realizations of d_t = e^{-tf} d e^{tf}:

* on simplicial cochains, with f averaged over the vertices of each simplex;
* on a periodic cubical grid of the flat n-torus, where a p-form component
  dx^I sits at grid points shifted by h/2 along every axis in I. There the
  deformed Laplacian is available both by conjugation and through the
  potential form  Delta + t^2 |df|^2 + t A,  A = sum_ij f_ij [(a^i)*, a^j].

Entries of conjugated matrices are computed from exponent differences
t (f(source) - f(target)), never from e^{tf} itself, so large t cannot overflow.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp

from .errors import DegreeOutOfRange
from .morse import MorseFunctionSpec
from .simplicial import HodgeStarSet, SimplicialComplex
from .spectral import SparseSymOperator, laplacian_from_coboundaries


def _scale_entries(d: sp.spmatrix, src: np.ndarray, dst: np.ndarray, t: float) -> sp.csr_matrix:
    """Entrywise d[r, c] * exp(t (src[c] - dst[r]))."""
    coo = d.tocoo()
    vals = coo.data * np.exp(t * (src[coo.col] - dst[coo.row]))
    return sp.csr_matrix((vals, (coo.row, coo.col)), shape=d.shape)


# --- simplicial realization ------------------------------------------------

def simplex_values(complex_: SimplicialComplex, f_values) -> list[np.ndarray]:
    """Per-degree samples of f: vertex values averaged over each simplex."""
    if isinstance(f_values, (list, tuple)) and len(f_values) == complex_.top_dimension + 1 and all(
            np.ndim(v) == 1 for v in f_values):
        vals = [np.asarray(v, float) for v in f_values]
        if [len(v) for v in vals] != complex_.counts():
            raise ValueError("per-degree f samples do not match the complex")
    else:
        fv = np.asarray(f_values, float)
        if fv.shape != (complex_.count(0),):
            raise ValueError("f must be given at every vertex")
        vals = [fv[s].mean(axis=1) for s in complex_.simplices]
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise ValueError("f must be finite on every simplex")
    return vals


def deform_coboundary(complex_: SimplicialComplex, stars, f_values, t: float, p: int) -> sp.csr_matrix:
    """D_{p+1}(t)^{-1} d_p D_p(t) with D_p(t) = diag(e^{t f(sigma)})."""
    vals = simplex_values(complex_, f_values)
    d = complex_.coboundary(p)
    if t == 0:
        return d.astype(float).tocsr()
    return _scale_entries(d.astype(float), vals[p], vals[p + 1], t)


class DeformedComplex:
    """A simplicial complex with stars, a function f and a deformation parameter t."""

    def __init__(self, complex_: SimplicialComplex, stars: HodgeStarSet | None, f_values, t: float):
        if t < 0:
            raise ValueError("t must be >= 0")
        self.complex = complex_
        self.stars = stars if stars is not None else HodgeStarSet.combinatorial(complex_)
        self.stars.check(complex_)
        self.f = simplex_values(complex_, f_values)
        self.t = float(t)
        self._d = {}
        self._lap = {}

    @property
    def top_dimension(self) -> int:
        return self.complex.top_dimension

    def dims(self) -> list[int]:
        return self.complex.counts()

    def d_raw(self, p: int) -> sp.csr_matrix:
        self.complex._check_degree(p, 0, self.top_dimension - 1)
        d = self.complex.coboundary(p).astype(float)
        return d.tocsr() if self.t == 0 else _scale_entries(d, self.f[p], self.f[p + 1], self.t)

    def d(self, p: int) -> sp.csr_matrix:
        """d_t in the star-orthonormal basis (its transpose is d_t*)."""
        if p not in self._d:
            w = self.stars.weights
            self._d[p] = (sp.diags(np.sqrt(w[p + 1])) @ self.d_raw(p)
                          @ sp.diags(1 / np.sqrt(w[p]))).tocsr()
        return self._d[p]

    def codifferential(self, p: int) -> sp.csr_matrix:
        """Star-adjoint of d_t from p- to (p-1)-cochains, in the cochain basis."""
        w = self.stars.weights
        return (sp.diags(1 / w[p - 1]) @ self.d_raw(p - 1).T @ sp.diags(w[p])).tocsr()

    def laplacian(self, p: int) -> SparseSymOperator:
        self.complex._check_degree(p)
        if p not in self._lap:
            self._lap[p] = laplacian_from_coboundaries(
                self.d(p - 1) if p > 0 else None,
                self.d(p) if p < self.top_dimension else None, self.complex.count(p))
        return self._lap[p]


def witten_laplacian_dec(deformed: DeformedComplex, p: int) -> SparseSymOperator:
    return deformed.laplacian(p)


# --- fermionic operators on the exterior algebra ---------------------------

@lru_cache(maxsize=None)
def basis(n: int, p: int) -> tuple:
    """Increasing multi-indices of size p from {0..n-1}."""
    if not (0 <= p <= n):
        raise DegreeOutOfRange(f"degree {p} outside [0, {n}]")
    return tuple(combinations(range(n), p))


def _check_axis(n, i):
    if not (1 <= i <= n):
        raise DegreeOutOfRange(f"axis {i} outside [1, {n}]")


@lru_cache(maxsize=None)
def _wedge(n: int, p: int, i: int) -> np.ndarray:
    src, dst = basis(n, p), basis(n, p + 1)
    pos = {I: k for k, I in enumerate(dst)}
    m = np.zeros((len(dst), len(src)))
    for c, I in enumerate(src):
        if i in I:
            continue
        J = tuple(sorted(I + (i,)))
        m[pos[J], c] = (-1) ** sum(1 for k in I if k < i)
    m.setflags(write=False)
    return m


def wedge_matrix(n: int, p: int, i: int) -> np.ndarray:
    """(a^i)*: dx^i wedge, from degree p to p+1 (axis i is 1-based)."""
    _check_axis(n, i)
    basis(n, p)
    if p == n:
        return np.zeros((0, comb(n, p)))
    return _wedge(n, p, i - 1)


def interior_matrix(n: int, p: int, i: int) -> np.ndarray:
    """a^i: contraction with the i-th basis vector, degree p to p-1; adjoint of the wedge."""
    _check_axis(n, i)
    basis(n, p)
    if p == 0:
        return np.zeros((0, 1))
    return _wedge(n, p - 1, i - 1).T


class FermionMatrix:
    """[(a^i)*, a^j] on the degree-p basis of increasing multi-indices."""

    def __init__(self, n: int, p: int, i: int, j: int):
        _check_axis(n, i)
        _check_axis(n, j)
        self.n, self.p, self.i, self.j = n, p, i, j
        dim = comb(n, p)
        m = np.zeros((dim, dim))
        if p >= 1:
            m += wedge_matrix(n, p - 1, i) @ interior_matrix(n, p, j)
        if p < n:
            m -= interior_matrix(n, p + 1, j) @ wedge_matrix(n, p, i)
        m.setflags(write=False)
        self.matrix = m
        self.basis = basis(n, p)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"FermionMatrix(n={self.n}, p={self.p}, i={self.i}, j={self.j})"


def fermion_commutator_matrix(n: int, p: int, i: int, j: int) -> FermionMatrix:
    return FermionMatrix(n, p, i, j)


# --- periodic grid realization ---------------------------------------------

@lru_cache(maxsize=None)
def staggered_weights(order: int) -> tuple:
    """Weights c_m with f'(0) ~ sum_m c_m (f(m + 1/2) - f(-m - 1/2)) / h, unit spacing."""
    if order < 2 or order % 2:
        raise ValueError("difference order must be an even integer >= 2")
    M = order // 2
    s = np.arange(M) + 0.5
    A = np.array([2 * s ** k for k in range(1, 2 * M, 2)])
    rhs = np.zeros(M)
    rhs[0] = 1.0
    return tuple(np.linalg.solve(A, rhs))


def staggered_difference(N: int, h: float, order: int = 2) -> sp.csr_matrix:
    """Circulant map from node values to derivatives at the half-shifted nodes."""
    c = staggered_weights(order)
    if N < 2 * len(c):
        raise ValueError(f"N={N} too small for a difference of order {order}")
    rows, cols, vals = [], [], []
    i = np.arange(N)
    for m, cm in enumerate(c):
        rows += [i, i]
        cols += [(i + m + 1) % N, (i - m) % N]
        vals += [np.full(N, cm / h), np.full(N, -cm / h)]
    S = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    S.sum_duplicates()
    return S


@lru_cache(maxsize=None)
def staggered_interpolation_weights(order: int) -> tuple:
    """Weights w_m with f(0) ~ sum_m w_m (f(m + 1/2) + f(-m - 1/2)), unit spacing."""
    if order < 2 or order % 2:
        raise ValueError("interpolation order must be an even integer >= 2")
    M = order // 2
    s = np.arange(M) + 0.5
    A = np.array([2 * s ** k for k in range(0, 2 * M, 2)])
    rhs = np.zeros(M)
    rhs[0] = 1.0
    return tuple(np.linalg.solve(A, rhs))


def staggered_interpolation(N: int, order: int = 2) -> sp.csr_matrix:
    """Circulant map from node values to values at the half-shifted nodes.

    Its transpose maps back from half-shifted nodes to nodes.
    """
    w = staggered_interpolation_weights(order)
    rows, cols, vals = [], [], []
    i = np.arange(N)
    for m, wm in enumerate(w):
        rows += [i, i]
        cols += [(i + m + 1) % N, (i - m) % N]
        vals += [np.full(N, wm), np.full(N, wm)]
    R = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    R.sum_duplicates()
    return R


class TorusGrid:
    """Uniform periodic grid on [0, 2pi)^n with N points per axis.

    ``order`` is the even accuracy order of the staggered first difference.
    Order 2 gives the familiar 3-point Laplacian.
    """

    def __init__(self, n: int, N: int, order: int = 2):
        if n < 1:
            raise ValueError("grid dimension must be >= 1")
        self.n, self.N, self.order = int(n), int(N), int(order)
        self.h = 2 * np.pi / self.N
        S = staggered_difference(self.N, self.h, self.order)
        eye = sp.identity(self.N, format="csr")
        self._S = []
        for k in range(self.n):
            op = sp.csr_matrix(np.ones((1, 1)))
            for axis in range(self.n):
                op = sp.kron(op, S if axis == k else eye, format="csr")
            self._S.append(op)
        idx = np.indices((self.N,) * self.n).reshape(self.n, -1).T
        self.nodes = idx * self.h

    @property
    def points(self) -> int:
        return self.N ** self.n

    def components(self, p: int) -> tuple:
        return basis(self.n, p)

    def field_size(self, p: int) -> int:
        return comb(self.n, p) * self.points

    def locations(self, I) -> np.ndarray:
        shift = np.zeros(self.n)
        shift[list(I)] = self.h / 2
        return self.nodes + shift

    def d(self, p: int) -> sp.csr_matrix:
        """Undeformed exterior derivative on p-form fields."""
        src, dst = self.components(p), self.components(p + 1)
        pos = {I: k for k, I in enumerate(src)}
        blocks = [[None] * len(src) for _ in dst]
        for r, J in enumerate(dst):
            for slot, k in enumerate(J):
                I = J[:slot] + J[slot + 1:]
                blocks[r][pos[I]] = (-1) ** slot * self._S[k]
        return sp.bmat(blocks, format="csr")

    def transfer(self, I, J) -> sp.csr_matrix:
        """Interpolation from the locations of component J to those of component I."""
        R = staggered_interpolation(self.N, self.order)
        op = sp.csr_matrix(np.ones((1, 1)))
        for axis in range(self.n):
            a, b = axis in I, axis in J
            step = R if (a and not b) else R.T if (b and not a) else sp.identity(self.N)
            op = sp.kron(op, step, format="csr")
        return op

    def scalar_laplacian(self) -> sp.csr_matrix:
        return sum((S.T @ S for S in self._S), sp.csr_matrix((self.points, self.points))).tocsr()

    def sample(self, fn, p: int) -> np.ndarray:
        """fn evaluated at the staggered locations of every degree-p component, stacked."""
        return np.concatenate([np.array([fn(x) for x in self.locations(I)])
                               for I in self.components(p)])


def _periodic_chart(spec: MorseFunctionSpec, n: int):
    chart = spec.charts[0]
    if not chart.periodic or chart.dim != n:
        raise ValueError(f"{spec.name} is not a periodic function on the {n}-torus")
    return chart


class GridWittenComplex:
    """Deformed complex on a TorusGrid for a periodic Morse function (conjugation route)."""

    def __init__(self, grid: TorusGrid, spec: MorseFunctionSpec, t: float):
        self.grid, self.spec, self.t = grid, spec, float(t)
        self.chart = _periodic_chart(spec, grid.n)
        self._f = {}
        self._d = {}
        self._lap = {}

    @property
    def top_dimension(self) -> int:
        return self.grid.n

    def dims(self) -> list[int]:
        return [self.grid.field_size(p) for p in range(self.grid.n + 1)]

    def f_samples(self, p: int) -> np.ndarray:
        if p not in self._f:
            self._f[p] = self.grid.sample(self.chart.f, p)
        return self._f[p]

    def d(self, p: int) -> sp.csr_matrix:
        if not (0 <= p < self.grid.n):
            raise DegreeOutOfRange(f"degree {p} outside [0, {self.grid.n - 1}]")
        if p not in self._d:
            d = self.grid.d(p)
            self._d[p] = d if self.t == 0 else _scale_entries(
                d, self.f_samples(p), self.f_samples(p + 1), self.t)
        return self._d[p]

    def laplacian(self, p: int) -> SparseSymOperator:
        if not (0 <= p <= self.grid.n):
            raise DegreeOutOfRange(f"degree {p} outside [0, {self.grid.n}]")
        if p not in self._lap:
            self._lap[p] = laplacian_from_coboundaries(
                self.d(p - 1) if p > 0 else None,
                self.d(p) if p < self.grid.n else None, self.grid.field_size(p))
        return self._lap[p]


def _coupling(chart, xs, coeffs):
    hess = np.array([chart.hess(x) for x in xs])
    return sum(c * hess[:, i, j] for i, j, c in coeffs)


def grid_witten_laplacian(grid: TorusGrid, spec: MorseFunctionSpec, t: float, p: int) -> SparseSymOperator:
    """Delta + t^2 |df|^2 + t A on degree-p fields (potential route)."""
    n = grid.n
    if not (0 <= p <= n):
        raise DegreeOutOfRange(f"degree {p} outside [0, {n}]")
    chart = _periodic_chart(spec, n)
    comps = grid.components(p)
    P = grid.points
    L = grid.scalar_laplacian()
    fermions = {(i, j): FermionMatrix(n, p, i + 1, j + 1).matrix for i in range(n) for j in range(n)}
    blocks = [[None] * len(comps) for _ in comps]
    for a, I in enumerate(comps):
        for b, J in enumerate(comps):
            if a == b:
                xs = grid.locations(I)
                grads = np.array([chart.grad(x) for x in xs])
                hess = np.array([chart.hess(x) for x in xs])
                diag = t * t * np.einsum("ki,ki->k", grads, grads)
                diag += t * sum(hess[:, i, j] * fermions[i, j][a, a]
                                for i in range(n) for j in range(n))
                blocks[a][b] = L + sp.diags(diag)
            else:
                coeffs = [(i, j, fermions[i, j][a, b]) for i in range(n) for j in range(n)
                          if fermions[i, j][a, b] != 0]
                if not coeffs:
                    continue
                # the components live at different staggered points: move J's
                # field onto I's points, symmetrised so the blocks stay adjoint
                ca = _coupling(chart, grid.locations(I), coeffs)
                cb = _coupling(chart, grid.locations(J), coeffs)
                T = grid.transfer(I, J)
                blocks[a][b] = (0.5 * t) * (sp.diags(ca) @ T + T @ sp.diags(cb))
    mat = sp.bmat(blocks, format="csr")
    return SparseSymOperator.from_matrix(mat)
