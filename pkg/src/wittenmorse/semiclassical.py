"""Harmonic models at wells and critical points, and the operators they approximate.

Scalar case: H(lam) = -Laplacian + lam^2 h + lam g with h >= 0 vanishing at
finitely many nondegenerate wells. Near a well, H/lam looks like an oscillator
whose levels are sum_i w_i (2 n_i + 1) + g(x^a), with w_i^2 the eigenvalues of
half the Hessian of h.

Form case: the deformed Laplacian Delta_t / t near a critical point of f with
Hessian eigenvalues l_i. On dx^I the level is
sum_i |l_i| (1 + 2 n_i) + sum_i s_i |l_i|, where s_i = +1 for a stable
direction inside I or an unstable direction outside I, and -1 otherwise
(see ``gamma``).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NonDiagonalPartition, OverlappingSupports, WellTooCloseToBoundary
from .spectral import SparseSymOperator, SpectrumRequest, smallest_eigs


@dataclass(frozen=True)
class WellData:
    """One well of h, or one critical point of f.

    ``omegas`` are the oscillator frequencies: square roots of the eigenvalues
    of half Hess h for a well, absolute Hessian eigenvalues of f for a
    critical point (which also carries its Morse index).
    """

    location: tuple
    omegas: tuple
    offset: float = 0.0
    morse_index: int | None = None
    half_hessian: np.ndarray | None = None

    def __post_init__(self):
        w = tuple(float(x) for x in self.omegas)
        if not w or any(not (x > 0) or not math.isfinite(x) for x in w):
            raise ValueError("well frequencies must be finite and > 0")
        if not math.isfinite(self.offset):
            raise ValueError("well offset must be finite")
        if self.morse_index is not None and not (0 <= self.morse_index <= len(w)):
            raise ValueError("Morse index outside [0, n]")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "location", tuple(float(x) for x in np.atleast_1d(self.location)))

    @property
    def dim(self) -> int:
        return len(self.omegas)

    @classmethod
    def from_potential_hessian(cls, location, hess_h, offset: float = 0.0) -> "WellData":
        """Scalar well: A = Hess h / 2, omega_i = sqrt(eig A)."""
        A = 0.5 * np.atleast_2d(np.asarray(hess_h, float))
        eig = np.linalg.eigvalsh((A + A.T) / 2)
        if np.any(eig <= 0):
            raise ValueError("Hess h must be positive definite at a well")
        return cls(location, tuple(np.sqrt(eig)), offset, None, A)

    @classmethod
    def from_morse_hessian(cls, location, hess_f) -> "WellData":
        """Critical point of f: |eigenvalues| as frequencies, negatives counted as the index.

        Frequencies are ordered with the stable (positive-curvature)
        directions first, so the unstable ones form the last ``mu`` slots.
        """
        H = np.atleast_2d(np.asarray(hess_f, float))
        eig = np.linalg.eigvalsh((H + H.T) / 2)
        if np.any(eig == 0):
            raise ValueError("degenerate critical point")
        pos, neg = sorted(e for e in eig if e > 0), sorted((e for e in eig if e < 0), key=abs)
        return cls(location, tuple(abs(e) for e in pos + neg), 0.0, len(neg), None)


@dataclass(frozen=True)
class ModelSpectrum:
    """Sorted model eigenvalues with the (well, multi-index, quantum numbers) behind each."""

    values: np.ndarray
    provenance: tuple
    cutoff: float

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def kernel_dimension(self, tol: float = 1e-12) -> int:
        return int(np.sum(np.abs(self.values) <= tol))


def _best_first(bases, count):
    """Smallest ``count`` values of base_k + sum_i 2 w_i n_i over all k and n >= 0.

    ``bases`` is a list of (base, omegas, tag). Each quantum-number vector is
    generated exactly once: children only raise coordinates at or after the
    last raised one. Values never decrease along children, so the heap pops in
    sorted order and the output is a complete prefix.
    """
    heap = []
    for k, (base, om, _tag) in enumerate(bases):
        n0 = (0,) * len(om)
        heapq.heappush(heap, (base, k, n0, 0))
    out_v, out_p = [], []
    while heap and len(out_v) < count:
        val, k, nq, start = heapq.heappop(heap)
        base, om, tag = bases[k]
        out_v.append(val)
        out_p.append((tag, nq))
        for i in range(start, len(om)):
            child = nq[:i] + (nq[i] + 1,) + nq[i + 1:]
            heapq.heappush(heap, (val + 2 * om[i], k, child, i))
    values = np.array(out_v)
    return ModelSpectrum(values, tuple(out_p), float(values[-1]) if values.size else 0.0)


def scalar_model_spectrum(wells: Sequence[WellData], count: int) -> ModelSpectrum:
    """First ``count`` levels of the direct sum of the well oscillators."""
    if count < 1:
        raise ValueError("count must be >= 1")
    bases = [(sum(w.omegas) + w.offset, w.omegas, (a,)) for a, w in enumerate(wells)]
    return _best_first(bases, count)


def gamma(n: int, I, mu: int) -> int:
    """|I & K| - |J & K| - |I & L| + |J & L| with K = {1..n-mu}, L the rest, J = complement of I."""
    I = set(I)
    if not I <= set(range(1, n + 1)) or not (0 <= mu <= n):
        raise ValueError("need I within {1..n} and 0 <= mu <= n")
    K = set(range(1, n - mu + 1))
    L = set(range(n - mu + 1, n + 1))
    J = set(range(1, n + 1)) - I
    return len(I & K) - len(J & K) - len(I & L) + len(J & L)


def form_shift(omegas, I, mu) -> float:
    """sum_i s_i w_i, the weighted version of gamma (s_i as in gamma's four terms)."""
    n = len(omegas)
    K = range(1, n - mu + 1)
    out = 0.0
    for i in range(1, n + 1):
        inside = i in I
        s = (1 if inside else -1) if i in K else (-1 if inside else 1)
        out += s * omegas[i - 1]
    return out


def form_model_spectrum(n: int, wells: Sequence[WellData], p: int, count: int) -> ModelSpectrum:
    """First ``count`` model levels (in units of t) on degree-p forms."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 <= p <= n:
        raise ValueError("degree outside [0, n]")
    bases = []
    for a, w in enumerate(wells):
        if w.dim != n or w.morse_index is None:
            raise ValueError("form wells need dimension n and a Morse index")
        for I in combinations(range(1, n + 1), p):
            base = sum(w.omegas) + form_shift(w.omegas, I, w.morse_index)
            if abs(base) < 1e-12 * max(w.omegas):
                base = 0.0
            bases.append((base, w.omegas, (a, I)))
    return _best_first(bases, count)


def wells_from_critical_points(points) -> list[WellData]:
    """Form-case wells from morse.CriticalPoint objects."""
    out = []
    for c in points:
        ev = np.array(c.hessian_eigenvalues)
        out.append(WellData.from_morse_hessian(c.location, np.diag(ev)))
    return out


# --- scalar Schrodinger grids ----------------------------------------------

def central_second_difference_weights(order: int) -> np.ndarray:
    """Symmetric weights w_0..w_M with f'' ~ (w_0 f_0 + sum_m w_m (f_m + f_-m)) / h^2."""
    if order < 2 or order % 2:
        raise ValueError("order must be an even integer >= 2")
    M = order // 2
    # match x^{2k}/(2k)! moments: sum_m 2 w_m m^{2k} = 2 delta_{k1} for k = 1..M
    m = np.arange(1, M + 1, dtype=float)
    A = np.array([2 * m ** (2 * k) for k in range(1, M + 1)])
    rhs = np.zeros(M)
    rhs[0] = 2.0
    w = np.linalg.solve(A, rhs)
    return np.concatenate([[-2 * w.sum()], w])


def _second_difference(N: int, spacing: float, order: int, periodic: bool) -> sp.csr_matrix:
    w = central_second_difference_weights(order)
    M = len(w) - 1
    if N <= 2 * M:
        raise ValueError(f"N={N} too small for order {order}")
    diags = {0: np.full(N, w[0])}
    for k in range(1, M + 1):
        diags[k] = np.full(N - k, w[k])
        diags[-k] = np.full(N - k, w[k])
    D = sp.diags(list(diags.values()), list(diags.keys()), shape=(N, N), format="lil")
    if periodic:
        for k in range(1, M + 1):
            for i in range(k):
                D[i, N - k + i] = w[k]
                D[N - k + i, i] = w[k]
    return (D.tocsr() / spacing**2)


@dataclass(frozen=True)
class SchrodingerGrid:
    """Tensor grid on a box; Dirichlet uses N interior points per axis."""

    domain: tuple
    N: int
    boundary: str = "dirichlet"

    def __post_init__(self):
        dom = tuple((float(a), float(b)) for a, b in np.atleast_2d(np.asarray(self.domain, float)))
        if any(b <= a for a, b in dom):
            raise ValueError("domain intervals must have a < b")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError("boundary must be 'dirichlet' or 'periodic'")
        object.__setattr__(self, "domain", dom)

    @property
    def dim(self) -> int:
        return len(self.domain)

    def axis(self, k: int) -> np.ndarray:
        a, b = self.domain[k]
        if self.boundary == "dirichlet":
            return a + (b - a) * np.arange(1, self.N + 1) / (self.N + 1)
        return a + (b - a) * np.arange(self.N) / self.N

    def spacing(self, k: int) -> float:
        a, b = self.domain[k]
        return (b - a) / (self.N + 1 if self.boundary == "dirichlet" else self.N)

    def coordinates(self) -> list[np.ndarray]:
        """Flattened coordinate arrays, one per axis (C order)."""
        mesh = np.meshgrid(*[self.axis(k) for k in range(self.dim)], indexing="ij")
        return [m.ravel() for m in mesh]

    def points(self) -> np.ndarray:
        return np.column_stack(self.coordinates())

    def laplacian(self, order: int = 4) -> sp.csr_matrix:
        periodic = self.boundary == "periodic"
        eye = sp.identity(self.N, format="csr")
        out = None
        for k in range(self.dim):
            term = sp.csr_matrix(np.ones((1, 1)))
            for axis in range(self.dim):
                op = _second_difference(self.N, self.spacing(axis), order, periodic) if axis == k else eye
                term = sp.kron(term, op, format="csr")
            out = term if out is None else out + term
        return out


def check_wells(grid: SchrodingerGrid, wells, fraction: float = 0.25):
    """Each well must sit at least ``fraction`` of the box width from every wall."""
    if grid.boundary == "periodic":
        return
    for w in wells:
        x = np.atleast_1d(np.asarray(w, float))
        for k, (a, b) in enumerate(grid.domain):
            margin = fraction * (b - a)
            if x[k] - a < margin or b - x[k] < margin:
                raise WellTooCloseToBoundary(
                    f"well at {x.tolist()} is closer than {fraction:.0%} of the box to a wall on axis {k}")


def _grid_wells(grid, hv):
    """Grid points at the global minimum level of h (fallback when wells are not given)."""
    lo, hi = float(hv.min()), float(hv.max())
    idx = np.flatnonzero(hv <= lo + 1e-6 * max(hi - lo, 1e-300))
    return grid.points()[idx]


def scalar_schrodinger_grid(domain, h_spec: Callable, g_spec: Callable | float | None, lam: float,
                            N: int, boundary: str = "dirichlet", order: int = 4,
                            wells=None) -> SparseSymOperator:
    """-Laplacian + lam^2 h + lam g by finite differences.

    ``h_spec`` and ``g_spec`` take one coordinate array per axis.
    """
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    grid = domain if isinstance(domain, SchrodingerGrid) else SchrodingerGrid(domain, N, boundary)
    coords = grid.coordinates()
    hv = np.broadcast_to(np.asarray(h_spec(*coords), float), coords[0].shape)
    if hv.min() < -1e-12 * max(1.0, float(np.abs(hv).max())):
        raise ValueError("h must be nonnegative")
    check_wells(grid, _grid_wells(grid, hv) if wells is None else wells)
    if g_spec is None:
        gv = 0.0
    elif callable(g_spec):
        gv = np.broadcast_to(np.asarray(g_spec(*coords), float), coords[0].shape)
    else:
        gv = float(g_spec)
    potential = lam**2 * hv + lam * gv
    mat = -grid.laplacian(order) + sp.diags(np.broadcast_to(potential, coords[0].shape))
    return SparseSymOperator.from_matrix(mat)


@dataclass
class ConvergenceTable:
    rows: list
    monotone: dict
    final_deviation: dict

    def deviations(self, n: int) -> list[float]:
        return [r["deviation"] for r in self.rows if r["n"] == n]


def semiclassical_convergence(family: Callable, model: ModelSpectrum, schedule: Sequence[float],
                              n_eigs: int, request: dict | None = None) -> ConvergenceTable:
    """E_n(lam)/lam against the model levels e_n for each lam in an increasing schedule."""
    schedule = [float(x) for x in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be increasing")
    if len(model) < n_eigs:
        raise ValueError("model spectrum shorter than n_eigs")
    rows = []
    for lam in schedule:
        op = family(lam)
        res = smallest_eigs(op, SpectrumRequest(n_eigs, **(request or {})))
        for n in range(1, n_eigs + 1):
            ratio = float(res.eigenvalues[n - 1]) / lam
            e = float(model[n - 1])
            rows.append({"lambda": lam, "n": n, "E": float(res.eigenvalues[n - 1]),
                         "E_over_lambda": ratio, "model": e, "deviation": abs(ratio - e),
                         "residual": float(res.residuals[n - 1])})
    monotone, final = {}, {}
    for n in range(1, n_eigs + 1):
        dev = [r["deviation"] for r in rows if r["n"] == n]
        monotone[n] = all(b < a for a, b in zip(dev, dev[1:]))
        final[n] = dev[-1]
    return ConvergenceTable(rows, monotone, final)


def schrodinger_family(domain, h_spec, g_spec, N0: int, lam0: float, boundary="dirichlet",
                       order: int = 4, wells=None) -> Callable:
    """lam -> H(lam) with N growing like sqrt(lam) from N0 at lam0 (never below N0)."""

    def build(lam):
        N = max(N0, int(math.ceil(N0 * math.sqrt(lam / lam0))))
        return scalar_schrodinger_grid(domain, h_spec, g_spec, lam, N, boundary, order, wells)

    return build


def exterior_growth_check(domain, h_spec, g_spec, schedule, N: int, centers, radius: float,
                          order: int = 4) -> dict:
    """Ground energy of H(lam) on the grid with the wells cut out (Dirichlet).

    There -Laplacian >= 0, so the energy is at least lam^2 min h + lam min g
    over the remaining points: quadratic growth in lam, the finite-grid
    stand-in for a lower bound on the essential spectrum. The fitted log-log
    slope is reported alongside.
    """
    grid = SchrodingerGrid(domain, N, "dirichlet")
    pts = grid.points()
    coords = grid.coordinates()
    keep = np.ones(len(pts), bool)
    for c in centers:
        keep &= np.linalg.norm(pts - np.atleast_1d(c), axis=1) > radius
    idx = np.flatnonzero(keep)
    hv = np.broadcast_to(np.asarray(h_spec(*coords), float), coords[0].shape)[idx]
    if g_spec is None:
        gmin = 0.0
    elif callable(g_spec):
        gmin = float(np.min(np.broadcast_to(np.asarray(g_spec(*coords), float), coords[0].shape)[idx]))
    else:
        gmin = float(g_spec)
    hmin = float(hv.min())
    energies, bounds = [], []
    for lam in schedule:
        H = scalar_schrodinger_grid(grid, h_spec, g_spec, lam, N, order=order, wells=centers).matrix
        sub = SparseSymOperator.from_matrix(H[idx][:, idx])
        energies.append(float(smallest_eigs(sub, SpectrumRequest(1)).eigenvalues[0]))
        bounds.append(lam**2 * hmin + lam * gmin)
    logs = np.log(np.asarray(schedule, float))
    slope = float(np.polyfit(logs, np.log(energies), 1)[0]) if len(schedule) > 1 else float("nan")
    ok = hmin > 0 and all(e >= b * (1 - 1e-12) for e, b in zip(energies, bounds))
    return {"lambda": [float(x) for x in schedule], "energy": energies, "bound": bounds,
            "h_min": hmin, "slope": slope, "passed": bool(ok)}


# --- partitions of unity and the IMS identity ------------------------------

def _psi(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def bump_profile(r) -> np.ndarray:
    """1 on [0, 1], 0 beyond 2, smooth in between, with J(r)^2 + J(3 - r)^2 = 1 on [1, 2]."""
    r = np.asarray(r, float)
    a, b = _psi(2 - r), _psi(r - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mid = np.sqrt(a / (a + b))
    return np.where(r <= 1, 1.0, np.where(r >= 2, 0.0, mid))


@dataclass(frozen=True)
class PartitionOfUnity:
    """J_0 (complement) followed by one J_a per center, as grid diagonals."""

    J: tuple
    centers: tuple
    lam: float
    scale: float = field(default=0.0)

    def check(self, tol: float = 1e-12) -> float:
        total = sum(j**2 for j in self.J)
        err = float(np.abs(total - 1).max())
        if err > tol or any(np.any((j < 0) | (j > 1 + tol)) for j in self.J):
            raise ValueError(f"not a squared partition of unity (error {err:.2e})")
        return err


def build_partition(points, centers, lam: float, profile: Callable = bump_profile) -> PartitionOfUnity:
    """J_a(x) = J(lam^{2/5} |x - x^a|), J_0 = sqrt(1 - sum J_a^2)."""
    pts = np.asarray(points, float)
    if pts.ndim == 1:
        pts = pts[:, None]
    cs = [np.atleast_1d(np.asarray(c, float)) for c in centers]
    s = lam ** 0.4
    for i, j in combinations(range(len(cs)), 2):
        dist = float(np.linalg.norm(cs[i] - cs[j]))
        if dist <= 4 / s:
            raise OverlappingSupports(
                f"centers {i} and {j} are {dist:.3g} apart; supports of radius {2 / s:.3g} overlap")
    parts = [profile(s * np.linalg.norm(pts - c, axis=1)) for c in cs]
    j0 = np.sqrt(np.clip(1 - sum(p**2 for p in parts), 0.0, 1.0)) if parts else np.ones(len(pts))
    return PartitionOfUnity(tuple([j0] + parts), tuple(tuple(c) for c in cs), float(lam), s)


def _diagonal(J) -> np.ndarray:
    if isinstance(J, SparseSymOperator):
        J = J.matrix
    if sp.issparse(J):
        off = sp.csr_matrix(J) - sp.diags(J.diagonal())
        if off.count_nonzero() and abs(off).max() > 0:
            raise NonDiagonalPartition("partition functions must be diagonal in the grid basis")
        return np.asarray(J.diagonal(), float)
    J = np.asarray(J, float)
    if J.ndim == 2:
        if np.any(J - np.diag(np.diag(J))):
            raise NonDiagonalPartition("partition functions must be diagonal in the grid basis")
        return np.diag(J).copy()
    return J


@dataclass(frozen=True)
class IMSResult:
    deviation: float
    relative: float
    partition_error: float


def ims_identity_check(H, partition) -> IMSResult:
    """max |sum_a J_a H J_a + 1/2 sum_a [J_a, [J_a, H]] - H|.

    With diagonal J_a and sum J_a^2 = 1 the double commutators collect to
    exactly the localization error, so this vanishes up to rounding.
    """
    A = H.matrix if isinstance(H, SparseSymOperator) else sp.csr_matrix(H)
    Js = partition.J if isinstance(partition, PartitionOfUnity) else partition
    diags = [_diagonal(j) for j in Js]
    if any(d.shape != (A.shape[0],) for d in diags):
        raise ValueError("partition size does not match the operator")
    total = A * 0.0
    for d in diags:
        J = sp.diags(d)
        JH = J @ A
        HJ = A @ J
        comm = JH - HJ
        double = J @ comm - comm @ J
        total = total + J @ A @ J + 0.5 * double
    dev = float(abs(total - A).max()) if (total - A).nnz else 0.0
    scale = float(abs(A).sum(axis=1).max()) if A.nnz else 1.0
    perr = float(np.abs(sum(d**2 for d in diags) - 1).max())
    return IMSResult(dev, dev / scale if scale else dev, perr)
