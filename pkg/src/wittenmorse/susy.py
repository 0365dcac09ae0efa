"""Supersymmetric bookkeeping for a deformed complex.

Q_t = d_t + d_t* on the full exterior algebra, the grading P = (-1)^p,
pairing of nonzero eigenvalues between even and odd degrees, and the count
of low-lying eigenvalues that recovers the Morse numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import IdentityViolation, InsufficientSpectrum, LengthMismatch, NoGap
from .morse import check_strong
from .spectral import SpectrumRequest, dense_eigs, smallest_eigs

Q_TOLERANCE = 1e-10


@dataclass(frozen=True)
class Supercharge:
    Q: sp.csr_matrix
    P: sp.csr_matrix
    offsets: tuple
    deviation: float
    anticommutator: float


def supercharge(deformed, degrees=None, tol: float = Q_TOLERANCE) -> Supercharge:
    """Assemble Q_t in block form and check Q_t^2 = Delta_t degree by degree.

    ``deformed`` needs ``top_dimension``, ``dims()``, ``d(p)`` in an
    orthonormal basis and ``laplacian(p)``.
    """
    n = deformed.top_dimension
    degrees = list(range(n + 1)) if degrees is None else sorted(degrees)
    if degrees != list(range(n + 1)):
        raise ValueError("the supercharge needs every degree 0..n")
    dims = deformed.dims()
    offsets = np.concatenate([[0], np.cumsum(dims)])
    blocks = [[None] * (n + 1) for _ in range(n + 1)]
    for p in range(n):
        d = deformed.d(p)
        blocks[p + 1][p] = d
        blocks[p][p + 1] = d.T.tocsr()
    for p in range(n + 1):
        blocks[p][p] = sp.csr_matrix((dims[p], dims[p]))
    Q = sp.bmat(blocks, format="csr")
    P = sp.diags(np.concatenate([np.full(dims[p], (-1.0) ** p) for p in range(n + 1)])).tocsr()
    Q2 = (Q @ Q).tocsr()
    lap = sp.block_diag([deformed.laplacian(p).matrix for p in range(n + 1)], format="csr")
    scale = max(abs(lap).max(), 1e-300)
    deviation = abs(Q2 - lap).max() / scale
    anti = abs(Q @ P + P @ Q).max() / max(abs(Q).max(), 1e-300)
    if deviation > tol:
        raise IdentityViolation(f"Q_t^2 differs from Delta_t by {deviation:.2e} (relative)")
    if anti > tol:
        raise IdentityViolation(f"Q_t does not anticommute with the grading ({anti:.2e})")
    return Supercharge(Q, P, tuple(int(x) for x in offsets), float(deviation), float(anti))


@dataclass(frozen=True)
class GradedSpectrum:
    """Ascending low eigenvalues per degree, tagged with t (or a semiclassical parameter).

    ``complete[p]`` marks a degree whose whole spectrum is listed.
    """

    eigenvalues: tuple
    residuals: tuple = ()
    t: float = 0.0
    tol: float = 1e-9
    complete: tuple = ()

    def __post_init__(self):
        ev = tuple(np.asarray(e, float) for e in self.eigenvalues)
        for p, e in enumerate(ev):
            if np.any(np.diff(e) < 0):
                raise ValueError(f"degree {p} eigenvalues not ascending")
            if e.size and e[0] < -self.tol * max(1.0, float(np.abs(e).max())):
                raise ValueError(f"degree {p} has a negative eigenvalue {e[0]:.3e}")
        object.__setattr__(self, "eigenvalues", ev)
        flags = tuple(bool(c) for c in self.complete) or (False,) * len(ev)
        if len(flags) != len(ev):
            raise ValueError("complete needs one flag per degree")
        object.__setattr__(self, "complete", flags)

    @property
    def degrees(self) -> int:
        return len(self.eigenvalues)


@dataclass
class PairingReport:
    matched: list
    unmatched_even: list
    unmatched_odd: list
    window: float
    zero_threshold: float

    @property
    def passed(self) -> bool:
        return not self.unmatched_even and not self.unmatched_odd and bool(self.matched)


def pairing_check(spectra: GradedSpectrum, zero_threshold: float = 1e-8, match_tol: float = 1e-6,
                  max_pairs: int | None = None) -> PairingReport:
    """Match nonzero even-degree eigenvalues with odd-degree ones.

    Only values below the window (the smallest maximum over truncated degrees)
    can be compared, since a partner above a truncated list is invisible.
    Values within match_tol of the window edge are ignored for the same reason.
    """
    ev = spectra.eigenvalues
    if len(ev) < 2:
        raise InsufficientSpectrum("pairing needs at least one even and one odd degree")
    scale = max(float(max((e.max() for e in ev if e.size), default=0.0)), 1.0)
    thresh = zero_threshold * scale
    window = min((float(e.max()) if e.size else 0.0 for e, full in zip(ev, spectra.complete)
                  if not full), default=np.inf)
    even = np.sort(np.concatenate([e for p, e in enumerate(ev) if p % 2 == 0]))
    odd = np.sort(np.concatenate([e for p, e in enumerate(ev) if p % 2 == 1]))
    edge = window * (1 - 10 * match_tol)

    def keep(v):
        return v[(v > thresh) & (v < edge)]

    even, odd = keep(even), keep(odd)
    if even.size == 0 and odd.size == 0:
        raise InsufficientSpectrum("no nonzero eigenvalues inside the common window")
    matched, un_e = [], []
    used = np.zeros(odd.size, bool)
    for x in even:
        free = np.flatnonzero(~used)
        if free.size:
            k = free[np.argmin(np.abs(odd[free] - x))]
            if abs(odd[k] - x) <= match_tol * max(abs(x), abs(odd[k])):
                used[k] = True
                matched.append((float(x), float(odd[k])))
                continue
        un_e.append(float(x))
    un_o = [float(v) for v in odd[~used]]
    if max_pairs is not None:
        matched = matched[:max_pairs]
    return PairingReport(matched, un_e, un_o, window, thresh)


@dataclass
class LowLyingReport:
    kernel: tuple
    low_lying: tuple
    threshold: float
    gap_ratio: float
    t: float
    extra: dict = field(default_factory=dict)

    @property
    def morse_numbers(self) -> tuple:
        return tuple(k + l for k, l in zip(self.kernel, self.low_lying))

    @property
    def balanced(self) -> bool:
        ev = sum(l for p, l in enumerate(self.low_lying) if p % 2 == 0)
        od = sum(l for p, l in enumerate(self.low_lying) if p % 2 == 1)
        return ev == od


def _kernel_count(e, zero_floor):
    scale = max(float(e.max()) if e.size else 0.0, 1.0)
    clearly = np.flatnonzero(e > zero_floor * scale)
    return int(clearly[0]) if clearly.size else e.size


def low_lying(spectra: GradedSpectrum, t: float, kernel_counts=None, split: float = 1.0,
              min_gap_ratio: float = 10.0, zero_floor: float = 1e-9) -> LowLyingReport:
    """Split each degree's spectrum into kernel, o(t) cluster and Theta(t) rest.

    The split sits at ``split * t`` (half the first nonzero harmonic-model
    level 2t). ``kernel_counts`` may be supplied from an undeformed run: the
    kernel dimension does not depend on t, while at large t tunnelling pushes
    the o(t) values below any floating-point zero test.
    """
    if t <= 0:
        raise NoGap("low-lying counts need t > 0")
    cut = split * t
    kern, low = [], []
    below_max, above_min = 0.0, np.inf
    for p, e in enumerate(spectra.eigenvalues):
        n_below = int(np.sum(e < cut))
        if n_below == e.size:
            raise NoGap(f"degree {p}: all {e.size} computed eigenvalues lie below {cut:.3g}; "
                        "compute more eigenvalues")
        k = kernel_counts[p] if kernel_counts is not None else _kernel_count(e, zero_floor)
        if k > n_below:
            raise NoGap(f"degree {p}: kernel {k} exceeds the {n_below} values below the split")
        kern.append(int(k))
        low.append(n_below - int(k))
        if n_below:
            below_max = max(below_max, float(e[n_below - 1]))
        above_min = min(above_min, float(e[n_below]))
    ratio = above_min / below_max if below_max > 0 else np.inf
    if ratio < min_gap_ratio:
        raise NoGap(f"cluster ratio {ratio:.3g} < {min_gap_ratio}; increase t")
    return LowLyingReport(tuple(kern), tuple(low), cut, float(ratio), float(t))


@dataclass
class StrongFromCounts:
    M: tuple
    chains: tuple
    balance: bool
    strong_passed: bool

    @property
    def passed(self) -> bool:
        return self.balance and all(self.chains) and self.strong_passed


def strong_inequalities_from_counts(report: LowLyingReport | tuple, beta) -> StrongFromCounts:
    """Rebuild M_p = beta_p + l_p and check the chains implied by Q_t-injectivity.

    Q_t maps the low-lying degree-q space injectively into degree q+1 modulo
    the image from q-1, so l_q - l_{q-1} + ... >= 0 for every q < n, with
    equality at q = n from the even/odd balance.
    """
    ell = tuple(report.low_lying) if isinstance(report, LowLyingReport) else tuple(report)
    beta = tuple(int(b) for b in beta)
    if len(ell) != len(beta):
        raise LengthMismatch("low-lying counts and Betti numbers differ in length")
    M = tuple(b + l for b, l in zip(beta, ell))
    chains, acc = [], 0
    for q, l in enumerate(ell):
        acc = l - acc
        chains.append(acc >= 0 if q < len(ell) - 1 else acc == 0)
    even = sum(l for p, l in enumerate(ell) if p % 2 == 0)
    odd = sum(l for p, l in enumerate(ell) if p % 2 == 1)
    return StrongFromCounts(M, tuple(chains), even == odd, check_strong(M, beta).passed)


def graded_spectrum(deformed, k: int, request_kw=None) -> GradedSpectrum:
    """Smallest k eigenvalues in every degree of a deformed complex."""
    request_kw = dict(request_kw or {})
    evs, res, full = [], [], []
    for p in range(deformed.top_dimension + 1):
        op = deformed.laplacian(p)
        full.append(k >= op.dim)
        if k >= op.dim:
            vals, vecs = dense_eigs(op)
            r = np.linalg.norm(op.matrix @ vecs - vecs * vals, axis=0) / (op.norm or 1.0)
        else:
            out = smallest_eigs(op, SpectrumRequest(k, **request_kw))
            vals, r = out.eigenvalues, out.residuals
        evs.append(np.asarray(vals))
        res.append(np.asarray(r))
    return GradedSpectrum(tuple(evs), tuple(res), t=float(getattr(deformed, "t", 0.0)),
                          complete=tuple(full))
