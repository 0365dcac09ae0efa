"""Morse functions, critical points and the Morse inequalities."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateCritical, LengthMismatch, NonzeroRemainder, UnknownCatalogEntry

log = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
HESSIAN_FLOOR = 1e-8
GRAD_TOL = 1e-10


@dataclass(frozen=True)
class Chart:
    """A coordinate patch carrying f and its first two derivatives.

    Periodic charts are boxes [0, 2pi)^n with coordinates taken mod 2pi.
    ``valid`` restricts non-periodic patches (points outside are discarded).
    """

    name: str
    f: Callable
    grad: Callable
    hess: Callable
    lower: tuple
    upper: tuple
    periodic: bool = False
    to_ambient: Callable | None = None
    valid: Callable | None = None

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x) -> bool:
        if self.periodic:
            return True
        if self.valid is not None:
            return bool(self.valid(x))
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def ambient(self, x) -> np.ndarray:
        if self.to_ambient is None:
            return np.mod(x, TWO_PI) if self.periodic else np.asarray(x, float)
        return np.asarray(self.to_ambient(x), float)


@dataclass(frozen=True)
class MorseFunctionSpec:
    """A named Morse function on a closed manifold, given on one or more charts."""

    name: str
    manifold: str
    charts: tuple
    betti: tuple
    closed_form: tuple = ()
    vertex_function: Callable | None = None
    domain: str = ""

    @property
    def dim(self) -> int:
        return self.charts[0].dim

    @property
    def f(self):
        return self.charts[0].f

    @property
    def grad(self):
        return self.charts[0].grad

    @property
    def hess(self):
        return self.charts[0].hess

    @property
    def euler_characteristic(self) -> int:
        return int(sum((-1) ** p * b for p, b in enumerate(self.betti)))


@dataclass(frozen=True)
class CriticalPoint:
    location: tuple
    value: float
    hessian_eigenvalues: tuple
    index: int
    chart: str = ""
    ambient: tuple = ()


@dataclass(frozen=True)
class MorseCounts:
    M: tuple

    def __post_init__(self):
        m = tuple(int(x) for x in self.M)
        if any(x < 0 for x in m):
            raise ValueError("Morse counts are nonnegative")
        object.__setattr__(self, "M", m)

    def __iter__(self):
        return iter(self.M)

    def __len__(self):
        return len(self.M)

    def __getitem__(self, i):
        return self.M[i]

    @property
    def alternating_sum(self) -> int:
        return int(sum((-1) ** p * m for p, m in enumerate(self.M)))


def check_derivatives(chart: Chart, n_points: int = 100, rng=0, rtol: float = 1e-5) -> float:
    """Largest relative mismatch between callbacks and central differences."""
    rng = np.random.default_rng(rng)
    lo, hi = np.asarray(chart.lower, float), np.asarray(chart.upper, float)
    worst, done = 0.0, 0
    while done < n_points:
        x = rng.uniform(lo, hi)
        if not chart.contains(x):
            continue
        done += 1
        n = len(x)
        h = 1e-5 * max(1.0, float(np.abs(x).max()))
        eye = np.eye(n) * h
        g = np.asarray(chart.grad(x), float)
        H = np.asarray(chart.hess(x), float)
        g_fd = np.array([(chart.f(x + e) - chart.f(x - e)) / (2 * h) for e in eye])
        H_fd = np.array([(np.asarray(chart.grad(x + e)) - np.asarray(chart.grad(x - e))) / (2 * h)
                         for e in eye])
        worst = max(worst,
                    np.linalg.norm(g - g_fd) / max(np.linalg.norm(g), 1.0),
                    np.linalg.norm(H - H_fd) / max(np.linalg.norm(H), 1.0))
    if worst > rtol:
        raise ValueError(f"chart {chart.name}: derivative mismatch {worst:.2e} > {rtol:.0e}")
    return worst


def _newton(chart: Chart, x0, max_iter=100, max_step=0.5):
    x = np.array(x0, float)
    for _ in range(max_iter):
        g = np.asarray(chart.grad(x), float)
        if not np.all(np.isfinite(g)):
            return None
        if np.linalg.norm(g) <= 1e-13:
            break
        H = np.asarray(chart.hess(x), float)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        if not np.all(np.isfinite(step)):
            step = g
        s = np.linalg.norm(step)
        if s > max_step:
            step *= max_step / s
        x = x - step
        if not chart.contains(x):
            return None
        if s < 1e-15:
            break
    if chart.periodic:
        x = np.mod(x, TWO_PI)
    g = np.asarray(chart.grad(x), float)
    if not (np.all(np.isfinite(g)) and np.linalg.norm(g) <= GRAD_TOL):
        return None
    return x


def _polish(chart: Chart, x, max_iter=200):
    """Extra Newton steps while the Hessian looks nearly singular.

    Near a degenerate critical point Newton only converges linearly, so the
    gradient test stops while the Hessian is still above the floor. At a
    genuine Morse point these steps do not move x.
    """
    for _ in range(max_iter):
        H = np.asarray(chart.hess(x), float)
        if np.min(np.abs(np.linalg.eigvalsh((H + H.T) / 2))) >= 1e-4 or np.linalg.norm(chart.grad(x)) == 0:
            break
        try:
            step = np.linalg.solve(H, np.asarray(chart.grad(x), float))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) == 0:
            break
        x = x - step
    return np.mod(x, TWO_PI) if chart.periodic else x


def _seeds(chart: Chart, resolution: int):
    # shifted off the lattice so seeds avoid symmetric degenerate spots
    axes = [lo + (np.arange(resolution) + 0.3819660112501051) * (hi - lo) / resolution
            for lo, hi in zip(chart.lower, chart.upper)]
    for pt in itertools.product(*axes):
        x = np.array(pt)
        if chart.contains(x):
            yield x


def _periodic_distance(a, b):
    d = np.abs(np.mod(a - b + np.pi, TWO_PI) - np.pi)
    return float(np.linalg.norm(d))


def classify(chart: Chart, x, floor: float = HESSIAN_FLOOR) -> CriticalPoint:
    H = np.asarray(chart.hess(x), float)
    eig = np.linalg.eigvalsh((H + H.T) / 2)
    if np.min(np.abs(eig)) < floor:
        raise DegenerateCritical(
            f"critical point {np.round(x, 12).tolist()} has Hessian eigenvalue "
            f"{eig[np.argmin(np.abs(eig))]:.3e}, below the Morse floor {floor:.0e}")
    return CriticalPoint(location=tuple(float(v) for v in x), value=float(chart.f(x)),
                         hessian_eigenvalues=tuple(float(v) for v in eig),
                         index=int(np.sum(eig < 0)), chart=chart.name,
                         ambient=tuple(float(v) for v in chart.ambient(x)))


def find_critical_points(spec: MorseFunctionSpec, seed_grid_resolution: int = 16,
                         charts: Sequence[Chart] | None = None) -> list[CriticalPoint]:
    """Newton on the gradient from a grid of seeds in every chart, deduplicated."""
    found: list[CriticalPoint] = []
    dropped = 0
    for chart in (charts or spec.charts):
        for seed in _seeds(chart, seed_grid_resolution):
            x = _newton(chart, seed)
            if x is None:
                dropped += 1
                continue
            amb = chart.ambient(x)
            dist = _periodic_distance if chart.periodic and chart.to_ambient is None else (
                lambda a, b: float(np.linalg.norm(a - b)))
            if any(dist(amb, np.asarray(c.ambient)) < 1e-6 for c in found):
                continue
            found.append(classify(chart, _polish(chart, x)))
    if dropped:
        log.debug("%s: %d seeds did not converge and were dropped", spec.name, dropped)
    found.sort(key=lambda c: (c.index, c.value, c.ambient))
    return found


def morse_counts(points: Sequence[CriticalPoint], n: int) -> MorseCounts:
    m = [0] * (n + 1)
    for c in points:
        m[c.index] += 1
    return MorseCounts(tuple(m))


@dataclass(frozen=True)
class InequalityVerdict:
    kind: str
    per_degree: tuple
    lhs: tuple
    rhs: tuple
    top_equality: bool | None = None

    @property
    def passed(self) -> bool:
        return all(self.per_degree) and self.top_equality is not False

    def failures(self) -> list[int]:
        return [p for p, ok in enumerate(self.per_degree) if not ok]


def _pair(M, beta):
    m = tuple(int(x) for x in M)
    b = tuple(int(x) for x in beta)
    if len(m) != len(b):
        raise LengthMismatch(f"Morse counts have {len(m)} entries, Betti numbers {len(b)}")
    return m, b


def check_weak(M, beta) -> InequalityVerdict:
    m, b = _pair(M, beta)
    return InequalityVerdict("weak", tuple(x >= y for x, y in zip(m, b)), m, b)


def alternating_partial_sums(v) -> tuple:
    out, acc = [], 0
    for x in v:
        acc = x - acc
        out.append(acc)
    return tuple(out)


def check_strong(M, beta) -> InequalityVerdict:
    m, b = _pair(M, beta)
    lhs, rhs = alternating_partial_sums(m), alternating_partial_sums(b)
    return InequalityVerdict("strong", tuple(x >= y for x, y in zip(lhs, rhs)), lhs, rhs,
                             top_equality=lhs[-1] == rhs[-1])


@dataclass(frozen=True)
class PolynomialGap:
    """N_t - P_t = (1 + t) Q(t) + remainder."""

    q: tuple
    remainder: int
    cross_check: bool

    @property
    def success(self) -> bool:
        return self.remainder == 0 and all(c >= 0 for c in self.q)


def polynomial_gap(M, beta, strict: bool = False) -> PolynomialGap:
    m, b = _pair(M, beta)
    c = [x - y for x, y in zip(m, b)]
    q = []
    prev = 0
    for ck in c[:-1]:
        prev = ck - prev
        q.append(prev)
    remainder = c[-1] - (q[-1] if q else 0)
    # coefficient matching: q_k equals the alternating partial sum of M - beta up to k
    strong = check_strong(m, b)
    cross = all(qk == lk - rk for qk, lk, rk in zip(q, strong.lhs, strong.rhs))
    cross = cross and remainder == strong.lhs[-1] - strong.rhs[-1]
    if strict and remainder != 0:
        raise NonzeroRemainder(f"remainder {remainder}: alternating sums differ at the top degree")
    return PolynomialGap(tuple(q), int(remainder), bool(cross))


# --- catalog ---------------------------------------------------------------

def _circle_cos():
    chart = Chart("angle", f=lambda x: np.cos(x[0]), grad=lambda x: np.array([-np.sin(x[0])]),
                  hess=lambda x: np.array([[-np.cos(x[0])]]), lower=(0.0,), upper=(TWO_PI,),
                  periodic=True)
    return MorseFunctionSpec(
        "circle/cos", "circle", (chart,), betti=(1, 1),
        closed_form=(((0.0,), 1), ((np.pi,), 0)),
        vertex_function=lambda cx: np.cos(cx.chart_coordinates[:, 0]), domain="S^1 angle mod 2pi")


def _torus(name, a, b):
    """f = cos(a x) + cos(b y) on the flat torus."""
    chart = Chart(
        "angles",
        f=lambda x: np.cos(a * x[0]) + np.cos(b * x[1]),
        grad=lambda x: np.array([-a * np.sin(a * x[0]), -b * np.sin(b * x[1])]),
        hess=lambda x: np.diag([-a * a * np.cos(a * x[0]), -b * b * np.cos(b * x[1])]),
        lower=(0.0, 0.0), upper=(TWO_PI, TWO_PI), periodic=True)
    pts = []
    for i in range(2 * a):
        for j in range(2 * b):
            x, y = np.pi * i / a, np.pi * j / b
            idx = int(np.cos(a * x) > 0) + int(np.cos(b * y) > 0)
            pts.append(((x, y), idx))
    return MorseFunctionSpec(
        name, "torus", (chart,), betti=(1, 2, 1), closed_form=tuple(pts),
        vertex_function=lambda cx: np.cos(a * cx.chart_coordinates[:, 0])
        + np.cos(b * cx.chart_coordinates[:, 1]),
        domain="T^2 angles mod 2pi")


def _stereographic(pole: int) -> Chart:
    """Projection from the pole z = pole; f = z expressed in the plane."""

    def to_ambient(u):
        r2 = u[0] ** 2 + u[1] ** 2
        return np.array([2 * u[0], 2 * u[1], -pole * (1 - r2)]) / (1 + r2)

    def f(u):
        r2 = u[0] ** 2 + u[1] ** 2
        return pole * (r2 - 1) / (r2 + 1)

    def grad(u):
        s = u[0] ** 2 + u[1] ** 2 + 1
        return pole * 4 * np.asarray(u, float) / s**2

    def hess(u):
        u = np.asarray(u, float)
        s = u @ u + 1
        return pole * (4 * np.eye(2) / s**2 - 16 * np.outer(u, u) / s**3)

    tag = "north" if pole > 0 else "south"
    return Chart(f"stereo-{tag}", f, grad, hess, lower=(-2.0, -2.0), upper=(2.0, 2.0),
                 to_ambient=to_ambient)


def _graph_chart(axis: int, sign: int) -> Chart:
    """The hemisphere where coordinate ``axis`` has sign ``sign``, as a graph over the others."""
    others = [k for k in range(3) if k != axis]

    def to_ambient(u):
        p = np.empty(3)
        p[others] = u
        p[axis] = sign * np.sqrt(max(1 - u[0] ** 2 - u[1] ** 2, 0.0))
        return p

    def valid(u):
        return u[0] ** 2 + u[1] ** 2 < 0.98

    if axis == 2:
        def f(u):
            return sign * np.sqrt(1 - u[0] ** 2 - u[1] ** 2)

        def grad(u):
            w = np.sqrt(1 - u[0] ** 2 - u[1] ** 2)
            return -sign * np.asarray(u, float) / w

        def hess(u):
            u = np.asarray(u, float)
            w = np.sqrt(1 - u @ u)
            return -sign * (np.eye(2) / w + np.outer(u, u) / w**3)
    else:
        zpos = others.index(2)

        def f(u):
            return u[zpos]

        def grad(u):
            g = np.zeros(2)
            g[zpos] = 1.0
            return g

        def hess(u):
            return np.zeros((2, 2))

    return Chart(f"graph-{'xyz'[axis]}{'+' if sign > 0 else '-'}", f, grad, hess,
                 lower=(-1.0, -1.0), upper=(1.0, 1.0), to_ambient=to_ambient, valid=valid)


def sphere_graph_atlas() -> tuple:
    """Six hemisphere graph charts; a second atlas for the same height function."""
    return tuple(_graph_chart(a, s) for a in range(3) for s in (1, -1))


def _sphere_height():
    return MorseFunctionSpec(
        "sphere/height", "sphere", (_stereographic(-1), _stereographic(1)), betti=(1, 0, 1),
        closed_form=(((0.0, 0.0, -1.0), 0), ((0.0, 0.0, 1.0), 2)),
        vertex_function=lambda cx: cx.vertex_coordinates[:, 2] / np.linalg.norm(
            cx.vertex_coordinates, axis=1),
        domain="S^2 via two stereographic charts")


CATALOG = {
    "circle/cos": _circle_cos(),
    "sphere/height": _sphere_height(),
    "torus/cos+cos": _torus("torus/cos+cos", 1, 1),
    "torus/cos2x+cosy": _torus("torus/cos2x+cosy", 2, 1),
}

# default complexes on which each catalog manifold is triangulated
MANIFOLD_COMPLEX = {
    "circle": ("cycle", {"n": 12}),
    "sphere": ("icosphere", {"subdivisions": 1}),
    "torus": ("torus_grid", {"n": 16, "m": 16}),
}


def get(name: str) -> MorseFunctionSpec:
    try:
        return CATALOG[name]
    except KeyError:
        raise UnknownCatalogEntry(f"unknown Morse function {name!r}; known: {sorted(CATALOG)}") from None


@dataclass
class MorseReport:
    spec: str
    points: list
    counts: MorseCounts
    betti: tuple
    weak: InequalityVerdict
    strong: InequalityVerdict
    gap: PolynomialGap
    euler_ok: bool
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.weak.passed and self.strong.passed and self.gap.success and self.euler_ok


def verify(spec: MorseFunctionSpec, betti=None, seed_grid_resolution: int = 16) -> MorseReport:
    """Critical points, counts and all three inequality forms for one catalog pair."""
    betti = tuple(spec.betti if betti is None else betti)
    pts = find_critical_points(spec, seed_grid_resolution)
    counts = morse_counts(pts, spec.dim)
    return MorseReport(spec.name, pts, counts, betti, check_weak(counts, betti),
                       check_strong(counts, betti), polynomial_gap(counts, betti),
                       counts.alternating_sum == sum((-1) ** p * b for p, b in enumerate(betti)))
