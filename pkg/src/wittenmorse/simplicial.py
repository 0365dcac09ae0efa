"""Oriented simplicial complexes and discrete exterior calculus.

Simplices are stored as sorted vertex tuples, so orientation is fixed by
ascending vertex index. Cochains live on simplices; a diagonal Hodge star
supplies the inner product. Operators returned as ``SparseSymOperator`` are
expressed in the orthonormal basis ``W^{1/2} e_sigma``, which makes the
Laplacian symmetric without changing its spectrum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DegreeOutOfRange, ParseError, TopologyError, UnknownCatalogEntry
from .spectral import SparseSymOperator, kernel_dimension, laplacian_from_coboundaries


class SimplicialComplex:
    """A finite simplicial complex closed under taking faces.

    ``period`` marks flat periodic coordinates (a torus in parameter space);
    edge vectors then use the minimum-image convention.
    """

    def __init__(self, vertex_coordinates, top_simplices, *, period=None, name=""):
        coords = np.asarray(vertex_coordinates, dtype=float)
        if coords.ndim != 2:
            raise ValueError("vertex_coordinates must be a 2-D array")
        tops = np.asarray(top_simplices, dtype=np.int64)
        if tops.ndim != 2 or tops.shape[0] == 0:
            raise ValueError("need at least one top simplex")
        if tops.min() < 0 or tops.max() >= len(coords):
            raise ValueError("simplex refers to a missing vertex")
        tops = np.sort(tops, axis=1)
        if np.any(np.diff(tops, axis=1) == 0):
            raise ValueError("simplex with repeated vertex")
        self.name = name
        self.period = None if period is None else np.broadcast_to(
            np.asarray(period, dtype=float), (coords.shape[1],)).copy()
        self._coords = coords
        self._coords.setflags(write=False)
        top = tops.shape[1] - 1
        simplices = [None] * (top + 1)
        simplices[top] = np.unique(tops, axis=0)
        for p in range(top - 1, -1, -1):
            faces = [np.delete(simplices[p + 1], i, axis=1) for i in range(p + 2)]
            simplices[p] = np.unique(np.vstack(faces), axis=0)
        # isolated vertices are still vertices of the complex
        simplices[0] = np.arange(len(coords), dtype=np.int64)[:, None]
        for s in simplices:
            s.setflags(write=False)
        self._simplices = simplices
        self._index = [None] * (top + 1)
        self._coboundary = {}
        # coordinates in which Morse functions are sampled (angles on tori)
        self.chart_coordinates = coords

    @property
    def vertex_coordinates(self) -> np.ndarray:
        return self._coords

    @property
    def top_dimension(self) -> int:
        return len(self._simplices) - 1

    @property
    def simplices(self) -> list[np.ndarray]:
        return list(self._simplices)

    def count(self, p: int) -> int:
        self._check_degree(p)
        return len(self._simplices[p])

    def counts(self) -> list[int]:
        return [len(s) for s in self._simplices]

    def _check_degree(self, p, lo=0, hi=None):
        hi = self.top_dimension if hi is None else hi
        if not (lo <= p <= hi):
            raise DegreeOutOfRange(f"degree {p} outside [{lo}, {hi}]")

    def index_of(self, p: int) -> dict:
        if self._index[p] is None:
            self._index[p] = {tuple(s): i for i, s in enumerate(self._simplices[p].tolist())}
        return self._index[p]

    def coboundary(self, p: int) -> sp.csr_matrix:
        """Integer coboundary d_p from p-cochains to (p+1)-cochains."""
        self._check_degree(p, 0, self.top_dimension - 1)
        if p not in self._coboundary:
            upper = self._simplices[p + 1]
            lookup = self.index_of(p)
            rows, cols, vals = [], [], []
            for i in range(p + 2):
                faces = np.delete(upper, i, axis=1)
                cols.append(np.fromiter((lookup[tuple(f)] for f in faces.tolist()),
                                        dtype=np.int64, count=len(faces)))
                rows.append(np.arange(len(upper)))
                vals.append(np.full(len(upper), -1 if i % 2 else 1, dtype=np.int64))
            d = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(len(upper), len(self._simplices[p])), dtype=np.int64)
            d.sort_indices()
            self._coboundary[p] = d
        return self._coboundary[p]

    def edge_vectors(self, a, b) -> np.ndarray:
        """Vectors from vertices ``a`` to ``b`` (minimum image when periodic)."""
        v = self._coords[np.asarray(b)] - self._coords[np.asarray(a)]
        if self.period is not None:
            v = v - self.period * np.round(v / self.period)
        return v

    def is_closed(self) -> bool:
        """Every codimension-1 face lies in exactly two top simplices."""
        if self.top_dimension == 0:
            return True
        d = self.coboundary(self.top_dimension - 1)
        per_face = np.asarray(abs(d).sum(axis=0)).ravel()
        return bool(np.all(per_face == 2))

    def __repr__(self):
        return f"SimplicialComplex(name={self.name!r}, counts={self.counts()})"


@dataclass(frozen=True)
class HodgeStarSet:
    """Strictly positive diagonal weights per degree."""

    weights: tuple
    kind: str = "custom"

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=float).copy() for w in self.weights)
        for p, w in enumerate(ws):
            if w.ndim != 1:
                raise ValueError(f"weights[{p}] must be 1-D")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError(f"weights[{p}] must be finite and > 0")
            w.setflags(write=False)
        object.__setattr__(self, "weights", ws)

    def check(self, complex_: SimplicialComplex):
        if [len(w) for w in self.weights] != complex_.counts():
            raise ValueError("star sizes do not match the complex")

    @classmethod
    def combinatorial(cls, complex_: SimplicialComplex) -> "HodgeStarSet":
        return cls(tuple(np.ones(n) for n in complex_.counts()), kind="combinatorial")

    @classmethod
    def random(cls, complex_: SimplicialComplex, rng=None, low=0.25, high=4.0) -> "HodgeStarSet":
        rng = np.random.default_rng(rng)
        return cls(tuple(rng.uniform(low, high, n) for n in complex_.counts()), kind="random")

    @classmethod
    def circumcentric(cls, complex_: SimplicialComplex) -> "HodgeStarSet":
        """Ratios |dual cell| / |primal cell| from circumcentric duals.

        Supports 1-D and 2-D complexes. Non-positive weights, which appear on
        non-Delaunay meshes, are clamped to a small positive value.
        """
        top = complex_.top_dimension
        if top == 1:
            weights = _circumcentric_1d(complex_)
        elif top == 2:
            weights = _circumcentric_2d(complex_)
        else:
            raise TopologyError("circumcentric stars implemented for dimensions 1 and 2")
        out = []
        for p, w in enumerate(weights):
            bad = w <= 0
            if np.any(bad):
                floor = 1e-3 * (w[~bad].mean() if np.any(~bad) else 1.0)
                warnings.warn(f"{int(bad.sum())} non-positive degree-{p} star weights clamped",
                              RuntimeWarning, stacklevel=2)
                w = np.where(bad, floor, w)
            out.append(w)
        return cls(tuple(out), kind="circumcentric")


def _circumcentric_1d(cx):
    e = cx.simplices[1]
    length = np.linalg.norm(cx.edge_vectors(e[:, 0], e[:, 1]), axis=1)
    dual0 = np.zeros(cx.count(0))
    np.add.at(dual0, e[:, 0], length / 2)
    np.add.at(dual0, e[:, 1], length / 2)
    return [dual0, 1.0 / length]


def _cot(u, v):
    dot = np.einsum("ij,ij->i", u, v)
    if u.shape[1] == 2:
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    else:
        cross = np.linalg.norm(np.cross(u, v), axis=1)
    return dot / cross, cross


def _circumcentric_2d(cx):
    tri = cx.simplices[2]
    edges = cx.index_of(1)
    dual0 = np.zeros(cx.count(0))
    cot_sum = np.zeros(cx.count(1))
    area = None
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        a, b, c = tri[:, k], tri[:, i], tri[:, j]
        # angle at vertex a, opposite edge (b, c)
        u, v = cx.edge_vectors(a, b), cx.edge_vectors(a, c)
        cot_a, cross = _cot(u, v)
        if area is None:
            area = cross / 2
        eidx = np.fromiter((edges[(min(x, y), max(x, y))] for x, y in zip(b.tolist(), c.tolist())),
                           dtype=np.int64, count=len(tri))
        np.add.at(cot_sum, eidx, cot_a)
        # Voronoi share of b and c from the edge (b, c) and the angle at a
        len2 = np.einsum("ij,ij->i", v - u, v - u)
        np.add.at(dual0, b, len2 * cot_a / 8)
        np.add.at(dual0, c, len2 * cot_a / 8)
    return [dual0, cot_sum / 2, 1.0 / area]


def _weights(stars, complex_):
    if stars is None:
        stars = HodgeStarSet.combinatorial(complex_)
    stars.check(complex_)
    return stars.weights


def orthonormal_coboundary(complex_: SimplicialComplex, stars: HodgeStarSet | None, p: int):
    """W_{p+1}^{1/2} d_p W_p^{-1/2}; its transpose is the codifferential in this basis."""
    w = _weights(stars, complex_)
    d = complex_.coboundary(p).astype(float)
    return (sp.diags(np.sqrt(w[p + 1])) @ d @ sp.diags(1 / np.sqrt(w[p]))).tocsr()


def codifferential(complex_: SimplicialComplex, stars: HodgeStarSet | None, p: int) -> sp.csr_matrix:
    """Adjoint of d_{p-1} for the star inner product, mapping p- to (p-1)-cochains."""
    complex_._check_degree(p, 1, complex_.top_dimension)
    w = _weights(stars, complex_)
    d = complex_.coboundary(p - 1).astype(float)
    return (sp.diags(1 / w[p - 1]) @ d.T @ sp.diags(w[p])).tocsr()


def inner(stars: HodgeStarSet, p: int, a, b) -> float:
    return float(np.dot(stars.weights[p] * np.asarray(a), np.asarray(b)))


def hodge_laplacian(complex_: SimplicialComplex, stars: HodgeStarSet | None, p: int) -> SparseSymOperator:
    """dd* + d*d on p-cochains, in the star-orthonormal basis."""
    complex_._check_degree(p)
    lower = orthonormal_coboundary(complex_, stars, p - 1) if p > 0 else None
    upper = orthonormal_coboundary(complex_, stars, p) if p < complex_.top_dimension else None
    return laplacian_from_coboundaries(lower, upper, complex_.count(p))


def betti(complex_: SimplicialComplex, stars: HodgeStarSet | None = None, p: int = 0, **kw) -> int:
    if not complex_.is_closed():
        raise TopologyError("Betti numbers via harmonic forms need a closed complex")
    return kernel_dimension(hodge_laplacian(complex_, stars, p), **kw)


def betti_numbers(complex_: SimplicialComplex, stars: HodgeStarSet | None = None, **kw) -> list[int]:
    return [betti(complex_, stars, p, **kw) for p in range(complex_.top_dimension + 1)]


def euler_characteristic(complex_: SimplicialComplex) -> int:
    return int(sum((-1) ** p * n for p, n in enumerate(complex_.counts())))


# --- OFF interchange -------------------------------------------------------

def _off_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_off(text: str, name: str = "") -> SimplicialComplex:
    lines = _off_lines(text)
    try:
        lineno, tok = next(lines)
    except StopIteration:
        raise ParseError("empty OFF input", 1) from None
    if tok[0] != "OFF":
        raise ParseError(f"expected 'OFF' header, got {tok[0]!r}", lineno)
    tok = tok[1:]
    if not tok:
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise ParseError("missing count line", lineno + 1) from None
    try:
        nv, nf = int(tok[0]), int(tok[1])
    except (ValueError, IndexError):
        raise ParseError("count line must hold vertex, face and edge counts", lineno) from None
    if nv <= 0 or nf <= 0:
        raise ParseError("vertex and face counts must be positive", lineno)
    coords = []
    for _ in range(nv):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise ParseError(f"expected {nv} vertices, found {len(coords)}", lineno + 1) from None
        try:
            xyz = [float(x) for x in tok[:3]]
        except ValueError:
            raise ParseError("bad vertex coordinate", lineno) from None
        if len(xyz) != 3:
            raise ParseError("vertex needs three coordinates", lineno)
        coords.append(xyz)
    faces = []
    for _ in range(nf):
        try:
            lineno, tok = next(lines)
        except StopIteration:
            raise ParseError(f"expected {nf} faces, found {len(faces)}", lineno + 1) from None
        try:
            vals = [int(x) for x in tok]
        except ValueError:
            raise ParseError("bad face index", lineno) from None
        if vals[0] != 3 or len(vals) < 4:
            raise ParseError("only triangle faces are supported", lineno)
        tri = vals[1:4]
        if min(tri) < 0 or max(tri) >= nv:
            raise ParseError("face index out of range", lineno)
        if len(set(tri)) != 3:
            raise ParseError("degenerate face", lineno)
        faces.append(tri)
    return SimplicialComplex(np.array(coords), np.array(faces), name=name)


def load_off(path) -> SimplicialComplex:
    path = Path(path)
    return parse_off(path.read_text(), name=path.stem)


def write_off(complex_: SimplicialComplex, path) -> None:
    if complex_.top_dimension != 2:
        raise TopologyError("OFF output needs a triangle complex")
    coords = complex_.vertex_coordinates
    if coords.shape[1] < 3:
        coords = np.hstack([coords, np.zeros((len(coords), 3 - coords.shape[1]))])
    out = ["OFF", f"{complex_.count(0)} {complex_.count(2)} {complex_.count(1)}"]
    out += [" ".join(repr(float(x)) for x in row) for row in coords]
    out += ["3 " + " ".join(str(int(v)) for v in tri) for tri in complex_.simplices[2]]
    Path(path).write_text("\n".join(out) + "\n")


# --- catalog ---------------------------------------------------------------

def cycle(n: int = 12) -> SimplicialComplex:
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    theta = 2 * np.pi * np.arange(n) / n
    edges = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    cx = SimplicialComplex(np.column_stack([np.cos(theta), np.sin(theta)]), edges, name=f"cycle{n}")
    cx.chart_coordinates = theta[:, None]
    return cx


def octahedron() -> SimplicialComplex:
    v = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    faces = [(a, b, c) for a in (0, 1) for b in (2, 3) for c in (4, 5)]
    return SimplicialComplex(v, faces, name="octahedron")


def torus_grid(n: int = 16, m: int | None = None) -> SimplicialComplex:
    """Flat periodic triangulation of [0, 2pi)^2, two triangles per square."""
    m = n if m is None else m
    if n < 3 or m < 3:
        raise ValueError("torus grid needs at least 3 cells per direction")
    i, j = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def vid(a, b):
        return (a % n) * m + (b % m)

    tri = np.vstack([
        np.column_stack([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]),
        np.column_stack([vid(i, j), vid(i, j + 1), vid(i + 1, j + 1)]),
    ])
    coords = np.column_stack([2 * np.pi * i / n, 2 * np.pi * j / m])
    cx = SimplicialComplex(coords, tri, period=2 * np.pi, name=f"torus_grid{n}x{m}")
    cx.chart_coordinates = coords
    return cx


def icosphere(subdivisions: int = 1) -> SimplicialComplex:
    phi = (1 + 5 ** 0.5) / 2
    v = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
         (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
         (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                mid[key] = len(verts) - 1
            return mid[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return SimplicialComplex(np.array(verts), faces, name=f"icosphere{subdivisions}")


@dataclass(frozen=True)
class _CatalogEntry:
    factory: object
    params: dict = field(default_factory=dict)
    description: str = ""


CATALOG = {
    "cycle": _CatalogEntry(cycle, {"n": 12}, "circle as an N-gon"),
    "octahedron": _CatalogEntry(octahedron, {}, "2-sphere, 6 vertices"),
    "torus_grid": _CatalogEntry(torus_grid, {"n": 16, "m": 16}, "flat periodic 2-torus"),
    "icosphere": _CatalogEntry(icosphere, {"subdivisions": 1}, "subdivided icosahedron"),
}

_ALIASES = {"N": "n", "M": "m"}


def generate(catalog_name: str, params: dict | None = None) -> SimplicialComplex:
    if catalog_name not in CATALOG:
        raise UnknownCatalogEntry(f"unknown complex {catalog_name!r}; known: {sorted(CATALOG)}")
    entry = CATALOG[catalog_name]
    kw = dict(entry.params)
    for k, v in (params or {}).items():
        k = _ALIASES.get(k, k)
        if k not in kw:
            raise ValueError(f"{catalog_name} takes no parameter {k!r}")
        kw[k] = v
    return entry.factory(**kw)


def cochain_complex_check(complex_: SimplicialComplex) -> bool:
    """d_{p+1} d_p == 0 exactly in integer arithmetic."""
    for p in range(complex_.top_dimension - 1):
        prod = complex_.coboundary(p + 1) @ complex_.coboundary(p)
        if prod.count_nonzero():
            return False
    return True


def random_cochain_pairs(complex_, p, n, rng):
    rng = np.random.default_rng(rng)
    for _ in range(n):
        yield rng.standard_normal(complex_.count(p)), rng.standard_normal(complex_.count(p + 1))


__all__ = [
    "SimplicialComplex", "HodgeStarSet", "orthonormal_coboundary", "codifferential", "inner",
    "hodge_laplacian", "betti", "betti_numbers", "euler_characteristic", "parse_off", "load_off",
    "write_off", "cycle", "octahedron", "torus_grid", "icosphere", "CATALOG", "generate",
    "cochain_complex_check",
]
