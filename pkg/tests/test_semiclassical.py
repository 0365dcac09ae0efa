from itertools import combinations, product

import numpy as np
import pytest
import scipy.sparse as sp

from wittenmorse.errors import NonDiagonalPartition, OverlappingSupports, WellTooCloseToBoundary
from wittenmorse.morse import CATALOG, find_critical_points, morse_counts
from wittenmorse.semiclassical import (PartitionOfUnity, SchrodingerGrid, WellData, build_partition,
                                       central_second_difference_weights, exterior_growth_check,
                                       form_model_spectrum, form_shift, gamma, ims_identity_check,
                                       scalar_model_spectrum, scalar_schrodinger_grid,
                                       semiclassical_convergence, schrodinger_family,
                                       wells_from_critical_points)
from wittenmorse.spectral import SpectrumRequest, dense_eigs, smallest_eigs


def double_well(x):
    return (1 - x**2) ** 2


# --- model spectra ---------------------------------------------------------

def test_single_oscillator_levels():
    e = scalar_model_spectrum([WellData((0.0,), (1.0,))], 5)
    assert e.values.tolist() == [1, 3, 5, 7, 9]


def test_double_well_levels():
    wells = [WellData.from_potential_hessian((x,), [[8.0]]) for x in (-1.0, 1.0)]
    assert wells[0].omegas == (2.0,)
    assert np.allclose(scalar_model_spectrum(wells, 6).values, [2, 2, 6, 6, 10, 10])


def test_two_dimensional_well_with_offset():
    e = scalar_model_spectrum([WellData((0.0, 0.0), (1.0, 2.0), offset=0.5)], 4)
    assert np.allclose(e.values, [3.5, 5.5, 7.5, 7.5])


def test_model_matches_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(20):
        wells = [WellData(tuple(rng.uniform(-1, 1, 2)), tuple(rng.uniform(0.3, 2.0, 2)),
                          offset=float(rng.uniform(-1, 1))) for _ in range(int(rng.integers(1, 4)))]
        count = 25
        brute = sorted(sum(w.omegas) + w.offset + sum(2 * o * k for o, k in zip(w.omegas, n))
                       for w in wells for n in product(range(40), repeat=2))
        assert np.allclose(scalar_model_spectrum(wells, count).values, brute[:count])


@pytest.mark.parametrize("n,I,mu,expected", [(2, (), 0, -2), (2, (2,), 1, -2), (2, (1,), 1, 2)])
def test_gamma_examples(n, I, mu, expected):
    assert gamma(n, I, mu) == expected


@pytest.mark.parametrize("n", range(1, 7))
def test_gamma_exhaustive(n):
    for mu in range(n + 1):
        L = tuple(range(n - mu + 1, n + 1))
        for p in range(n + 1):
            for I in combinations(range(1, n + 1), p):
                g = gamma(n, I, mu)
                assert g >= -n and (g - n) % 2 == 0
                assert (g == -n) == (I == L)
                assert form_shift((1.0,) * n, I, mu) == g


def test_gamma_validation():
    with pytest.raises(ValueError):
        gamma(2, (3,), 0)


@pytest.mark.parametrize("n", range(1, 5))
def test_form_model_kernel_exhaustive(n):
    rng = np.random.default_rng(n)
    for mu in range(n + 1):
        om = tuple(rng.uniform(0.5, 2.0, n))
        w = WellData((0.0,) * n, om, morse_index=mu)
        for p in range(n + 1):
            e = form_model_spectrum(n, [w], p, 3)
            assert e.kernel_dimension() == (1 if p == mu else 0)
            assert np.all(e.values >= 0)


def torus_wells():
    return wells_from_critical_points(find_critical_points(CATALOG["torus/cos+cos"]))


def test_form_model_torus_one_forms():
    e = form_model_spectrum(2, torus_wells(), 1, 6)
    assert e.kernel_dimension() == 2
    assert e.values[2] == pytest.approx(2.0)


def test_form_model_torus_zero_forms():
    assert form_model_spectrum(2, torus_wells(), 0, 4).kernel_dimension() == 1


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_form_model_kernel_is_morse_count(name):
    spec = CATALOG[name]
    pts = find_critical_points(spec)
    wells = wells_from_critical_points(pts)
    M = morse_counts(pts, spec.dim).M
    for p in range(spec.dim + 1):
        assert form_model_spectrum(spec.dim, wells, p, M[p] + 2).kernel_dimension() == M[p]


def test_from_morse_hessian_orders_stable_first():
    w = WellData.from_morse_hessian((0.0, 0.0), np.diag([-3.0, 2.0]))
    assert w.morse_index == 1 and w.omegas == (2.0, 3.0)


# --- grids -----------------------------------------------------------------

@pytest.mark.parametrize("order", [2, 4, 6])
def test_second_difference_weights(order):
    w = central_second_difference_weights(order)
    x = np.arange(-(len(w) - 1), len(w)) * 0.01
    full = np.concatenate([w[:0:-1], w])
    assert full @ np.ones_like(x) == pytest.approx(0.0, abs=1e-12)
    assert full @ x**2 / 0.01**2 == pytest.approx(2.0, rel=1e-10)


def test_harmonic_oscillator_levels():
    op = scalar_schrodinger_grid((-8.0, 8.0), lambda x: x**2, None, 10.0, 1024)
    E = smallest_eigs(op, SpectrumRequest(3)).eigenvalues / 10.0
    assert np.all(np.abs(E - [1, 3, 5]) < 1e-3)


def test_double_well_ground_state():
    op = scalar_schrodinger_grid((-3.0, 3.0), double_well, None, 20.0, 1024)
    E = smallest_eigs(op, SpectrumRequest(2)).eigenvalues / 20.0
    assert np.all(np.abs(E - 2) < 0.2)


def test_constant_g_shifts_spectrum():
    lam, c = 5.0, 0.7
    a = dense_eigs(scalar_schrodinger_grid((-6.0, 6.0), lambda x: x**2, None, lam, 200))[0]
    b = dense_eigs(scalar_schrodinger_grid((-6.0, 6.0), lambda x: x**2, c, lam, 200))[0]
    assert np.allclose(b - a, lam * c, atol=1e-9)


def test_well_too_close_to_boundary():
    with pytest.raises(WellTooCloseToBoundary):
        scalar_schrodinger_grid((-8.0, 8.0), lambda x: (x - 7) ** 2, None, 10.0, 256)


def test_two_dimensional_grid():
    op = scalar_schrodinger_grid(((-6.0, 6.0), (-6.0, 6.0)), lambda x, y: x**2 + 4 * y**2, None, 4.0, 64)
    E = smallest_eigs(op, SpectrumRequest(3)).eigenvalues / 4.0
    # omegas (1, 2): levels 3, 5, 7
    assert np.allclose(E, [3, 5, 7], atol=0.05)


def test_grid_geometry():
    g = SchrodingerGrid((0.0, 1.0), 9)
    assert g.spacing(0) == pytest.approx(0.1)
    assert g.axis(0)[0] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        SchrodingerGrid((1.0, 0.0), 9)


def test_convergence_table_double_well():
    wells = [WellData.from_potential_hessian((x,), [[8.0]]) for x in (-1.0, 1.0)]
    model = scalar_model_spectrum(wells, 2)
    family = schrodinger_family((-3.0, 3.0), double_well, None, 512, 5.0)
    table = semiclassical_convergence(family, model, [5, 10, 20], 1)
    assert table.monotone[1]
    assert len(table.deviations(1)) == 3
    with pytest.raises(ValueError):
        semiclassical_convergence(family, model, [10, 5], 1)


def test_exterior_growth():
    out = exterior_growth_check((-3.0, 3.0), double_well, None, [5, 10, 20, 40], 400, [(-1.0,), (1.0,)],
                                0.5)
    assert out["passed"]
    assert out["slope"] > 1.5
    assert all(b > a for a, b in zip(out["energy"], out["energy"][1:]))


# --- partitions and IMS ----------------------------------------------------

def test_single_center_partition():
    x = np.linspace(-3, 3, 301)
    part = build_partition(x, [(0.0,)], 7.0)
    assert part.check() <= 1e-12


def test_disjoint_supports():
    x = np.linspace(-3, 3, 601)
    lam = 40.0
    d = 2.0
    assert lam ** -0.4 < d / 4
    part = build_partition(x, [(-1.0,), (1.0,)], lam)
    assert np.all(part.J[1] * part.J[2] == 0)
    assert part.check() <= 1e-12


def test_overlapping_supports():
    with pytest.raises(OverlappingSupports):
        build_partition(np.linspace(-3, 3, 31), [(-0.5,), (0.5,)], 1.0)


def test_ims_identity_operator_single_piece():
    H = sp.random(30, 30, density=0.2, random_state=1)
    H = (H + H.T).tocsr()
    res = ims_identity_check(H, [np.ones(30)])
    assert res.deviation == 0


def test_ims_double_well_three_pieces():
    lam = 10.0
    op = scalar_schrodinger_grid((-3.0, 3.0), double_well, None, lam, 400)
    part = build_partition(SchrodingerGrid((-3.0, 3.0), 400).points(), [(-1.0,), (1.0,)], lam)
    assert len(part.J) == 3
    res = ims_identity_check(op, part)
    assert res.relative <= 1e-12


def random_partition(n, pieces, rng):
    x = np.linspace(0, 1, n)
    raw = [np.exp(-((x - c) ** 2) / w) for c, w in zip(rng.uniform(0, 1, pieces), rng.uniform(0.01, 0.3, pieces))]
    raw = np.array(raw) + 1e-3
    return list(np.sqrt(raw / raw.sum(axis=0)))


def test_ims_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(5, 120))
        main = rng.standard_normal(n) * 10 ** rng.uniform(-2, 4)
        off = rng.standard_normal(n - 1) * 10 ** rng.uniform(-2, 4)
        H = sp.diags([off, main, off], [-1, 0, 1]).tocsr()
        res = ims_identity_check(H, random_partition(n, int(rng.integers(1, 6)), rng))
        assert res.relative <= 1e-12
        assert res.partition_error <= 1e-12


def test_ims_rejects_non_diagonal():
    H = sp.identity(4, format="csr")
    J = np.eye(4)
    J[0, 1] = 0.1
    with pytest.raises(NonDiagonalPartition):
        ims_identity_check(H, [J])


def test_partition_check_detects_bad_sum():
    bad = PartitionOfUnity((np.full(5, 0.5),), (), 1.0)
    with pytest.raises(ValueError):
        bad.check()
