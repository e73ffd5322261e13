import numpy as np
import pytest

from spectralsys.asymptotics import (
    a_density,
    a_density_closed,
    b_density,
    b_density_closed,
    cosphere_quadrature,
    densities,
    density_table,
    global_coefficients,
    sphere_rule,
)
from spectralsys.dirac import build_dirac
from spectralsys.errors import DimensionMismatch, EllipticityViolated
from spectralsys.frames import PAULI, constant_frame, k3_frame, random_frame
from spectralsys.symbols import SymbolPair, evaluate_jet, subprincipal_from_jet, with_subprincipal
from spectralsys.trigpoly import TrigPolyField, random_trig_poly

from conftest import pauli_symbol

UNIT_BALL_DENSITY = 1 / (6 * np.pi**2)


def isotropic_symbol(diagonal):
    d = np.asarray(diagonal, dtype=float)
    return SymbolPair(3, len(d), lambda x, xi: np.linalg.norm(xi, axis=-1)[..., None, None] * np.diag(d))


# ---------------------------------------------------------------- sphere rules
def test_sphere_weights_sum_to_area():
    assert sphere_rule(3)[1].sum() == pytest.approx(4 * np.pi, rel=1e-14)
    assert sphere_rule(2)[1].sum() == pytest.approx(2 * np.pi, rel=1e-14)
    with pytest.raises(DimensionMismatch):
        sphere_rule(4)


def test_cosphere_unit_ball():
    rule = cosphere_quadrature(pauli_symbol(), np.zeros(3))
    assert rule.integrate(np.ones(len(rule.weights))) == pytest.approx(1.68869e-2, rel=1e-5)
    assert rule.integrate(np.ones(len(rule.weights))) == pytest.approx(UNIT_BALL_DENSITY, rel=1e-14)


def test_cosphere_doubled_frame():
    rule = cosphere_quadrature(pauli_symbol(scale=2.0), np.zeros(3))
    assert rule.integrate(np.ones(len(rule.weights))) == pytest.approx(UNIT_BALL_DENSITY / 8, rel=1e-14)


def test_order_doubling_converges(rng):
    sym = build_dirac(random_frame(rng)).symbol()
    x = rng.uniform(0, 6, 3)
    values = []
    for order in ((16, 32), (32, 64)):
        rule = cosphere_quadrature(sym, x, order=order)
        f = 1 + rule.nodes[:, 0] ** 2 * rule.nodes[:, 2]
        values.append(rule.integrate(f))
    assert abs(values[0] - values[1]) < 1e-10


def test_cosphere_rejects_bad_index():
    with pytest.raises(ValueError):
        cosphere_quadrature(pauli_symbol(), np.zeros(3), j=0)
    with pytest.raises(IndexError):
        cosphere_quadrature(pauli_symbol(), np.zeros(3), j=2)


def test_ellipticity_failure_detected():
    tilted = SymbolPair(3, 2, lambda x, xi: np.einsum("...a,aij->...ij", xi, PAULI)
                        + 2 * xi[..., 0][..., None, None] * np.eye(2))
    with pytest.raises(EllipticityViolated):
        a_density(tilted, np.zeros(3))


def test_two_dimensional_disc():
    sym = SymbolPair(2, 2, lambda x, xi: np.einsum("...a,aij->...ij", xi, PAULI[:2]))
    assert a_density(sym, np.zeros(2)) == pytest.approx(1 / (4 * np.pi), rel=1e-14)


# ---------------------------------------------------------------- a(x)
def test_a_for_pauli_and_doubled_frame():
    assert a_density(pauli_symbol(), np.zeros(3)) == pytest.approx(UNIT_BALL_DENSITY, rel=1e-14)
    doubled = build_dirac(constant_frame(2 * np.eye(3))).symbol()
    assert a_density(doubled, np.zeros(3)) == pytest.approx(1 / (48 * np.pi**2), rel=1e-12)
    assert a_density_closed(constant_frame(2 * np.eye(3)), np.zeros(3)) == pytest.approx(1 / (48 * np.pi**2))


def test_a_is_additive_over_positive_branches():
    sym = isotropic_symbol([1.0, 2.0, -1.0])
    d = densities(sym, np.zeros(3), need_b=False)
    assert d.a_per_j[1] == pytest.approx(UNIT_BALL_DENSITY)
    assert d.a_per_j[2] == pytest.approx(UNIT_BALL_DENSITY / 8)
    assert d.a_x == pytest.approx(UNIT_BALL_DENSITY * 9 / 8, rel=1e-14)


def test_a_matches_metric_on_random_frame(rng):
    bundle = random_frame(rng)
    x = rng.uniform(0, 6, (3, 3))
    for p in x:
        assert a_density(bundle.symbol(), p) == pytest.approx(a_density_closed(bundle, p), rel=1e-10)


# ---------------------------------------------------------------- b(x)
@pytest.mark.parametrize("k", [0, 1, 2])
def test_b_vanishes_for_dirac(k):
    sym = build_dirac(k3_frame(k)).symbol()
    assert abs(b_density(sym, np.array([0.3, 1.1, 2.0]))) < 1e-8


def test_b_for_diagonal_potential():
    b = b_density(pauli_symbol(np.diag([0.2, 0.0])), np.zeros(3))
    assert b == pytest.approx(-0.2 / (4 * np.pi**2), abs=1e-12)
    assert b == pytest.approx(-5.0661e-3, rel=1e-4)


def test_sign_flip(rng):
    sym = build_dirac(random_frame(rng)).plus_potential(np.diag([0.3, -0.1])).symbol()
    x = rng.uniform(0, 6, 3)
    d, flipped = densities(sym, x), densities(sym.scaled(-1), x)
    assert flipped.b_x == pytest.approx(-d.b_x, abs=1e-12)
    assert flipped.a_x == pytest.approx(d.a_x, abs=1e-12)
    assert abs(d.b_x) > 1e-4


def test_b_closed_examples():
    x = np.array([[0.1, 0.2, 0.3], [2.0, 1.0, 5.0]])
    k1 = k3_frame(1)
    assert np.allclose(b_density_closed(k1, build_dirac(k1).zero_order, x), 0, atol=1e-14)
    assert np.allclose(b_density_closed(k3_frame(0), np.diag([0.2, 0.0]), x), -0.2 / (4 * np.pi**2), atol=1e-15)
    c0 = 0.35
    shifted = build_dirac(k1).plus_potential(c0 * np.eye(2))
    assert np.allclose(b_density_closed(k1, shifted.zero_order, x), -c0 / (2 * np.pi**2), atol=1e-14)


def test_b_closed_matches_quadrature_on_random_family(rng):
    worst = 0.0
    for _ in range(4):
        bundle = random_frame(rng, max_harmonic=2)
        pot = random_trig_poly(rng, (2, 2), 2, 0.3, n_terms=3)
        op = build_dirac(bundle).plus_potential(0.5 * (pot + pot.adjoint()))
        x = rng.uniform(0, 6, 3)
        worst = max(worst, abs(b_density(op.symbol(), x) - b_density_closed(bundle, op.zero_order, x)))
    assert worst <= 1e-6


def test_densities_transform_under_affine_charts(rng):
    """Pulling back by ``x = L y`` multiplies both densities by ``|det L|``."""
    sym = build_dirac(random_frame(rng)).plus_potential(np.diag([0.2, -0.4])).symbol()
    L = np.array([[1.3, 0.2, 0.0], [0.0, 0.8, 0.1], [0.3, 0.0, 1.1]])
    Linv_T = np.linalg.inv(L).T

    def principal(y, eta):
        return sym.A1(np.asarray(y) @ L.T, np.asarray(eta) @ Linv_T.T)

    def sub(y, eta):
        return subprincipal_from_jet(evaluate_jet(sym, np.asarray(y) @ L.T, np.asarray(eta) @ Linv_T.T))

    pulled = with_subprincipal(SymbolPair(3, 2, principal), sub)
    y = rng.uniform(0, 3, 3)
    orig, new = densities(sym, L @ y, (24, 48)), densities(pulled, y, (24, 48))
    det = abs(np.linalg.det(L))
    assert new.a_x == pytest.approx(det * orig.a_x, rel=1e-10)
    assert new.b_x == pytest.approx(det * orig.b_x, abs=1e-7)


# ---------------------------------------------------------------- global coefficients
def test_global_coefficients_dirac():
    g = global_coefficients(build_dirac(k3_frame(1)), n_grid=4)
    assert g.a == pytest.approx(4 * np.pi / 3, rel=1e-12)
    assert g.a == pytest.approx(4.18879, rel=1e-6)
    assert abs(g.b) < 1e-8


def test_global_coefficients_with_potential():
    op = build_dirac(constant_frame(np.eye(3))).plus_potential(np.diag([0.5, 0.0]))
    coarse, fine = global_coefficients(op, 16), global_coefficients(op, 32)
    assert coarse.b == pytest.approx(-np.pi, abs=1e-10)
    assert abs(coarse.a - fine.a) < 1e-12 and abs(coarse.b - fine.b) < 1e-12


def test_closed_and_quadrature_global_agree(rng):
    op = build_dirac(random_frame(rng, max_harmonic=1, n_terms=2)).plus_potential(np.diag([0.1, 0.0]))
    quad = global_coefficients(op, 4, method="quadrature")
    closed = global_coefficients(op, 4, method="closed")
    assert quad.a == pytest.approx(closed.a, rel=1e-10)
    assert quad.b == pytest.approx(closed.b, abs=1e-6)


def test_spinor_form_converted_before_integration(rng):
    bundle = random_frame(rng, max_harmonic=1, n_terms=2)
    _, _, b_spinor, _ = density_table(build_dirac(bundle, half_density=False), 3)
    assert np.abs(b_spinor).max() < 1e-7


def test_density_table_workers_deterministic(rng):
    op = build_dirac(random_frame(rng, max_harmonic=1, n_terms=2))
    one = density_table(op, 3, workers=1)
    many = density_table(op, 3, workers=3)
    for a, b in zip(one, many):
        assert np.array_equal(a, b)
