import numpy as np
import pytest

from spectralsys.dirac import (
    EPSILON,
    build_dirac,
    charge_conjugate,
    charge_conjugation_residual,
    dirac_subprincipal_closed,
    is_massless_dirac,
    selfadjointness_residual,
    to_half_density,
    transform_dirac_su2,
)
from spectralsys.errors import AssumptionViolated, NotOrthonormal, NotSpecialUnitary
from spectralsys.frames import (
    PAULI,
    FrameBundle,
    constant_frame,
    k3_frame,
    random_frame,
    rotate_frame,
    su2_to_so3,
)
from spectralsys.spectrum import assemble_galerkin, hermitian_eigensolve
from spectralsys.symbols import CotangentPoint, subprincipal_symbol
from spectralsys.trigpoly import TrigPolyField, random_trig_poly


def points(rng, count=8):
    return rng.uniform(0, 2 * np.pi, (count, 3))


def spectrum_window(op, K, limit):
    data = hermitian_eigensolve(assemble_galerkin(op, K), keep_vectors=False)
    ev = data.eigenvalues
    return np.sort(ev[np.abs(ev) <= limit])


def axial_rotation(theta):
    return np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)])


# ---------------------------------------------------------------- construction
def test_constant_frame_operator(rng):
    op = build_dirac(constant_frame(np.eye(3)))
    assert op.derivative_coeffs.equals(TrigPolyField.constant(PAULI, 3), 0)
    assert np.abs(op.zero_order(points(rng))).max() == 0


@pytest.mark.parametrize("k", [1, 2, -3])
def test_rotating_frame_subprincipal(rng, k):
    op = build_dirac(k3_frame(k))
    x = points(rng)
    assert np.allclose(op.subprincipal(x), -0.5 * k * np.eye(2), atol=1e-12)
    sub = subprincipal_symbol(op.symbol(), CotangentPoint(x[0], [0.3, 0.2, -1.0]))
    assert np.allclose(sub, -0.5 * k * np.eye(2), atol=1e-9)


def test_euclidean_metric_half_density_unchanged(rng):
    bundle = k3_frame(2)
    x = points(rng)
    plain = build_dirac(bundle, half_density=False)
    half = build_dirac(bundle, half_density=True)
    assert np.allclose(plain.zero_order(x), half.zero_order(x), atol=1e-14)
    assert np.allclose(to_half_density(plain).zero_order(x), half.zero_order(x), atol=1e-14)


def test_half_density_conversion_on_curved_frame(rng):
    bundle = random_frame(rng)
    x = points(rng)
    converted = to_half_density(build_dirac(bundle, half_density=False))
    assert np.allclose(converted.zero_order(x), build_dirac(bundle).zero_order(x), atol=1e-12)


def test_refuses_non_orthonormal_metric():
    bundle = k3_frame(1)
    with pytest.raises(NotOrthonormal):
        build_dirac(bundle, metric_down=lambda x: 2 * np.broadcast_to(np.eye(3), np.shape(x)[:-1] + (3, 3)))
    build_dirac(bundle, metric_down=lambda x: np.broadcast_to(np.eye(3), np.shape(x)[:-1] + (3, 3)))


# ---------------------------------------------------------------- closed-form subprincipal
def test_closed_form_constant_and_rotating():
    x = np.array([[0.1, 0.2, 0.3], [1.0, 4.0, 5.0]])
    assert np.abs(dirac_subprincipal_closed(constant_frame(np.eye(3)))(x)).max() == 0
    assert np.allclose(dirac_subprincipal_closed(k3_frame(3))(x), -1.5 * np.eye(2), atol=1e-12)


def test_closed_form_matches_direct_on_random_frames(rng):
    worst = 0.0
    for _ in range(20):
        bundle = random_frame(rng, max_harmonic=1, amplitude=0.2)
        x = points(rng, 4)
        direct = build_dirac(bundle).subprincipal(x)
        worst = max(worst, np.abs(direct - dirac_subprincipal_closed(bundle)(x)).max())
    assert worst <= 1e-8


def test_inverted_frame_flips_subprincipal(rng):
    bundle = random_frame(rng)
    inverted = FrameBundle(-bundle.field)
    assert inverted.c == -bundle.c
    x = points(rng, 4)
    closed, closed_inv = dirac_subprincipal_closed(bundle)(x), dirac_subprincipal_closed(inverted)(x)
    assert np.abs(closed).max() > 1e-3
    assert np.allclose(closed_inv, -closed, atol=1e-12)
    assert np.allclose(build_dirac(inverted).subprincipal(x), closed_inv, atol=1e-10)


# ---------------------------------------------------------------- massless Dirac decision
def test_dirac_is_recognized():
    bundle = k3_frame(1)
    decision = is_massless_dirac(build_dirac(bundle))
    assert decision and decision.failed_condition is None
    assert decision.witness.field.equals(bundle.field, 1e-14)


def test_random_frame_dirac_is_recognized(rng):
    assert is_massless_dirac(build_dirac(random_frame(rng, max_harmonic=1)), n_grid=6)


def test_non_scalar_potential_fails_first_condition():
    decision = is_massless_dirac(build_dirac(k3_frame(1)).plus_potential(np.diag([0.3, 0.0])))
    assert not decision and decision.failed_condition == "a"


@pytest.mark.parametrize("c0", [0.1, -0.7])
def test_scalar_potential_fails_second_condition(c0):
    decision = is_massless_dirac(build_dirac(k3_frame(1)).plus_potential(c0 * np.eye(2)))
    assert not decision and decision.failed_condition == "b"
    assert np.allclose(decision.b_values, -c0 / (2 * np.pi**2), atol=1e-14)


def test_decision_stable_under_grid_refinement(rng):
    ops = [build_dirac(k3_frame(2)), build_dirac(k3_frame(1)).plus_potential(np.diag([0.2, 0])),
           build_dirac(random_frame(rng, max_harmonic=1)).plus_potential(0.05 * np.eye(2))]
    for op in ops:
        coarse, fine = is_massless_dirac(op, 16), is_massless_dirac(op, 32)
        assert (coarse.is_dirac, coarse.failed_condition) == (fine.is_dirac, fine.failed_condition)


def test_assumption_violations():
    op = build_dirac(k3_frame(1))
    traced = type(op)(op.derivative_coeffs + TrigPolyField.constant(np.stack([np.eye(2)] * 3), 3), op.zero_order)
    with pytest.raises(AssumptionViolated, match="trace-free"):
        is_massless_dirac(traced)
    with pytest.raises(AssumptionViolated, match="differential"):
        is_massless_dirac(op.symbol())
    with pytest.raises(AssumptionViolated, match="self-adjoint"):
        is_massless_dirac(op.plus_potential(1j * np.eye(2)))


# ---------------------------------------------------------------- self-adjointness
def trial_fields(rng, count=3):
    return [random_trig_poly(rng, (2,), 2) for _ in range(count)]


def test_selfadjoint_constant_frame(rng):
    assert selfadjointness_residual(build_dirac(constant_frame(np.eye(3))), trial_fields(rng)) <= 1e-12


@pytest.mark.parametrize("half", [True, False])
def test_selfadjoint_curved_frames(rng, half):
    assert selfadjointness_residual(build_dirac(k3_frame(1), half), trial_fields(rng)) <= 1e-10
    bundle = random_frame(rng, max_harmonic=1, amplitude=0.1)
    # trial fields of degree 2 times a degree-1 frame stay resolved on a 16-point grid
    assert selfadjointness_residual(build_dirac(bundle, half), trial_fields(rng), n_grid=24) <= 1e-10


def test_anti_hermitian_perturbation_detected(rng):
    fields = trial_fields(rng)
    op = build_dirac(k3_frame(1)).plus_potential(1j * np.eye(2))
    residual = selfadjointness_residual(op, fields)
    pts = np.stack(np.meshgrid(*[2 * np.pi * np.arange(16) / 16] * 3, indexing="ij"), -1).reshape(-1, 3)
    cell = (2 * np.pi / 16) ** 3
    norm_sq = max(np.sum(np.abs(f(pts)) ** 2) * cell for f in fields)
    assert residual == pytest.approx(2 * norm_sq, rel=1e-10)


# ---------------------------------------------------------------- charge conjugation
def test_epsilon_squares_to_minus_identity(rng):
    assert np.allclose(EPSILON @ EPSILON, -np.eye(2))
    v = random_trig_poly(rng, (2,), 2)
    assert charge_conjugate(charge_conjugate(v)).equals(-v, 1e-15)


@pytest.mark.parametrize("bundle_factory", [lambda r: k3_frame(1), lambda r: random_frame(r, max_harmonic=1)])
def test_dirac_commutes_with_charge_conjugation(rng, bundle_factory):
    assert charge_conjugation_residual(build_dirac(bundle_factory(rng)), rng=rng) <= 1e-10


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_diagonal_potential_breaks_charge_conjugation(rng, s):
    op = build_dirac(k3_frame(1)).plus_potential(np.diag([s, 0.0]))
    assert charge_conjugation_residual(op, rng=rng) > 0.9 * s


# ---------------------------------------------------------------- SU(2) conjugation
def test_identity_rotation_is_noop(rng):
    op = build_dirac(k3_frame(1))
    moved = transform_dirac_su2(op, TrigPolyField.constant(np.eye(2, dtype=complex), 3))
    x = points(rng)
    assert moved.derivative_coeffs.equals(op.derivative_coeffs, 1e-15)
    assert np.allclose(moved.zero_order(x), op.zero_order(x), atol=1e-15)


def test_rejects_non_special_field():
    with pytest.raises(NotSpecialUnitary):
        transform_dirac_su2(build_dirac(k3_frame(1)), TrigPolyField.constant(np.diag([1.0, -1.0]), 3))


def test_conjugated_operator_is_dirac_of_conjugated_frame(rng):
    bundle = random_frame(rng, max_harmonic=1)
    R = TrigPolyField(np.array([[0, 1, 0], [0, -1, 0]]),
                      np.array([np.diag([1, 0]), np.diag([0, 1])], dtype=complex), None, (2, 2))
    moved = transform_dirac_su2(build_dirac(bundle), R)
    rebuilt = build_dirac(moved.frame)
    x = points(rng)
    assert moved.derivative_coeffs.equals(rebuilt.derivative_coeffs, 1e-13)
    assert np.allclose(moved.zero_order(x), rebuilt.zero_order(x), atol=1e-10)


def test_constant_rotation_spectrum_unchanged():
    op = build_dirac(k3_frame(1))
    R = axial_rotation(0.8)
    moved = transform_dirac_su2(op, TrigPolyField.constant(R, 3))
    assert moved.frame.field.equals(rotate_frame(op.frame, su2_to_so3(R)).field, 1e-13)
    a, b = spectrum_window(op, 8, 2.9), spectrum_window(moved, 8, 2.9)
    assert len(a) == len(b) and np.allclose(a, b, atol=1e-8)


def test_winding_rotation_maps_trivial_frame_to_even_k3():
    R = TrigPolyField(np.array([[0, 0, 1], [0, 0, -1]]),
                      np.array([np.diag([1, 0]), np.diag([0, 1])], dtype=complex), None, (2, 2))
    moved = transform_dirac_su2(build_dirac(constant_frame(np.eye(3))), R)
    assert moved.frame.field.equals(k3_frame(2).field, 1e-13)
    a, b = spectrum_window(build_dirac(k3_frame(2)), 8, 2.9), spectrum_window(build_dirac(k3_frame(0)), 8, 2.9)
    assert len(a) == len(b) and np.allclose(a, b, atol=1e-8)


def test_odd_k3_spectrum_differs_from_trivial():
    odd, trivial = spectrum_window(build_dirac(k3_frame(1)), 8, 2.0), spectrum_window(build_dirac(k3_frame(0)), 8, 2.0)
    assert np.min(np.abs(odd - 0.5)) < 1e-10
    assert np.min(np.abs(trivial - 0.5)) > 0.4


def test_dirac_eigenvalues_have_even_multiplicity(rng):
    from spectralsys.spectrum import pairing_gap

    for op in (build_dirac(k3_frame(1)), build_dirac(random_frame(rng, max_harmonic=1, amplitude=0.1, n_terms=2))):
        data = hermitian_eigensolve(assemble_galerkin(op, 4), keep_vectors=False)
        assert pairing_gap(data, limit=1.5) <= 1e-8
