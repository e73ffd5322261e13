import numpy as np
import pytest

from spectralsys.errors import (
    LinearlyDependentFrame,
    NotPositiveDefinite,
    NotSpecialUnitary,
    NotTraceFree,
)
from spectralsys.frames import (
    PAULI,
    FrameBundle,
    constant_frame,
    conjugate_frame,
    curvature_from_torsion,
    curvature_torsion_residual,
    frame_from_symbol,
    gram_schmidt,
    k3_frame,
    metric_from_symbol,
    orientation_invariant,
    random_frame,
    rotate_frame,
    su2_to_so3,
    symbol_from_frame,
    teleparallel_tensors,
    teleparallel_transport,
    transport_covector_along,
)
from spectralsys.symbols import CotangentPoint, principal_eigensystem
from spectralsys.trigpoly import TrigPolyField

SWAP = np.array([[0.0, 1, 0], [1, 0, 0], [0, 0, 1]])


def rz(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def sample(rng, count=6):
    return rng.uniform(0, 2 * np.pi, (count, 3))


# ---------------------------------------------------------------- metric
def test_metric_of_pauli_symbol():
    g = metric_from_symbol(constant_frame(np.eye(3)), np.zeros(3))
    assert np.allclose(g, np.eye(3), atol=1e-14)


def test_metric_of_doubled_frame():
    g = metric_from_symbol(constant_frame(2 * np.eye(3)), np.zeros(3))
    assert np.allclose(g, 4 * np.eye(3), atol=1e-13)


def test_metric_of_rotating_frame_is_euclidean(rng):
    g = metric_from_symbol(k3_frame(3), sample(rng))
    assert np.allclose(g, np.eye(3), atol=1e-13)


def test_metric_matches_frame_and_eigenvalues(rng):
    bundle = random_frame(rng)
    x = sample(rng)
    assert np.allclose(metric_from_symbol(bundle, x), bundle.g_up(x), atol=1e-12)
    sym = bundle.symbol()
    for xx in x[:3]:
        xi = rng.normal(size=3)
        h = principal_eigensystem(sym, CotangentPoint(xx, xi)).eigenvalue(1)
        assert h == pytest.approx(np.sqrt(xi @ bundle.g_up(xx) @ xi), abs=1e-12)


def test_metric_rejects_trace_and_indefinite():
    traced = TrigPolyField.constant(PAULI + np.eye(2), 3)
    with pytest.raises(NotTraceFree):
        metric_from_symbol(traced, np.zeros(3))
    degenerate = TrigPolyField.constant(np.stack([PAULI[0], PAULI[1], 0 * PAULI[2]]), 3)
    with pytest.raises(NotPositiveDefinite):
        metric_from_symbol(degenerate, np.zeros(3))


# ---------------------------------------------------------------- frame <-> symbol
def test_pauli_symbol_gives_identity_frame():
    bundle = frame_from_symbol(TrigPolyField.constant(PAULI, 3))
    assert np.allclose(bundle.frame(np.zeros(3)), np.eye(3))


def test_rotating_frame_symbol_harmonics():
    sigma = symbol_from_frame(k3_frame(2))
    waves = {tuple(w) for w, c in zip(sigma.waves, sigma.coeffs) if np.abs(c).max() > 1e-14}
    assert waves == {(0, 0, 2), (0, 0, -2), (0, 0, 0)}


def test_round_trip_is_exact(rng):
    bundle = random_frame(rng)
    back = frame_from_symbol(symbol_from_frame(bundle))
    assert back.field.equals(bundle.field, 1e-14)


def test_swapped_frame_has_negative_orientation():
    bundle = constant_frame(SWAP)
    assert bundle.c == -1
    assert orientation_invariant(bundle) == -1


def test_dependent_frame_rejected():
    with pytest.raises(LinearlyDependentFrame):
        constant_frame([[1.0, 0, 0], [1, 0, 0], [0, 0, 1]])
    wave = TrigPolyField(np.array([[1, 0, 0], [-1, 0, 0]]), np.stack([np.diag([0.5, 0, 0])] * 2), None, (3, 3))
    with pytest.raises(LinearlyDependentFrame):
        FrameBundle(wave + TrigPolyField.constant(np.diag([0.0, 1, 1]), 3))


# ---------------------------------------------------------------- orientation
@pytest.mark.parametrize("bundle, expected", [
    (constant_frame(np.eye(3)), 1),
    (constant_frame(SWAP), -1),
    (k3_frame(1), 1),
    (k3_frame(-4), 1),
])
def test_orientation(bundle, expected):
    assert orientation_invariant(bundle) == expected
    assert orientation_invariant(bundle.sigma_field()) == expected


def test_orientation_constant_on_random_frames(rng):
    for _ in range(3):
        bundle = random_frame(rng)
        assert orientation_invariant(bundle, n_grid=6) == bundle.c == 1


def test_orientation_of_sheared_symbol_and_rejection_of_trace():
    sheared = TrigPolyField.constant(np.stack([PAULI[0], PAULI[1], 0.5 * PAULI[2] + 0.1 * PAULI[0]]), 3)
    assert orientation_invariant(sheared) == frame_from_symbol(sheared).c == 1
    with pytest.raises(NotTraceFree):
        orientation_invariant(TrigPolyField.constant(np.stack([PAULI[0], PAULI[1], np.eye(2)]), 3))


# ---------------------------------------------------------------- transport
def test_constant_frame_transport_is_identity():
    bundle = constant_frame([[1.0, 0.2, 0], [0, 1, 0], [0.1, 0, 2]])
    eta = np.array([0.3, -1.0, 0.5])
    assert np.allclose(teleparallel_transport(bundle, [0, 0, 0], eta, [1, 2, 3]).xi, eta)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_rotating_frame_transport_quarter_turn(k):
    out = teleparallel_transport(k3_frame(k), [0, 0, 0], [1.0, 0, 0], [0, 0, np.pi / (2 * k)])
    assert np.allclose(out.xi, [0, 1, 0], atol=1e-14)


def test_transport_preserves_norm_and_inverts(rng):
    bundle = random_frame(rng)
    y, x = sample(rng, 2)
    eta = rng.normal(size=3)
    tr = teleparallel_transport(bundle, y, eta, x)
    assert tr.condition_number < 10
    assert tr.xi @ bundle.g_up(x) @ tr.xi == pytest.approx(eta @ bundle.g_up(y) @ eta, rel=1e-12)
    back = teleparallel_transport(bundle, x, tr.xi, y).xi
    assert np.allclose(back, eta, atol=1e-13)


def test_transport_ode_matches_algebraic_transport(rng):
    bundle = random_frame(rng)
    y, x = sample(rng, 2)
    eta = rng.normal(size=3)
    ode = transport_covector_along(bundle, [y, x], eta, steps_per_leg=200)
    assert np.allclose(ode, teleparallel_transport(bundle, y, eta, x).xi, atol=1e-8)


def test_transport_around_squares_has_small_holonomy(rng):
    bundle = random_frame(rng)
    base = rng.uniform(0, 6, 3)
    w0 = rng.normal(size=3)
    for h in (0.4, 0.2, 0.1):
        square = base + h * np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 0]])
        err = np.linalg.norm(transport_covector_along(bundle, square, w0, steps_per_leg=8) - w0)
        assert err <= h**3


# ---------------------------------------------------------------- tensors
def test_constant_frame_tensors_vanish():
    tele = teleparallel_tensors(constant_frame([[1.0, 0.3, 0], [0, 1, 0], [0, 0.2, 1]]))
    x = np.array([0.4, 1.0, 2.0])
    for name in ("Gamma", "T", "starT"):
        assert np.abs(getattr(tele, name)(x)).max() == 0


@pytest.mark.parametrize("k", [1, 2, -3])
def test_rotating_frame_axial_trace(rng, k):
    tele = teleparallel_tensors(k3_frame(k))
    x = sample(rng)
    assert np.allclose(tele.trace_starT(x), -2 * k, atol=1e-12)
    assert np.allclose(tele.trace_starT_six_term(x), -2 * k, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_rotating_frame_dual_torsion_at_origin(k):
    st = teleparallel_tensors(k3_frame(k)).starT(np.zeros(3))
    assert np.allclose(st, np.diag([-k, -k, 0.0]), atol=1e-13)


def test_torsion_antisymmetric_and_trace_forms_agree(rng):
    bundle = random_frame(rng)
    tele = teleparallel_tensors(bundle)
    x = sample(rng)
    T = tele.T(x)
    assert np.abs(T + np.swapaxes(T, -1, -2)).max() < 1e-14
    curl_form = np.einsum("...ja,...ja->...", bundle.frame(x), tele.curl_coframe(x))
    assert np.allclose(tele.trace_starT(x), curl_form, atol=1e-10)
    assert np.allclose(tele.trace_starT(x), tele.trace_starT_six_term(x), atol=1e-10)


def test_metric_compatibility(rng):
    bundle = random_frame(rng)
    tele = teleparallel_tensors(bundle)
    x = rng.uniform(0, 6, 3)
    assert np.abs(tele.covariant_metric_derivative(x)).max() < 1e-12
    # finite-difference metric derivative in place of the exact one
    h = 1e-4
    dg = np.stack([
        (-bundle.g_down(x + 2 * h * e) + 8 * bundle.g_down(x + h * e)
         - 8 * bundle.g_down(x - h * e) + bundle.g_down(x - 2 * h * e)) / (12 * h)
        for e in np.eye(3)
    ])
    G, g = tele.Gamma(x), bundle.g_down(x)
    nabla = dg - np.einsum("mab,mc->abc", G, g) - np.einsum("mac,bm->abc", G, g)
    assert np.abs(nabla).max() < 1e-8


def test_christoffel_symmetric_and_zero_for_euclidean(rng):
    tele = teleparallel_tensors(random_frame(rng))
    chr_ = tele.christoffel(rng.uniform(0, 6, 3))
    assert np.allclose(chr_, np.swapaxes(chr_, -1, -2), atol=1e-14)
    assert np.abs(teleparallel_tensors(k3_frame(2)).christoffel(np.ones(3))).max() < 1e-14


# ---------------------------------------------------------------- curvature and torsion
def test_curvature_torsion_constant_frame():
    res, lhs, rhs = curvature_torsion_residual(constant_frame(np.eye(3)), [0.2, 0.3, 0.4], [0.1, 1.0, -0.3])
    assert abs(lhs) < 1e-12 and abs(rhs) < 1e-14


@pytest.mark.parametrize("k", [1, 2])
def test_curvature_torsion_rotating_frame(k):
    res, lhs, rhs = curvature_torsion_residual(k3_frame(k), [0, 0, 0], [1.0, 0, 0])
    assert lhs == pytest.approx(-k / 2, abs=1e-6) and rhs == pytest.approx(-k / 2, abs=1e-12)
    assert res <= 1e-6
    res, lhs, rhs = curvature_torsion_residual(k3_frame(k), [0, 0, 0], [0, 0, 1.0])
    assert abs(lhs) < 1e-8 and abs(rhs) < 1e-14


def test_curvature_torsion_random_frames(rng):
    for _ in range(3):
        bundle = random_frame(rng)
        res, lhs, rhs = curvature_torsion_residual(bundle, rng.uniform(0, 6, 3), rng.normal(size=3))
        assert res <= 1e-6


def test_curvature_torsion_left_handed_frame(rng):
    bundle = random_frame(rng)
    flipped = FrameBundle(bundle.field.map_coeffs(lambda c: SWAP @ c))
    assert flipped.c == -1
    res, _, _ = curvature_torsion_residual(flipped, rng.uniform(0, 6, 3), rng.normal(size=3))
    assert res <= 1e-6
    assert curvature_from_torsion(flipped, np.zeros(3), np.ones(3)) != 0


# ---------------------------------------------------------------- SU(2) -> SO(3)
def test_su2_identity_and_double_cover():
    assert np.allclose(su2_to_so3(np.eye(2)), np.eye(3))
    assert np.allclose(su2_to_so3(-np.eye(2)), np.eye(3))


@pytest.mark.parametrize("theta", [0.3, 1.2, np.pi])
def test_su2_diagonal_gives_axial_rotation(theta):
    R = np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)])
    O = su2_to_so3(R)
    # rows act on frame vectors: V'_1 = cos V_1 + sin V_2
    assert np.allclose(O, rz(theta).T, atol=1e-14)


def test_su2_random_is_special_orthogonal(rng):
    a = rng.normal(size=4)
    a /= np.linalg.norm(a)
    R = np.array([[a[0] + 1j * a[1], a[2] + 1j * a[3]], [-a[2] + 1j * a[3], a[0] - 1j * a[1]]])
    O = su2_to_so3(R)
    assert np.allclose(O @ O.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(O) == pytest.approx(1.0)


def test_su2_rejects_non_special():
    with pytest.raises(NotSpecialUnitary):
        su2_to_so3(np.diag([1.0, -1.0]))
    with pytest.raises(NotSpecialUnitary):
        su2_to_so3(2 * np.eye(2))


def test_rotated_frame_matches_conjugated_pauli_field(rng):
    bundle = random_frame(rng)
    a = rng.normal(size=4)
    a /= np.linalg.norm(a)
    R = np.array([[a[0] + 1j * a[1], a[2] + 1j * a[3]], [-a[2] + 1j * a[3], a[0] - 1j * a[1]]])
    by_rotation = rotate_frame(bundle, su2_to_so3(R))
    by_conjugation = conjugate_frame(bundle, TrigPolyField.constant(R, 3))
    assert by_rotation.field.equals(by_conjugation.field, 1e-13)


# ---------------------------------------------------------------- Gram-Schmidt
def test_gram_schmidt_flags_corrections():
    ortho, corrected = gram_schmidt(k3_frame(1).field)
    assert not corrected and not ortho.gram_schmidt_applied
    skew = TrigPolyField.constant(np.array([[1.0, 0.3, 0], [0, 1, 0], [0, 0, 2]]), 3)
    fixed, corrected = gram_schmidt(skew)
    assert corrected and fixed.gram_schmidt_applied
    assert np.allclose(fixed.g_up(np.zeros(3)), np.eye(3), atol=1e-12)
