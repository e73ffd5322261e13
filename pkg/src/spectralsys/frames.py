"""Frames, the induced metric and the teleparallel (Weitzenboeck) geometry on the 3-torus.

A frame is stored as a real :class:`TrigPolyField` ``V`` with values
``V[j, a]`` (vector ``j``, component ``a``).  The associated 2x2 principal
symbol is ``sigma^a xi_a`` with ``sigma^a = s^j V[j, a]`` and ``s^j`` the
standard Pauli matrices.  Quantities that involve the inverse of ``V`` are
evaluated pointwise from the exact values of ``V`` and its derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .errors import (
    InconsistentOrientation,
    LinearlyDependentFrame,
    NotHermitian,
    NotPositiveDefinite,
    NotSpecialUnitary,
    NotTraceFree,
    SingularSystem,
)
from .symbols import differential_symbol
from .trigpoly import TrigPolyField, stack, torus_grid

PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)

LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    LEVI_CIVITA[_a, _b, _c] = 1.0
    LEVI_CIVITA[_a, _c, _b] = -1.0

DEPENDENCE_TOL = 1e-10


def _sample_points(field, n_grid):
    axes = field.dependent_axes()
    sizes = [n_grid if a in axes else 1 for a in range(field.n)]
    return torus_grid(sizes, field.periods).reshape(-1, field.n)


class FrameBundle:
    """A linearly independent real frame on the 3-torus and the metric it induces."""

    def __init__(self, frame: TrigPolyField, check_grid: int = 8, corrected: bool = False):
        if frame.shape != (3, 3) or frame.n != 3:
            raise LinearlyDependentFrame(f"frame must be a 3x3 field on a 3-torus, got {frame.shape}")
        if frame.realness_defect() > 1e-12:
            raise ValueError("frame field must be real-valued")
        self.field = frame.real
        self.periods = frame.periods
        self.gram_schmidt_applied = corrected
        pts = _sample_points(self.field, check_grid)
        dets = np.linalg.det(self.frame(pts))
        scale = np.abs(self.frame(pts)).max(axis=(-1, -2)) ** 3
        if np.any(np.abs(dets) <= DEPENDENCE_TOL * scale):
            raise LinearlyDependentFrame("frame vectors are linearly dependent at a sampled point")
        signs = np.sign(dets)
        if not np.all(signs == signs[0]):
            raise LinearlyDependentFrame("det V changes sign, so the frame degenerates somewhere")
        self.c = int(signs[0])

    # pointwise evaluation ---------------------------------------------------
    def frame(self, x):
        return np.real(self.field(x))

    def dframe(self, x):
        """``dV[..., mu, j, a] = d V[j, a] / dx^mu``."""
        return np.real(self.field.grad(x))

    def coframe(self, x):
        """``C[k, b]`` with ``sum_a V[j, a] C[k, a] = delta_jk``."""
        return np.swapaxes(np.linalg.inv(self.frame(x)), -1, -2)

    def dcoframe(self, x):
        C = self.coframe(x)
        dV = self.dframe(x)
        return -C[..., None, :, :] @ np.swapaxes(dV, -1, -2) @ C[..., None, :, :]

    def g_up(self, x):
        V = self.frame(x)
        return np.swapaxes(V, -1, -2) @ V

    def g_down(self, x):
        C = self.coframe(x)
        return np.swapaxes(C, -1, -2) @ C

    def dg_down(self, x):
        C = self.coframe(x)[..., None, :, :]
        dC = self.dcoframe(x)
        t = np.swapaxes(dC, -1, -2) @ C
        return t + np.swapaxes(t, -1, -2)

    def sqrt_det_g(self, x):
        return 1.0 / np.abs(np.linalg.det(self.frame(x)))

    def dlog_det_g(self, x):
        """``d/dx^mu log det g_down = -2 tr(V^{-1} dV)``."""
        Vinv = np.linalg.inv(self.frame(x))
        return -2.0 * np.einsum("...aj,...mja->...m", Vinv, self.dframe(x))

    # symbols --------------------------------------------------------------
    def sigma_field(self) -> TrigPolyField:
        return symbol_from_frame(self)

    def symbol(self, zero_order=None):
        return differential_symbol(self.sigma_field(), zero_order, metric_up=self.g_up,
                                   label="frame symbol")

    def orthonormality_defect(self, metric_down, n_grid=8):
        """Largest deviation of ``g(V_j, V_k)`` from ``delta_jk`` for a supplied metric."""
        pts = _sample_points(self.field, n_grid)
        V = self.frame(pts)
        G = V @ np.asarray(metric_down(pts)) @ np.swapaxes(V, -1, -2)
        return float(np.abs(G - np.eye(3)).max())

    def __repr__(self):
        return f"FrameBundle(c={self.c}, {self.field!r})"


# ------------------------------------------------------------------ constructors
def constant_frame(matrix, periods=None):
    return FrameBundle(TrigPolyField.constant(np.asarray(matrix, dtype=float), 3, periods))


def k3_frame(k: int, periods=None) -> FrameBundle:
    """Frame rotating by angle ``k x^3`` in the (1,2)-plane."""
    up = np.array([[0.5, -0.5j, 0], [0.5j, 0.5, 0], [0, 0, 0]])
    waves = np.array([[0, 0, k], [0, 0, -k], [0, 0, 0]])
    coeffs = np.stack([up, up.conj(), np.diag([0.0, 0.0, 1.0])])
    return FrameBundle(TrigPolyField(waves, coeffs, periods, (3, 3)))


def random_frame(rng, max_harmonic=2, amplitude=0.15, n_terms=6, periods=None) -> FrameBundle:
    """Identity plus a small random real trigonometric perturbation."""
    modes = np.arange(-max_harmonic, max_harmonic + 1)
    waves = rng.choice(modes, size=(n_terms, 3))
    coeffs = amplitude * (rng.normal(size=(n_terms, 3, 3)) + 1j * rng.normal(size=(n_terms, 3, 3)))
    pert = TrigPolyField(waves, coeffs / np.sqrt(n_terms), periods, (3, 3)).real
    base = TrigPolyField.constant(np.eye(3), 3, periods)
    return FrameBundle(base + pert)


def gram_schmidt(frame: TrigPolyField, metric_down=None, n_grid=16, tol=1e-12):
    """Orthonormalize a frame pointwise with respect to ``metric_down``.

    Returns ``(bundle, corrected)``.  When a correction is needed the result is
    re-interpolated on an ``n_grid`` grid, so it is exact only up to the
    spectral tail of the orthonormalized frame.
    """
    if metric_down is None:
        def metric_down(x):
            return np.broadcast_to(np.eye(3), np.shape(x)[:-1] + (3, 3))

    def orthonormal(x):
        V = np.real(frame(x))
        G = np.asarray(metric_down(x))
        out = np.empty_like(V)
        for j in range(3):
            w = V[..., j, :].copy()
            for k in range(j):
                proj = np.einsum("...a,...ab,...b->...", w, G, out[..., k, :])
                w = w - proj[..., None] * out[..., k, :]
            norm = np.sqrt(np.einsum("...a,...ab,...b->...", w, G, w))
            out[..., j, :] = w / norm[..., None]
        return out

    pts = _sample_points(frame, n_grid)
    V = np.real(frame(pts))
    if np.abs(orthonormal(pts) - V).max() <= tol:
        return FrameBundle(frame), False
    field = TrigPolyField.sample_function(orthonormal, n_grid, frame.periods, 3, tol=1e-15).real
    return FrameBundle(field, corrected=True), True


# ------------------------------------------------------------------ symbol <-> frame
def symbol_from_frame(bundle: FrameBundle) -> TrigPolyField:
    """``sigma[a] = sum_j V[j, a] s^j`` as an exact (3, 2, 2) field."""
    return bundle.field.map_coeffs(lambda c: np.einsum("ja,jkl->akl", c, PAULI))


def frame_from_symbol(sigma: TrigPolyField, check_grid=8) -> FrameBundle:
    """Recover the frame from a trace-free Hermitian (3, 2, 2) field."""
    if sigma.shape != (3, 2, 2):
        raise NotTraceFree(f"expected a (3, 2, 2) field, got {sigma.shape}")
    if sigma.hermiticity_defect() > 1e-12:
        raise NotHermitian("principal symbol coefficients are not Hermitian")
    trace = sigma[:, 0, 0] + sigma[:, 1, 1]
    if len(trace.waves) and np.abs(trace.coeffs).max() > 1e-12:
        raise NotTraceFree("principal symbol coefficients are not trace-free")
    off = sigma[:, 0, 1]
    frame = stack([off.real, -off.imag, sigma[:, 0, 0].real])
    return FrameBundle(frame, check_grid)


def _as_sigma(obj):
    if isinstance(obj, FrameBundle):
        return obj.sigma_field()
    return obj


def metric_from_symbol(sigma, x):
    """``g^{ab}(x)`` by polarization of ``det A1(x, xi) = -g^{ab} xi_a xi_b``."""
    sig = np.asarray(_as_sigma(sigma)(x))
    tr = sig[..., 0, 0] + sig[..., 1, 1]
    if np.abs(tr).max() > 1e-12 * (1 + np.abs(sig).max()):
        raise NotTraceFree("principal symbol is not trace-free")

    def q(xi):
        return -np.real(np.linalg.det(np.einsum("a,...aij->...ij", xi, sig)))

    e = np.eye(3)
    g = np.empty(np.shape(sig)[:-3] + (3, 3))
    for a in range(3):
        g[..., a, a] = q(e[a])
        for b in range(a + 1, 3):
            g[..., a, b] = g[..., b, a] = 0.5 * (q(e[a] + e[b]) - q(e[a]) - q(e[b]))
    if np.any(np.linalg.eigvalsh(g) <= 0):
        raise NotPositiveDefinite("metric from the principal symbol is not positive definite")
    return g


def orientation_invariant(obj, n_grid=8, tol=1e-10) -> int:
    """Topological sign ``c``, computed from the frame and from the symbol; both must agree."""
    sigma = _as_sigma(obj)
    bundle = obj if isinstance(obj, FrameBundle) else frame_from_symbol(sigma)
    pts = _sample_points(bundle.field, n_grid)
    sig = np.asarray(sigma(pts))
    tr3 = np.trace(sig[..., 0, :, :] @ sig[..., 1, :, :] @ sig[..., 2, :, :], axis1=-2, axis2=-1)
    g = metric_from_symbol(sigma, pts)
    det_up = np.linalg.det(g)
    c_sym = -0.5j * tr3 / np.sqrt(det_up)
    c_frame = np.sign(np.linalg.det(bundle.frame(pts)))
    if np.abs(c_sym - c_frame).max() > tol:
        raise InconsistentOrientation("symbol-based and frame-based orientation disagree")
    if np.abs(det_up + 0.25 * tr3**2).max() > tol * (1 + np.abs(det_up).max()):
        raise InconsistentOrientation("det g differs from -(1/4) tr(s1 s2 s3)^2")
    if not np.all(c_frame == c_frame[0]):
        raise InconsistentOrientation("orientation is not constant over the torus")
    return int(c_frame[0])


# ------------------------------------------------------------------ transport
@dataclass
class Transport:
    xi: np.ndarray
    condition_number: float


def teleparallel_transport(obj, y, eta, x) -> Transport:
    """Covector at ``x`` with the same principal symbol as ``(y, eta)``."""
    bundle = obj if isinstance(obj, FrameBundle) else frame_from_symbol(obj)
    Vx = bundle.frame(np.asarray(x, dtype=float))
    Vy = bundle.frame(np.asarray(y, dtype=float))
    cond = float(np.linalg.cond(Vx))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularSystem(f"transport system is singular (condition {cond:.3g})")
    return Transport(np.linalg.solve(Vx, Vy @ np.asarray(eta, dtype=float)), cond)


def transport_covector_along(bundle: FrameBundle, path, w0, steps_per_leg=64):
    """Integrate the teleparallel transport ODE along a closed or open polyline (RK4)."""
    tele = teleparallel_tensors(bundle)
    w = np.asarray(w0, dtype=float)
    path = np.asarray(path, dtype=float)

    def rhs(x, v, w_):
        return np.einsum("amb,m,a->b", tele.Gamma(x), v, w_)

    for p0, p1 in zip(path[:-1], path[1:]):
        v = p1 - p0
        dt = 1.0 / steps_per_leg
        for i in range(steps_per_leg):
            x = p0 + i * dt * v
            k1 = rhs(x, v, w)
            k2 = rhs(x + 0.5 * dt * v, v, w + 0.5 * dt * k1)
            k3 = rhs(x + 0.5 * dt * v, v, w + 0.5 * dt * k2)
            k4 = rhs(x + dt * v, v, w + dt * k3)
            w = w + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return w


# ------------------------------------------------------------------ teleparallel tensors
class TeleparallelData:
    """Connection, torsion and related tensors of a frame, evaluated pointwise."""

    def __init__(self, bundle: FrameBundle):
        self.bundle = bundle

    def Gamma(self, x):
        """``Gamma[a, mu, b] = V[k, a] d_mu C[k, b]``."""
        V = self.bundle.frame(x)
        dC = self.bundle.dcoframe(x)
        return np.einsum("...ka,...mkb->...amb", V, dC)

    def T(self, x):
        """Torsion ``T[a, b, c] = V[j, a] (d_b C[j, c] - d_c C[j, b])``."""
        V = self.bundle.frame(x)
        dC = self.bundle.dcoframe(x)
        curl = np.einsum("...ja,...bjc->...abc", V, dC)
        return curl - np.swapaxes(curl, -1, -2)

    def starT(self, x):
        """Dual torsion with the first index up, second down."""
        T = self.T(x)
        gu = self.bundle.g_up(x)
        T_up = np.einsum("...abc,...bd,...ce->...ade", T, gu, gu)
        return 0.5 * np.einsum("...acd,cdb->...ab", T_up, LEVI_CIVITA) * self.bundle.sqrt_det_g(x)[..., None, None]

    def starT_up(self, x):
        return self.starT(x) @ self.bundle.g_up(x)

    def trace_starT(self, x):
        return np.trace(self.starT(x), axis1=-2, axis2=-1)

    def curl_coframe(self, x):
        """``curl C_j`` as covectors, shape (..., j, b)."""
        dC = self.bundle.dcoframe(x)  # [mu, j, b]
        dform = np.swapaxes(dC, -3, -2) - np.swapaxes(np.swapaxes(dC, -3, -2), -1, -2)
        gu = self.bundle.g_up(x)
        up = np.einsum("...jcd,...ce,...df->...jef", dform, gu, gu)
        return 0.5 * np.einsum("...jcd,cdb->...jb", up, LEVI_CIVITA) * self.bundle.sqrt_det_g(x)[..., None, None]

    def trace_starT_six_term(self, x):
        """Explicit coordinate formula for ``tr *T``."""
        C = self.bundle.coframe(x)
        dC = self.bundle.dcoframe(x)  # [mu, j, b]

        def d(mu, b):
            return dC[..., mu, :, b]

        terms = (
            C[..., :, 0] * d(1, 2) + C[..., :, 1] * d(2, 0) + C[..., :, 2] * d(0, 1)
            - C[..., :, 0] * d(2, 1) - C[..., :, 1] * d(0, 2) - C[..., :, 2] * d(1, 0)
        )
        return np.sqrt(np.linalg.det(self.bundle.g_up(x))) * terms.sum(axis=-1)

    def christoffel(self, x):
        """Levi-Civita coefficients ``chr[b, a, c]``."""
        gu = self.bundle.g_up(x)
        lower = _christoffel_lower(self.bundle.dg_down(x))
        return 0.5 * np.einsum("...bd,...acd->...bac", gu, lower)

    def covariant_metric_derivative(self, x):
        """``nabla_a g_bc`` using the teleparallel connection and exact ``d g``."""
        G = self.Gamma(x)
        g = self.bundle.g_down(x)
        dg = self.bundle.dg_down(x)
        return dg - np.einsum("...mab,...mc->...abc", G, g) - np.einsum("...mac,...bm->...abc", G, g)


def _christoffel_lower(dg):
    """``L[a, c, d] = d_a g_cd + d_c g_ad - d_d g_ac`` from ``dg[mu, p, q]``."""
    t1 = dg
    t2 = np.swapaxes(dg, -3, -2)
    t3 = np.einsum("...dac->...acd", dg)
    return t1 + t2 - t3


def teleparallel_tensors(bundle: FrameBundle) -> TeleparallelData:
    return TeleparallelData(bundle)


def curvature_torsion_residual(bundle: FrameBundle, x, xi):
    """|(U(1) curvature) - (c/2) *T^{ab} xi_a xi_b / |xi|_g^3| at a cotangent point."""
    from .symbols import CotangentPoint, u1_curvature

    pt = CotangentPoint(x, xi)
    lhs = u1_curvature(bundle.symbol(), 1, pt).scalar
    rhs = curvature_from_torsion(bundle, pt.x, pt.xi)
    return abs(lhs - rhs), lhs, rhs


def curvature_from_torsion(bundle: FrameBundle, x, xi):
    tele = TeleparallelData(bundle)
    sT = tele.starT_up(x)
    norm2 = np.einsum("...a,...ab,...b->...", xi, bundle.g_up(x), xi)
    return 0.5 * bundle.c * np.einsum("...a,...ab,...b->...", xi, sT, xi) / norm2**1.5


# ------------------------------------------------------------------ SU(2) -> SO(3)
def check_special_unitary(R, tol=1e-10):
    R = np.asarray(R, dtype=complex)
    if np.abs(R @ np.conj(np.swapaxes(R, -1, -2)) - np.eye(2)).max() > tol:
        raise NotSpecialUnitary("R is not unitary")
    if np.abs(np.linalg.det(R) - 1).max() > tol:
        raise NotSpecialUnitary("det R is not 1")


def su2_to_so3(R):
    """``O[j, k] = (1/2) tr(s_j R s^k R*)``."""
    check_special_unitary(R)
    R = np.asarray(R, dtype=complex)
    Rh = np.conj(np.swapaxes(R, -1, -2))
    O = 0.5 * np.einsum("jab,...bc,kcd,...da->...jk", PAULI, R, PAULI, Rh)
    return np.real(O)


def rotate_frame(bundle: FrameBundle, O) -> FrameBundle:
    """Frame ``V'_j = O[j, k] V_k`` for a constant rotation ``O``."""
    O = np.asarray(O, dtype=float)
    return FrameBundle(bundle.field.map_coeffs(lambda c: O @ c))


def conjugate_frame(bundle: FrameBundle, R_field: TrigPolyField) -> FrameBundle:
    """Frame whose Pauli field is ``R sigma R*`` for an SU(2)-valued field ``R``."""
    sigma = bundle.sigma_field()
    Rh = R_field.adjoint()
    rotated = stack([R_field @ sigma[a] @ Rh for a in range(3)])
    return frame_from_symbol(rotated)
