"""First-order 2x2 differential operators on the 3-torus and the massless Dirac operator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import AssumptionViolated, NotHermitian, NotOrthonormal
from .frames import (
    PAULI,
    FrameBundle,
    check_special_unitary,
    frame_from_symbol,
    metric_from_symbol,
    teleparallel_tensors,
)
from .symbols import dagger, differential_symbol
from .trigpoly import PointwiseField, TrigPolyField, torus_grid

EPSILON = np.array([[0.0, -1.0], [1.0, 0.0]])

Field = Union[TrigPolyField, PointwiseField]


@dataclass
class OperatorSpec:
    """``sum_a C_a(x) (-i d/dx^a) + Z(x)`` acting on m-columns.

    ``half_density`` marks the operator as acting on half-densities (inner
    product ``dx``); otherwise on scalars with the Riemannian weight of the
    metric encoded in the principal symbol.  ``frame`` and ``potential`` are
    kept when the operator was built as Dirac-plus-potential, so that it can
    be serialized.
    """

    derivative_coeffs: TrigPolyField
    zero_order: Field
    half_density: bool = True
    frame: Optional[FrameBundle] = None
    potential: Optional[TrigPolyField] = None
    sign: int = 1
    label: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.derivative_coeffs.shape[0]

    @property
    def m(self):
        return self.derivative_coeffs.shape[1]

    @property
    def periods(self):
        return self.derivative_coeffs.periods

    def symbol(self):
        metric = None
        if self.m == 2 and self.n == 3:
            def metric(x):
                return metric_from_symbol(self.derivative_coeffs, x)
        return differential_symbol(self.derivative_coeffs, self.zero_order, metric_up=metric,
                                   label=self.label)

    def subprincipal(self, x):
        grad = self.derivative_coeffs.grad(x)
        return self.zero_order(x) + 0.5j * np.einsum("...aaij->...ij", grad)

    def apply(self, v: TrigPolyField, x):
        """Pointwise values of ``A v`` for a trig-poly column field ``v``."""
        dv = v.grad(x)  # [..., a, i]
        return (np.einsum("...aij,...aj->...i", self.derivative_coeffs(x), -1j * dv)
                + np.einsum("...ij,...j->...i", self.zero_order(x), v(x)))

    def dependent_axes(self):
        return self.derivative_coeffs.dependent_axes() | self.zero_order.dependent_axes()

    def scaled(self, factor):
        return OperatorSpec(self.derivative_coeffs * factor, self.zero_order * factor,
                            self.half_density, self.frame,
                            None if self.potential is None else self.potential * factor,
                            self.sign * int(np.sign(factor)), f"{factor}*({self.label})",
                            dict(self.metadata))

    def __neg__(self):
        return self.scaled(-1)

    def plus_potential(self, potential):
        """Add a matrix-valued multiplication operator (constant array or trig poly)."""
        if not isinstance(potential, TrigPolyField):
            potential = TrigPolyField.constant(np.asarray(potential, dtype=complex), self.n, self.periods)
        total = potential if self.potential is None else self.potential + potential
        return OperatorSpec(self.derivative_coeffs, self.zero_order + potential,
                            self.half_density, self.frame, total, self.sign,
                            f"{self.label} + V", dict(self.metadata))

    def weight(self, x):
        """Density of the inner product in which the operator should be symmetric."""
        if self.half_density:
            return np.ones(np.shape(x)[:-1])
        g = metric_from_symbol(self.derivative_coeffs, x)
        return 1.0 / np.sqrt(np.linalg.det(g))


# ------------------------------------------------------------------ construction
def dirac_zero_order(bundle: FrameBundle, x, half_density=True):
    """Zero-order coefficient of the massless Dirac operator at points ``x``."""
    sigma_f = bundle.sigma_field()
    sig = sigma_f(x)  # [a, 2, 2]
    dsig = sigma_f.grad(x)  # [mu, b, 2, 2]
    g = bundle.g_down(x)
    sig_low = np.einsum("...bc,...cij->...bij", g, sig)
    chr_ = teleparallel_tensors(bundle).christoffel(x)  # [b, a, c]
    inner = np.swapaxes(dsig, -4, -3) + np.einsum("...bac,...cij->...baij", chr_, sig)
    # inner[b, a] = d_a sigma^b + chr^b_{ac} sigma^c
    Z = -0.25j * np.einsum("...aij,...bjk,...bakl->...il", sig, sig_low, inner)
    if half_density:
        Z = Z + 0.25j * np.einsum("...aij,...a->...ij", sig, bundle.dlog_det_g(x))
    return Z


def build_dirac(bundle: FrameBundle, half_density=True, metric_down=None, resolution=32):
    """Massless Dirac operator of a frame (on half-densities by default)."""
    if metric_down is not None:
        defect = bundle.orthonormality_defect(metric_down)
        if defect > 1e-10:
            raise NotOrthonormal(f"frame is not orthonormal for the supplied metric ({defect:.3g})")
    coeffs = bundle.sigma_field()
    axes = bundle.field.dependent_axes()
    if not axes:
        zero = TrigPolyField.zeros((2, 2), 3, bundle.periods)
    else:
        zero = PointwiseField(lambda x: dirac_zero_order(bundle, x, half_density), (2, 2), axes,
                              bundle.periods, 3, resolution)
    return OperatorSpec(coeffs, zero, half_density, bundle, None, 1,
                        "massless Dirac" + (" on half-densities" if half_density else ""))


def to_half_density(op: OperatorSpec) -> OperatorSpec:
    """Conjugate a scalar-weighted 2x2 operator by ``(det g)^{1/4}``."""
    if op.half_density:
        return op
    coeffs = op.derivative_coeffs
    bundle = frame_from_symbol(coeffs)

    def extra(x):
        return 0.25j * np.einsum("...aij,...a->...ij", coeffs(x), bundle.dlog_det_g(x))

    axes = coeffs.dependent_axes()
    zero = op.zero_order + PointwiseField(extra, (2, 2), axes, op.periods, 3, 32)
    return OperatorSpec(coeffs, zero, True, op.frame, op.potential, op.sign, op.label, dict(op.metadata))


def dirac_subprincipal_closed(bundle: FrameBundle):
    """``x -> (c/4) tr*T(x) I`` as a pointwise field."""
    tele = teleparallel_tensors(bundle)

    def value(x):
        t = tele.trace_starT(x)
        return (0.25 * bundle.c * t)[..., None, None] * np.eye(2)

    return PointwiseField(value, (2, 2), bundle.field.dependent_axes(), bundle.periods)


# ------------------------------------------------------------------ theorem check
@dataclass
class DiracDecision:
    is_dirac: bool
    failed_condition: Optional[str]
    witness: Optional[FrameBundle]
    max_offidentity: float
    max_b: float
    b_values: np.ndarray
    grid: int

    def __bool__(self):
        return self.is_dirac


def grid_points(op, n_grid):
    axes = op.dependent_axes()
    sizes = [n_grid if a in axes else 1 for a in range(op.n)]
    return torus_grid(sizes, op.periods).reshape(-1, op.n)


def check_assumptions(op):
    if not isinstance(op, OperatorSpec):
        raise AssumptionViolated("assumption 2: the operator must be differential (an OperatorSpec)")
    if op.m != 2:
        raise AssumptionViolated(f"assumption 1: m must be 2, got {op.m}")
    trace = op.derivative_coeffs[:, 0, 0] + op.derivative_coeffs[:, 1, 1]
    if len(trace.waves) and np.abs(trace.coeffs).max() > 1e-12:
        raise AssumptionViolated("assumption 1: principal symbol must be trace-free")
    if op.n != 3:
        raise AssumptionViolated(f"assumption 3: dimension must be 3, got {op.n}")
    if op.derivative_coeffs.hermiticity_defect() > 1e-12:
        raise AssumptionViolated("principal symbol must be Hermitian")


def is_massless_dirac(op: OperatorSpec, n_grid=16, tol=1e-8) -> DiracDecision:
    """Decide whether ``op`` is a massless Dirac operator on half-densities."""
    check_assumptions(op)
    op = to_half_density(op)
    pts = grid_points(op, n_grid)
    sub = op.subprincipal(pts)
    anti = np.abs(sub - dagger(sub)).max()
    if anti > tol * (1 + np.abs(sub).max()):
        raise AssumptionViolated(f"operator is not formally self-adjoint (anti-Hermitian A_sub {anti:.3g})")
    half_tr = 0.5 * np.trace(sub, axis1=-2, axis2=-1)
    off = np.linalg.norm(sub - half_tr[..., None, None] * np.eye(2), axis=(-2, -1), ord=2)
    norms = np.linalg.norm(sub, axis=(-2, -1), ord=2)
    max_off = float(off.max())

    bundle = frame_from_symbol(op.derivative_coeffs)
    tele = teleparallel_tensors(bundle)
    density = bundle.sqrt_det_g(pts)
    b = (bundle.c * tele.trace_starT(pts) - 2 * np.real(2 * half_tr)) * density / (8 * np.pi**2)
    a = density / (6 * np.pi**2)
    max_b = float(np.abs(b).max())

    if np.any(off > tol * (1 + norms)):
        return DiracDecision(False, "a", None, max_off, max_b, b, n_grid)
    if np.any(np.abs(b) > tol * (1 + a)):
        return DiracDecision(False, "b", None, max_off, max_b, b, n_grid)

    rebuilt = build_dirac(bundle, half_density=True)
    same_principal = rebuilt.derivative_coeffs.equals(op.derivative_coeffs, 1e-12)
    zero_gap = np.abs(rebuilt.zero_order(pts) - op.zero_order(pts)).max()
    if not same_principal or zero_gap > 1e-10 * (1 + np.abs(sub).max()):
        return DiracDecision(False, "reconstruction", None, max_off, max_b, b, n_grid)
    return DiracDecision(True, None, bundle, max_off, max_b, b, n_grid)


# ------------------------------------------------------------------ properties
def _inner(v, w, weight, cell):
    return np.sum(np.einsum("...i,...i->...", v.conj(), w) * weight) * cell


def _quadrature(op, n_grid):
    pts = torus_grid([n_grid] * op.n, op.periods).reshape(-1, op.n)
    cell = np.prod(op.periods) / n_grid**op.n
    return pts, cell


def selfadjointness_residual(op: OperatorSpec, trial_fields, n_grid=16):
    """Largest ``|<v, A w> - <A v, w>|`` over pairs of trial fields."""
    pts, cell = _quadrature(op, n_grid)
    weight = op.weight(pts)
    values = [(f(pts), op.apply(f, pts)) for f in trial_fields]
    worst = 0.0
    for v, Av in values:
        for w, Aw in values:
            worst = max(worst, abs(_inner(v, Aw, weight, cell) - _inner(Av, w, weight, cell)))
    return float(worst)


def charge_conjugate(v: TrigPolyField) -> TrigPolyField:
    """``C(v) = epsilon conj(v)`` for a 2-column field."""
    return v.conj().map_coeffs(lambda c: EPSILON @ c)


def charge_conjugation_residual(op: OperatorSpec, trial_fields=None, n_grid=16, rng=None):
    """``sup ||C(A v) - A(C v)|| / ||v||`` over trial fields (weighted L2 on the grid)."""
    if op.m != 2:
        raise AssumptionViolated("charge conjugation needs m = 2")
    if trial_fields is None:
        from .trigpoly import random_trig_poly

        rng = np.random.default_rng(7) if rng is None else rng
        trial_fields = [random_trig_poly(rng, (2,), 1) for _ in range(4)]
    pts, cell = _quadrature(op, n_grid)
    weight = op.weight(pts)
    worst = 0.0
    for v in trial_fields:
        cv = charge_conjugate(v)
        if not charge_conjugate(cv).equals(-v, 1e-15):
            raise AssertionError("C(C(v)) != -v")
        lhs = np.einsum("ij,...j->...i", EPSILON, np.conj(op.apply(v, pts)))
        rhs = op.apply(cv, pts)
        diff = np.sqrt(np.real(_inner(lhs - rhs, lhs - rhs, weight, cell)))
        norm = np.sqrt(np.real(_inner(v(pts), v(pts), weight, cell)))
        worst = max(worst, diff / norm)
    return float(worst)


def transform_dirac_su2(op: OperatorSpec, R_field: TrigPolyField, n_grid=8) -> OperatorSpec:
    """The operator ``R A R*`` for an SU(2)-valued trig-poly field ``R``."""
    pts = torus_grid([n_grid] * 3, R_field.periods).reshape(-1, 3)
    check_special_unitary(R_field(pts))
    Rh = R_field.adjoint()
    coeffs = op.derivative_coeffs
    rotated = [R_field @ coeffs[a] @ Rh for a in range(3)]
    from .trigpoly import stack

    new_coeffs = stack(rotated)
    correction = sum((R_field @ coeffs[a] @ Rh.derivative(a) for a in range(3)),
                     TrigPolyField.zeros((2, 2), 3, op.periods)) * (-1j)
    zero = op.zero_order
    if isinstance(zero, TrigPolyField):
        new_zero = R_field @ zero @ Rh + correction
    else:
        axes = zero.dependent_axes() | R_field.dependent_axes()
        new_zero = PointwiseField(lambda x: R_field(x) @ zero(x) @ Rh(x), (2, 2), axes,
                                  op.periods, 3, getattr(zero, "resolution", 32)) + correction
    new_frame = None
    if op.frame is not None:
        from .frames import conjugate_frame

        new_frame = conjugate_frame(op.frame, R_field)
    return OperatorSpec(new_coeffs, new_zero, op.half_density, new_frame, None, op.sign,
                        f"R({op.label})R*", dict(op.metadata))


def pauli_field(periods=None):
    return TrigPolyField.constant(PAULI, 3, periods)


def require_hermitian_potential(potential: TrigPolyField, tol=1e-12):
    if potential.hermiticity_defect() > tol:
        raise NotHermitian("potential is not Hermitian")
