"""Matrix symbols on the cotangent bundle and their gauge-free calculus.

Callables in a :class:`SymbolPair` must broadcast over leading axes:
``principal(x, xi)`` maps arrays of shape ``(..., n)`` to ``(..., m, m)``.

Eigenvectors are only defined up to a phase, so every exported quantity is
computed from spectral projectors.  Projector derivatives come from first
order perturbation theory applied to the symbol jet, which is exact given
the derivatives of the symbol itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DegenerateEigenvalue,
    DimensionMismatch,
    EllipticityViolated,
    NotHermitian,
    NotUnitary,
    StepUnderflow,
)

GAP_TOL = 1e-6
ZERO_TOL = 1e-10
HERMITIAN_TOL = 1e-8
_EPS = np.finfo(float).eps


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class CotangentPoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if x.ndim != 1 or x.shape != xi.shape:
            raise DimensionMismatch(f"x and xi must be equal-length vectors, got {x.shape}, {xi.shape}")
        if not np.linalg.norm(xi) > 0:
            raise ValueError("xi must be nonzero (zero section is excluded)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def n(self):
        return len(self.x)


@dataclass
class SymbolPair:
    """Principal symbol (degree 1 in xi) and lower-order symbol (degree 0).

    The optional derivative callables override finite differences:
    ``principal_dx`` and ``principal_dxi`` return ``(..., n, m, m)`` and
    ``principal_mixed`` returns the contraction ``sum_a d2A1/dx^a dxi_a``.
    """

    n: int
    m: int
    principal: Callable
    lower: Optional[Callable] = None
    principal_dx: Optional[Callable] = None
    principal_dxi: Optional[Callable] = None
    principal_mixed: Optional[Callable] = None
    fd_step: float = 1e-4
    metric_up: Optional[Callable] = None
    label: str = ""

    def A1(self, x, xi):
        return np.asarray(self.principal(x, xi), dtype=complex)

    def A0(self, x, xi):
        if self.lower is None:
            shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1])
            return np.zeros(shape + (self.m, self.m), dtype=complex)
        out = np.asarray(self.lower(x, xi), dtype=complex)
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1])
        return np.broadcast_to(out, shape + (self.m, self.m))

    def scaled(self, factor):
        """The symbol of ``factor * A`` for a real constant ``factor``."""

        def wrap(fn):
            return None if fn is None else (lambda *a: factor * np.asarray(fn(*a)))

        return SymbolPair(
            self.n, self.m, wrap(self.principal), wrap(self.lower), wrap(self.principal_dx),
            wrap(self.principal_dxi), wrap(self.principal_mixed), self.fd_step,
            self.metric_up, self.label,
        )


@dataclass
class EigenSystem:
    h: np.ndarray
    vectors: np.ndarray
    m_plus: int
    m_minus: int

    @property
    def indices(self):
        return list(range(-self.m_minus, 0)) + list(range(1, self.m_plus + 1))

    def position(self, j):
        if j > 0 and j <= self.m_plus:
            return self.m_minus + j - 1
        if j < 0 and -j <= self.m_minus:
            return self.m_minus + j
        raise IndexError(f"signed index {j} outside -{self.m_minus}..-1, 1..{self.m_plus}")

    def eigenvalue(self, j):
        return float(self.h[self.position(j)])

    def vector(self, j):
        return self.vectors[:, self.position(j)]

    def projector(self, j):
        v = self.vector(j)
        return np.outer(v, v.conj())

    @property
    def projectors(self):
        return np.einsum("ik,jk->kij", self.vectors, self.vectors.conj())


@dataclass
class SymbolJet:
    value: np.ndarray
    dx: np.ndarray
    dxi: np.ndarray
    mixed_trace: Optional[np.ndarray] = None
    dxdxi: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None


@dataclass
class U1CurvatureData:
    scalar: float
    form: np.ndarray
    potential: np.ndarray
    gauge: str = field(default="largest component real and positive")


# ---------------------------------------------------------------- differences
_STENCIL = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))


def _steps(base, rel, scale_with_norm):
    base = np.asarray(base, dtype=float)
    if scale_with_norm:
        scale = np.maximum(1.0, np.linalg.norm(base, axis=-1))
    else:
        scale = np.ones(base.shape[:-1])
    h = rel * scale
    floor = 1e3 * _EPS * np.maximum(1.0, np.abs(base).max(axis=-1))
    if np.any(h < floor):
        raise StepUnderflow(f"finite-difference step {np.min(h):.3g} is below the noise floor")
    return h


def _partial(fun, x, xi, wrt, axis, h):
    """d fun / d(wrt)_axis by 4th-order central differences + one Richardson level."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)

    def central(step):
        acc = 0.0
        for k, c in _STENCIL:
            if wrt == "x":
                xs = x.copy()
                xs[..., axis] = xs[..., axis] + k * step
                val = fun(xs, xi)
            else:
                xis = xi.copy()
                xis[..., axis] = xis[..., axis] + k * step
                val = fun(x, xis)
            acc = acc + c * np.asarray(val)
        st = np.asarray(step).reshape(np.shape(step) + (1,) * (np.ndim(acc) - np.ndim(step)))
        return acc / (12.0 * st)

    return (16.0 * central(h / 2.0) - central(h)) / 15.0


def _gradient(fun, x, xi, wrt, rel):
    base = xi if wrt == "xi" else x
    h = _steps(base, rel, scale_with_norm=(wrt == "xi"))
    n = np.shape(base)[-1]
    parts = [_partial(fun, x, xi, wrt, a, h) for a in range(n)]
    lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1])
    return np.stack([np.broadcast_to(p, lead + np.shape(p)[len(lead):]) for p in parts], axis=len(lead))


def evaluate_jet(sym: SymbolPair, x, xi, mixed=True, full_mixed=False) -> SymbolJet:
    """Batched jet of the principal symbol at points ``(x, xi)``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.shape[-1] != sym.n or xi.shape[-1] != sym.n:
        raise DimensionMismatch(f"symbol has n={sym.n}, points have {x.shape[-1]}, {xi.shape[-1]}")
    lead = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
    x = np.broadcast_to(x, lead + (sym.n,))
    xi = np.broadcast_to(xi, lead + (sym.n,))
    value = sym.A1(x, xi)
    if value.shape[-2:] != (sym.m, sym.m):
        raise DimensionMismatch(f"principal symbol returned {value.shape[-2:]}, expected m={sym.m}")
    dx = (np.asarray(sym.principal_dx(x, xi), dtype=complex) if sym.principal_dx
          else _gradient(sym.A1, x, xi, "x", sym.fd_step))
    dxi = (np.asarray(sym.principal_dxi(x, xi), dtype=complex) if sym.principal_dxi
           else _gradient(sym.A1, x, xi, "xi", sym.fd_step))
    dx = np.broadcast_to(dx, lead + (sym.n, sym.m, sym.m))
    dxi = np.broadcast_to(dxi, lead + (sym.n, sym.m, sym.m))
    jet = SymbolJet(value, dx, dxi, lower=sym.A0(x, xi))
    if full_mixed:
        jet.dxdxi = _mixed_full(sym, x, xi)
        jet.mixed_trace = np.einsum("...aaij->...ij", jet.dxdxi)
    elif mixed:
        if sym.principal_mixed is not None:
            jet.mixed_trace = np.broadcast_to(
                np.asarray(sym.principal_mixed(x, xi), dtype=complex), lead + (sym.m, sym.m))
        else:
            jet.mixed_trace = np.einsum("...aaij->...ij", _mixed_full(sym, x, xi))
    return jet


def _mixed_full(sym, x, xi):
    """d2A1 / dx^a dxi_b, shape (..., n, n, m, m)."""
    n = sym.n
    rel = 10.0 * sym.fd_step
    if sym.principal_dx is not None:
        def dxa(a):
            return lambda xx, kk: np.asarray(sym.principal_dx(xx, kk))[..., a, :, :]
    else:
        hx = _steps(x, rel, False)

        def dxa(a):
            return lambda xx, kk: _partial(sym.A1, xx, kk, "x", a, hx)
    hxi = _steps(xi, rel, True)
    rows = []
    for a in range(n):
        f = dxa(a)
        rows.append(np.stack([_partial(f, x, xi, "xi", b, hxi) for b in range(n)], axis=-3))
    return np.stack(rows, axis=-4)


def symbol_jet(sym: SymbolPair, pt: CotangentPoint, full_mixed=False) -> SymbolJet:
    return evaluate_jet(sym, pt.x, pt.xi, mixed=True, full_mixed=full_mixed)


# ---------------------------------------------------------------- eigenpairs
def _check_hermitian(a, what):
    defect = np.abs(a - dagger(a)).max(initial=0.0)
    scale = 1.0 + np.abs(a).max(initial=0.0)
    if defect > HERMITIAN_TOL * scale:
        raise NotHermitian(f"{what} has anti-Hermitian part {defect:.3g}")


def _gauge_fix(vectors):
    """Make the largest-modulus component of each column real positive."""
    mod = np.abs(vectors)
    top = mod.max(axis=-2, keepdims=True)
    # ties (within roundoff) resolve to the lowest component index
    pick = np.argmax(mod >= top * (1 - 1e-12), axis=-2)
    comp = np.take_along_axis(vectors, pick[..., None, :], axis=-2)
    return vectors * (np.conj(comp) / np.abs(comp))


def batched_eigensystem(A, check=True):
    """Ascending eigenvalues and gauge-fixed eigenvectors of a batch of Hermitian matrices."""
    if check:
        _check_hermitian(A, "principal symbol")
    h, V = np.linalg.eigh(A)
    radius = np.abs(h).max(axis=-1)
    if check:
        if np.any(radius == 0) or np.any(np.abs(h) <= ZERO_TOL * radius[..., None]):
            raise EllipticityViolated("principal symbol has a zero eigenvalue")
        gaps = np.diff(h, axis=-1)
        if gaps.size and np.any(gaps < GAP_TOL * radius[..., None]):
            raise DegenerateEigenvalue(f"eigenvalue gap {gaps.min():.3g} below {GAP_TOL:g} x spectral radius")
    return h, _gauge_fix(V)


def principal_eigensystem(sym: SymbolPair, pt: CotangentPoint) -> EigenSystem:
    A = sym.A1(pt.x, pt.xi)
    h, V = batched_eigensystem(A)
    m_minus = int(np.sum(h < 0))
    return EigenSystem(h, V, sym.m - m_minus, m_minus)


def signed_position(h, j):
    """Column index of signed eigen-index ``j`` given ascending eigenvalues ``h`` (1-D)."""
    m_minus = int(np.sum(np.asarray(h) < 0))
    m_plus = len(h) - m_minus
    if 0 < j <= m_plus:
        return m_minus + j - 1
    if 0 < -j <= m_minus:
        return m_minus + j
    raise IndexError(f"signed index {j} not available (m-={m_minus}, m+={m_plus})")


class SpectralJet:
    """Eigen-data of the principal symbol with exact first derivatives of projectors.

    All matrices are kept in the eigenbasis at each point, where the projector
    onto eigenvalue ``l`` is the coordinate projector ``E_ll``.
    """

    def __init__(self, jet: SymbolJet, check=True):
        self.jet = jet
        self.h, self.V = batched_eigensystem(jet.value, check=check)
        Vh = dagger(self.V)
        self.Ax = Vh[..., None, :, :] @ jet.dx @ self.V[..., None, :, :]
        self.Axi = Vh[..., None, :, :] @ jet.dxi @ self.V[..., None, :, :]
        m = self.h.shape[-1]
        self.m = m
        diff = self.h[..., None, :] - self.h[..., :, None]  # [l, j] = h_j - h_l
        off = ~np.eye(m, dtype=bool)
        inv = np.zeros_like(diff)
        np.divide(1.0, diff, out=inv, where=off)
        self.inv_gap = inv
        self.dPx = self._projector_derivative(self.Ax)
        self.dPxi = self._projector_derivative(self.Axi)

    def _projector_derivative(self, dA):
        """dP_j in the eigenbasis, shape (..., m_j, n, m, m)."""
        G = dA * self.inv_gap[..., None, :, :]
        m = self.m
        out = np.zeros(G.shape[:-3] + (m,) + G.shape[-3:], dtype=complex)
        for j in range(m):
            out[..., j, :, :, j] = G[..., :, :, j]
            out[..., j, :, j, :] = -G[..., :, j, :]
        return out

    def to_original(self, M):
        return self.V @ M @ dagger(self.V)

    def sub_to_eigenbasis(self, A_sub):
        return dagger(self.V) @ A_sub @ self.V

    def bracket_PP(self):
        """{P_j, P_j} for every j, shape (..., m, m, m)."""
        x, k = self.dPx, self.dPxi
        return np.einsum("...jaik,...jakl->...jil", x, k) - np.einsum("...jaik,...jakl->...jil", k, x)

    def curvature(self):
        """-i tr(P_j {P_j, P_j}) for every column j (complex; real up to roundoff)."""
        pp = self.bracket_PP()
        diag = np.einsum("...jjj->...j", pp)
        return -1j * diag

    def frozen_bracket(self):
        """tr(P_x (A1 - h_j) P_xi - P_xi (A1 - h_j) P_x) for every column j."""
        m = self.m
        shift = self.h[..., None, :] - self.h[..., :, None]  # [j, l] = h_l - h_j
        D = np.einsum("...jl,lk->...jlk", shift, np.eye(m))
        x, k = self.dPx, self.dPxi
        t1 = np.einsum("...jaik,...jkl,...jali->...j", x, D, k)
        t2 = np.einsum("...jaik,...jkl,...jali->...j", k, D, x)
        return t1 - t2

    def h_dx(self):
        return np.real(np.einsum("...ajj->...ja", self.Ax))

    def h_dxi(self):
        return np.real(np.einsum("...ajj->...ja", self.Axi))


def spectral_jet(sym: SymbolPair, x, xi, mixed=True, check=True):
    return SpectralJet(evaluate_jet(sym, x, xi, mixed=mixed), check=check)


# ---------------------------------------------------------------- brackets
def poisson_bracket(P_field, R_field, pt: CotangentPoint, fd_step=1e-4):
    """{P, R} = P_x R_xi - P_xi R_x for callables of (x, xi)."""
    Px = _gradient(P_field, pt.x, pt.xi, "x", fd_step)
    Pxi = _gradient(P_field, pt.x, pt.xi, "xi", fd_step)
    Rx = _gradient(R_field, pt.x, pt.xi, "x", fd_step)
    Rxi = _gradient(R_field, pt.x, pt.xi, "xi", fd_step)
    _require_compatible(Px, Rx)
    return sum(Px[a] @ Rxi[a] - Pxi[a] @ Rx[a] for a in range(pt.n))


def generalized_bracket(P_field, Q_field, R_field, pt: CotangentPoint, fd_step=1e-4):
    """{P, Q, R} = P_x Q R_xi - P_xi Q R_x with Q frozen at ``pt``."""
    Q = np.asarray(Q_field(pt.x, pt.xi))
    Px = _gradient(P_field, pt.x, pt.xi, "x", fd_step)
    Pxi = _gradient(P_field, pt.x, pt.xi, "xi", fd_step)
    Rx = _gradient(R_field, pt.x, pt.xi, "x", fd_step)
    Rxi = _gradient(R_field, pt.x, pt.xi, "xi", fd_step)
    _require_compatible(Px, Rx, Q)
    return sum(Px[a] @ Q @ Rxi[a] - Pxi[a] @ Q @ Rx[a] for a in range(pt.n))


def _require_compatible(Px, Rx, Q=None):
    left = Px.shape[-1]
    right = Rx.shape[1] if Rx.ndim > 1 else None
    if Q is not None:
        if Q.ndim != 2 or Q.shape[0] != left or (right is not None and Q.shape[1] != right):
            raise DimensionMismatch(f"incompatible shapes {Px.shape[1:]}, {Q.shape}, {Rx.shape[1:]}")
    elif right is not None and left != right:
        raise DimensionMismatch(f"incompatible shapes {Px.shape[1:]} and {Rx.shape[1:]}")


def subprincipal_from_jet(jet: SymbolJet, check=True):
    sub = jet.lower + 0.5j * jet.mixed_trace
    if check:
        _check_hermitian(sub, "subprincipal symbol")
    return sub


def subprincipal_symbol(sym: SymbolPair, pt: CotangentPoint):
    """A0 + (i/2) d2A1/dx^a dxi_a; rejects non-Hermitian results."""
    return subprincipal_from_jet(symbol_jet(sym, pt))


# ---------------------------------------------------------------- U(1) geometry
def aligned_eigenvector(sym: SymbolPair, j, center: CotangentPoint):
    """Eigenvector field near ``center`` in the phase-aligned local gauge."""
    h0, V0 = batched_eigensystem(sym.A1(center.x, center.xi))
    v0 = V0[:, signed_position(h0, j)]

    def field_(x, xi):
        h, V = batched_eigensystem(sym.A1(x, xi), check=False)
        pos = signed_position(h.reshape(-1, sym.m)[0], j)
        v = V[..., :, pos]
        overlap = np.einsum("i,...i->...", v0.conj(), v)
        return v * (np.conj(overlap) / np.abs(overlap))[..., None]

    return field_


def canonical_eigenvector(sym: SymbolPair, j):
    """Eigenvector field in the largest-component gauge."""

    def field_(x, xi):
        h, V = batched_eigensystem(sym.A1(x, xi), check=False)
        pos = signed_position(h.reshape(-1, sym.m)[0], j)
        return V[..., :, pos]

    return field_


def eigenvector_curvature(v_field, pt: CotangentPoint, fd_step=1e-4):
    """-i{v*, v} evaluated directly from an eigenvector field (gauge-dependent inputs)."""
    vx = _gradient(v_field, pt.x, pt.xi, "x", fd_step)
    vxi = _gradient(v_field, pt.x, pt.xi, "xi", fd_step)
    br = sum(vx[a].conj() @ vxi[a] - vxi[a].conj() @ vx[a] for a in range(pt.n))
    return -1j * br


def eigenvector_frozen_bracket(v_field, Q, pt: CotangentPoint, fd_step=1e-4):
    """{v*, Q, v} with Q a fixed matrix, evaluated from an eigenvector field."""
    vx = _gradient(v_field, pt.x, pt.xi, "x", fd_step)
    vxi = _gradient(v_field, pt.x, pt.xi, "xi", fd_step)
    return sum(vx[a].conj() @ Q @ vxi[a] - vxi[a].conj() @ Q @ vx[a] for a in range(pt.n))


def u1_curvature(sym: SymbolPair, j, pt: CotangentPoint) -> U1CurvatureData:
    sj = spectral_jet(sym, pt.x, pt.xi, mixed=False)
    pos = signed_position(sj.h, j)
    scalar = float(np.real(sj.curvature()[pos]))

    n = sym.n
    v = aligned_eigenvector(sym, j, pt)
    dv = np.concatenate([
        _gradient(v, pt.x, pt.xi, "x", sym.fd_step),
        _gradient(v, pt.x, pt.xi, "xi", sym.fd_step),
    ])
    gram = dv.conj() @ dv.T  # [a, b] = dv_a^* dv_b
    form = 2.0 * np.imag(gram)
    form = 0.5 * (form - form.T)

    w = canonical_eigenvector(sym, j)
    w0 = w(pt.x, pt.xi)
    dw = np.concatenate([
        _gradient(w, pt.x, pt.xi, "x", sym.fd_step),
        _gradient(w, pt.x, pt.xi, "xi", sym.fd_step),
    ])
    potential = np.real(1j * (dw @ w0.conj()))
    return U1CurvatureData(scalar, form, potential[: 2 * n])


def propagator_zero_subprincipal(sym: SymbolPair, j, pt: CotangentPoint):
    """Subprincipal symbol of the propagator component at t = 0."""
    jet = symbol_jet(sym, pt)
    sj = SpectralJet(jet)
    sub = sj.sub_to_eigenbasis(subprincipal_from_jet(jet))
    pos = signed_position(sj.h, j)
    return sj.to_original(_zero_sub_eigenbasis(sj, sub, pos))


def _zero_sub_eigenbasis(sj: SpectralJet, sub, pos):
    m = sj.m
    eye = np.eye(m)
    hx, hxi = sj.h_dx(), sj.h_dxi()

    def b(l):
        ax = sj.Ax + hx[l][:, None, None] * eye
        axi = sj.Axi + hxi[l][:, None, None] * eye
        br = np.einsum("aik,akl->il", ax, sj.dPxi[l]) - np.einsum("aik,akl->il", axi, sj.dPx[l])
        P = np.diag(eye[l])
        return 2.0 * sub @ P + 1j * br

    Bj = b(pos)
    total = np.zeros((m, m), dtype=complex)
    for l in range(m):
        if l == pos:
            continue
        Pl = np.diag(eye[l])
        Pj = np.diag(eye[pos])
        total += (Pl @ Bj + Pj @ b(l)) / (sj.h[pos] - sj.h[l])
    return 0.5 * total


# ---------------------------------------------------------------- unitary change
def transform_operator_unitary(sym: SymbolPair, R: Callable, R_dx: Optional[Callable] = None,
                               check_points=None):
    """Symbol of ``R A R*`` for a smooth unitary-valued ``R(x)``.

    The lower-order symbol becomes ``R A0 R* - i R (A1)_xi_a (R*)_x^a``, which
    reproduces ``A_sub -> R A_sub R* + (i/2)(R_x A1_xi R* - R A1_xi R*_x)``.
    """
    if check_points is None:
        check_points = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(16, sym.n))
    Rs = np.asarray(R(check_points), dtype=complex)
    if Rs.shape[-2:] != (sym.m, sym.m):
        raise DimensionMismatch("R must be m x m")
    defect = np.abs(Rs @ dagger(Rs) - np.eye(sym.m)).max()
    if defect > 1e-10:
        raise NotUnitary(f"R R* differs from I by {defect:.3g}")

    def dR(x):
        if R_dx is not None:
            return np.asarray(R_dx(x), dtype=complex)
        return _gradient(lambda xx, kk: np.asarray(R(xx), dtype=complex), x,
                         np.ones_like(np.asarray(x, dtype=float)), "x", sym.fd_step)

    def parts(x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        lead = np.broadcast_shapes(x.shape[:-1], xi.shape[:-1])
        x = np.broadcast_to(x, lead + (sym.n,))
        xi = np.broadcast_to(xi, lead + (sym.n,))
        return x, xi, np.asarray(R(x), dtype=complex), dR(x)

    def principal(x, xi):
        x, xi, r, _ = parts(x, xi)
        return r @ sym.A1(x, xi) @ dagger(r)

    def lower(x, xi):
        x, xi, r, rx = parts(x, xi)
        jet = evaluate_jet(sym, x, xi, mixed=False)
        corr = np.einsum("...ij,...ajk,...alk->...il", r, jet.dxi, rx.conj())
        return r @ jet.lower @ dagger(r) - 1j * corr

    def dxi(x, xi):
        x, xi, r, _ = parts(x, xi)
        jet = evaluate_jet(sym, x, xi, mixed=False)
        return r[..., None, :, :] @ jet.dxi @ dagger(r)[..., None, :, :]

    def dx(x, xi):
        x, xi, r, rx = parts(x, xi)
        jet = evaluate_jet(sym, x, xi, mixed=False)
        rh = dagger(r)[..., None, :, :]
        rr = r[..., None, :, :]
        A = jet.value[..., None, :, :]
        return rx @ A @ rh + rr @ jet.dx @ rh + rr @ A @ dagger(rx)

    def mixed(x, xi):
        x, xi, r, rx = parts(x, xi)
        jet = evaluate_jet(sym, x, xi, mixed=True)
        rh = dagger(r)
        t1 = np.einsum("...aij,...ajk,...kl->...il", rx, jet.dxi, rh)
        t3 = np.einsum("...ij,...ajk,...alk->...il", r, jet.dxi, rx.conj())
        return t1 + r @ jet.mixed_trace @ rh + t3

    return SymbolPair(sym.n, sym.m, principal, lower, dx, dxi, mixed, sym.fd_step,
                      sym.metric_up, label=f"R({sym.label})R*")


def with_subprincipal(sym: SymbolPair, sub: Callable) -> SymbolPair:
    """Copy of ``sym`` whose lower-order part makes the subprincipal symbol equal ``sub(x, xi)``."""
    bare = SymbolPair(sym.n, sym.m, sym.principal, None, sym.principal_dx, sym.principal_dxi,
                      sym.principal_mixed, sym.fd_step, sym.metric_up, sym.label)

    def lower(x, xi):
        jet = evaluate_jet(bare, x, xi, mixed=True)
        return np.asarray(sub(x, xi), dtype=complex) - 0.5j * jet.mixed_trace

    return SymbolPair(sym.n, sym.m, sym.principal, lower, sym.principal_dx, sym.principal_dxi,
                      sym.principal_mixed, sym.fd_step, sym.metric_up, sym.label)


def differential_symbol(coeffs, zero_order=None, fd_step=1e-4, metric_up=None, label=""):
    """Symbol of ``sum_a C_a(x) (-i d/dx^a) + Z(x)``.

    ``coeffs`` is a field with values of shape ``(n, m, m)`` supporting
    ``__call__`` and ``grad``; ``zero_order`` is any pointwise field.  All
    principal-symbol derivatives are analytic.
    """
    n, m = coeffs.shape[0], coeffs.shape[1]

    def principal(x, xi):
        return np.einsum("...a,...aij->...ij", xi, coeffs(x))

    def dx(x, xi):
        return np.einsum("...a,...maij->...mij", xi, coeffs.grad(x))

    def dxi(x, xi):
        return coeffs(x)

    def mixed(x, xi):
        return np.einsum("...aaij->...ij", coeffs.grad(x))

    lower = None if zero_order is None else (lambda x, xi: zero_order(x))
    return SymbolPair(n, m, principal, lower, dx, dxi, mixed, fd_step, metric_up, label)


# ---------------------------------------------------------------- identity checks
@dataclass
class TraceIdentityCheck:
    traces: dict  # j -> tr [U_j(0)]_sub
    curvatures: dict  # j -> -i{v_j^*, v_j} from an eigenvector field
    residual: float
    sum_rule: float


def trace_identity_check(sym: SymbolPair, pt: CotangentPoint) -> TraceIdentityCheck:
    """Compare ``tr [U_j(0)]_sub`` with ``-i{v_j^*, v_j}`` and sum the latter over all j.

    The curvature side differentiates the eigenvector field itself, so it is
    independent of the projector algebra used for the propagator side.
    """
    es = principal_eigensystem(sym, pt)
    traces, curvs = {}, {}
    for j in es.indices:
        traces[j] = complex(np.trace(propagator_zero_subprincipal(sym, j, pt)))
        curvs[j] = complex(eigenvector_curvature(aligned_eigenvector(sym, j, pt), pt, sym.fd_step))
    residual = max(abs(traces[j] - curvs[j]) for j in es.indices)
    return TraceIdentityCheck(traces, curvs, float(residual), float(abs(sum(curvs.values()))))


def random_symbol(rng, m, max_harmonic=1, scale=0.5, n_terms=4, isotropic=1.0):
    """Random Hermitian trig-poly symbol ``sum_a H_a(x) xi_a + |xi| H_0(x)`` with Hermitian subprincipal part."""
    from .trigpoly import random_trig_poly

    def herm():
        f = random_trig_poly(rng, (m, m), max_harmonic, scale, n_terms=n_terms)
        return 0.5 * (f + f.adjoint())

    H = [herm() for _ in range(4)]
    G = herm()

    def principal(x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        out = sum(H[a](x) * xi[..., a, None, None] for a in range(3))
        return out + isotropic * np.linalg.norm(xi, axis=-1)[..., None, None] * H[3](x)

    bare = SymbolPair(3, m, principal, label=f"random m={m}")
    return with_subprincipal(bare, lambda x, xi: G(np.asarray(x, dtype=float)))
