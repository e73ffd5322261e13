"""Weyl densities a(x), b(x) and their integrals over the torus.

Every integrand over ``{h < 1}`` is homogeneous of degree 0 in ``xi``, so the
ball integral reduces to a sphere average:

    int_{h(x, xi) < 1} F dxi = (1/n) sum_k w_k h(x, w_k)^{-n} F(x, w_k)

for a rule ``(w_k, w_k)`` on the Euclidean unit sphere.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gamma

import numpy as np

from .errors import DimensionMismatch, EllipticityViolated, SpectralSysError
from .symbols import SpectralJet, SymbolPair, evaluate_jet, subprincipal_from_jet
from .trigpoly import torus_grid

DEFAULT_ORDER = (32, 64)


class DensityMismatch(SpectralSysError, ArithmeticError):
    """Quadrature and closed-form densities disagree."""


def sphere_rule(n, order=DEFAULT_ORDER):
    """Nodes and weights on the unit sphere in R^n (n = 2 or 3)."""
    polar, azimuthal = order
    if n == 2:
        phi = 2 * np.pi * np.arange(azimuthal) / azimuthal
        return np.stack([np.cos(phi), np.sin(phi)], -1), np.full(azimuthal, 2 * np.pi / azimuthal)
    if n == 3:
        t, wt = np.polynomial.legendre.leggauss(polar)
        phi = 2 * np.pi * (np.arange(azimuthal) + 0.5) / azimuthal
        st = np.sqrt(1 - t**2)
        nodes = np.stack([
            np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(t, np.ones_like(phi))
        ], -1).reshape(-1, 3)
        weights = np.outer(wt, np.full(azimuthal, 2 * np.pi / azimuthal)).ravel()
        return nodes, weights
    raise DimensionMismatch(f"sphere rules are provided for n = 2, 3 only (got {n})")


def unit_ball_volume(n):
    return np.pi ** (n / 2) / gamma(n / 2 + 1)


@dataclass
class CosphereRule:
    nodes: np.ndarray
    weights: np.ndarray
    scales: np.ndarray

    @property
    def n(self):
        return self.nodes.shape[-1]

    def integrate(self, values):
        """``int_{h<1} F dxi / (2 pi)^n`` for degree-0 ``F`` sampled at the nodes."""
        values = np.asarray(values)
        return (2 * np.pi) ** (-self.n) / self.n * np.sum(self.weights * self.scales**self.n * values)


@dataclass
class AsymptoticDensities:
    a_x: float
    b_x: float
    a_per_j: dict = field(default_factory=dict)
    b_per_j: dict = field(default_factory=dict)
    b_imag: float = 0.0


@dataclass
class GlobalCoefficients:
    a: float
    b: float
    method: str = "quadrature"
    grid: tuple = ()


def _positive_columns(h):
    m_minus = np.sum(h < 0, axis=-1)
    if np.any(m_minus != m_minus.flat[0]):
        raise EllipticityViolated("number of positive eigenvalues varies over the cosphere")
    m_minus = int(m_minus.flat[0])
    return list(range(m_minus, h.shape[-1]))


def cosphere_quadrature(sym: SymbolPair, x, j=1, order=DEFAULT_ORDER) -> CosphereRule:
    if j <= 0:
        raise ValueError("only positive eigenvalue indices enter the Weyl densities")
    nodes, weights = sphere_rule(sym.n, order)
    h = np.linalg.eigvalsh(sym.A1(np.broadcast_to(np.asarray(x, float), nodes.shape), nodes))
    cols = _positive_columns(h)
    if j > len(cols):
        raise IndexError(f"only {len(cols)} positive eigenvalues")
    hj = h[:, cols[j - 1]]
    if np.any(hj <= 0):
        raise EllipticityViolated("non-positive eigenvalue on the cosphere")
    return CosphereRule(nodes, weights, 1.0 / hj)


def densities(sym: SymbolPair, x, order=DEFAULT_ORDER, need_b=True) -> AsymptoticDensities:
    nodes, weights = sphere_rule(sym.n, order)
    n = sym.n
    xs = np.broadcast_to(np.asarray(x, dtype=float), nodes.shape)
    if need_b:
        jet = evaluate_jet(sym, xs, nodes, mixed=True)
        sj = SpectralJet(jet)
        sub = sj.sub_to_eigenbasis(subprincipal_from_jet(jet))
        curv = sj.curvature()
        gb = sj.frozen_bracket()
        h = sj.h
    else:
        from .symbols import batched_eigensystem

        h, _ = batched_eigensystem(sym.A1(xs, nodes))
    cols = _positive_columns(h)
    pref = (2 * np.pi) ** (-n) / n
    out = AsymptoticDensities(0.0, 0.0)
    b_imag = 0.0
    for jj, col in enumerate(cols, start=1):
        s = 1.0 / h[:, col]
        wn = weights * s**n
        a_j = pref * np.sum(wn)
        out.a_per_j[jj] = float(a_j)
        out.a_x += float(a_j)
        if need_b:
            vv = 1j * curv[:, col]  # tr(P{P,P}) = {v*, v}
            integrand = sub[:, col, col] - 0.5j * gb[:, col] + (1j / (n - 1)) * h[:, col] * vv
            b_j = -n * pref * np.sum(wn * integrand)
            out.b_per_j[jj] = float(np.real(b_j))
            out.b_x += float(np.real(b_j))
            b_imag = max(b_imag, abs(np.imag(b_j)))
    out.b_imag = b_imag
    if sym.metric_up is not None and sym.m == 2 and n == 3:
        g = np.asarray(sym.metric_up(np.asarray(x, dtype=float)))
        ref = (2 * np.pi) ** (-n) * unit_ball_volume(n) / np.sqrt(np.linalg.det(g))
        if abs(ref - out.a_x) > 1e-10 * max(1.0, abs(ref)):
            raise DensityMismatch(f"a(x) quadrature {out.a_x!r} vs metric value {ref!r}")
    return out


def a_density(sym: SymbolPair, x, order=DEFAULT_ORDER) -> float:
    return densities(sym, x, order, need_b=False).a_x


def b_density(sym: SymbolPair, x, order=DEFAULT_ORDER) -> float:
    return densities(sym, x, order).b_x


def b_density_closed(bundle, A0, x):
    """Closed-form b(x) for a 2x2 differential operator with principal symbol from ``bundle``.

    ``A0`` is the zero-order coefficient (constant matrix or pointwise field).
    """
    from .frames import teleparallel_tensors

    x = np.asarray(x, dtype=float)
    sigma = bundle.sigma_field()
    zero = A0(x) if callable(A0) else np.broadcast_to(np.asarray(A0, dtype=complex), x.shape[:-1] + (2, 2))
    tr_sub = np.real(np.trace(zero, axis1=-2, axis2=-1)
                     + 0.5j * np.einsum("...aaii->...", sigma.grad(x)))
    tr_star = teleparallel_tensors(bundle).trace_starT(x)
    return (bundle.c * tr_star - 2 * tr_sub) * bundle.sqrt_det_g(x) / (8 * np.pi**2)


def a_density_closed(bundle, x):
    return bundle.sqrt_det_g(np.asarray(x, dtype=float)) / (6 * np.pi**2)


def density_grid(op, n_grid):
    """Grid over the coordinates the operator depends on, plus the cell volume."""
    axes = op.dependent_axes()
    sizes = [n_grid if a in axes else 1 for a in range(op.n)]
    pts = torus_grid(sizes, op.periods).reshape(-1, op.n)
    cell = float(np.prod(op.periods) / np.prod(sizes))
    return pts, cell, sizes


def density_table(op, n_grid=8, order=DEFAULT_ORDER, method="quadrature", workers=1):
    """Arrays ``(points, a, b, cell)`` of densities on the operator's grid."""
    from .dirac import to_half_density

    op = to_half_density(op)
    pts, cell, _ = density_grid(op, n_grid)
    if method == "closed":
        from .frames import frame_from_symbol

        bundle = frame_from_symbol(op.derivative_coeffs)
        return pts, a_density_closed(bundle, pts), b_density_closed(bundle, op.zero_order, pts), cell
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    sym = op.symbol()

    def one(p):
        d = densities(sym, p, order)
        return d.a_x, d.b_x

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(one, pts))
    else:
        values = [one(p) for p in pts]
    values = np.array(values, dtype=float).reshape(len(pts), 2)
    return pts, values[:, 0], values[:, 1], cell


def global_coefficients(op, n_grid=8, order=DEFAULT_ORDER, method="quadrature", workers=1):
    """``a = int a(x) dx`` and ``b = int b(x) dx`` by the trapezoidal rule."""
    pts, a, b, cell = density_table(op, n_grid, order, method, workers)
    return GlobalCoefficients(float(np.sum(a) * cell), float(np.sum(b) * cell), method,
                              tuple(density_grid(op, n_grid)[2]))
