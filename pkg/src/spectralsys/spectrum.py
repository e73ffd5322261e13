"""Spectra of first-order operators on the 3-torus.

Two routes are provided: an exact Fourier-Galerkin projection of an
:class:`~spectralsys.dirac.OperatorSpec`, and closed-form per-mode oracles for
the constant-coefficient and rotating-frame families.  Counting statistics
(plain and mollified) and two-term fits operate on either.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicSpline

from .errors import (
    ConvergenceFailure,
    NotHermitian,
    OutsideTrustWindow,
    TruncationTooSmall,
    UnsupportedFamily,
)
from .dirac import to_half_density
from .frames import PAULI, k3_frame
from .trigpoly import TrigPolyField, as_trigpoly

DENSE_CAP = 4


# ------------------------------------------------------------------ Galerkin
@dataclass
class GalerkinBlock:
    modes: np.ndarray  # (N, 3) integer wave vectors
    matrix: np.ndarray  # (N m, N m); row = mode_index * m + component


@dataclass
class GalerkinSystem:
    K: int
    m: int
    periods: np.ndarray
    path: str
    blocks: list

    @property
    def dimension(self):
        return sum(b.matrix.shape[0] for b in self.blocks)

    @property
    def trust_window(self):
        return 0.5 * self.K * float(np.min(2 * np.pi / self.periods))

    def dense(self):
        """Assemble the full matrix over all modes (for small systems and tests)."""
        modes = np.concatenate([b.modes for b in self.blocks])
        order = np.lexsort(modes.T[::-1])
        dim = len(modes) * self.m
        M = np.zeros((dim, dim), dtype=complex)
        offset = 0
        starts = []
        for b in self.blocks:
            s = b.matrix.shape[0]
            M[offset:offset + s, offset:offset + s] = b.matrix
            starts.append(offset)
            offset += s
        return M, modes, order


class _CoefficientTable:
    """Lookup of Fourier coefficients by integer wave-vector difference."""

    def __init__(self, fields):
        waves = np.concatenate([f.waves for f in fields]) if fields else np.zeros((0, 3), int)
        self.offset = int(np.abs(waves).max(initial=0)) + 1
        self.base = 2 * self.offset + 1
        keys = {}
        for f in fields:
            for w in f.waves:
                keys.setdefault(self._key(w[None])[0], None)
        self.keys = np.array(sorted(keys), dtype=np.int64)
        self.values = []
        for f in fields:
            table = np.zeros((len(self.keys) + 1,) + f.shape, dtype=complex)
            if len(f.waves):
                idx = np.searchsorted(self.keys, self._key(f.waves))
                table[idx] = f.coeffs
            self.values.append(table)

    def _key(self, w):
        w = np.asarray(w) + self.offset
        return (w[..., 0] * self.base + w[..., 1]) * self.base + w[..., 2]

    def lookup(self, diff):
        """Index into the value tables for integer differences (last axis 3)."""
        inside = np.all(np.abs(diff) < self.offset, axis=-1)
        keys = self._key(np.where(inside[..., None], diff, 0))
        idx = np.searchsorted(self.keys, keys)
        idx = np.minimum(idx, len(self.keys) - 1) if len(self.keys) else np.zeros_like(idx)
        hit = inside & (self.keys[idx] == keys) if len(self.keys) else np.zeros_like(inside)
        return np.where(hit, idx, len(self.keys))


def assemble_galerkin(op, K: int, dense_cap: int = DENSE_CAP) -> GalerkinSystem:
    """Project ``op`` onto Fourier modes with ``|k|_inf <= K``."""
    if K < 1:
        raise TruncationTooSmall("K must be at least 1")
    op = to_half_density(op)
    coeffs = op.derivative_coeffs
    if K < coeffs.max_harmonic():
        raise TruncationTooSmall(f"K={K} below coefficient harmonic {coeffs.max_harmonic()}")
    zero = op.zero_order
    if isinstance(zero, TrigPolyField) and K < zero.max_harmonic():
        raise TruncationTooSmall(f"K={K} below zero-order harmonic {zero.max_harmonic()}")
    zero_tp = as_trigpoly(zero, max_harmonic=2 * K)
    m = op.m
    axes = sorted(op.dependent_axes())
    rng = np.arange(-K, K + 1)
    if not axes:
        path = "constant"
        grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)
        groups = [grid[i:i + 1] for i in range(len(grid))]
    elif len(axes) == 1:
        path = "axis"
        a = axes[0]
        others = [b for b in range(3) if b != a]
        trans = np.stack(np.meshgrid(rng, rng, indexing="ij"), -1).reshape(-1, 2)
        groups = []
        for t in trans:
            modes = np.zeros((len(rng), 3), dtype=np.int64)
            modes[:, a] = rng
            modes[:, others[0]] = t[0]
            modes[:, others[1]] = t[1]
            groups.append(modes)
    else:
        if K > dense_cap:
            raise TruncationTooSmall(
                f"fully coupled coefficients use the dense path, capped at K={dense_cap} (got {K})")
        path = "dense"
        groups = [np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)]

    table = _CoefficientTable([coeffs, zero_tp])
    C_tab, Z_tab = table.values
    wavescale = 2 * np.pi / op.periods
    blocks = []
    for modes in groups:
        diff = modes[:, None, :] - modes[None, :, :]
        idx = table.lookup(diff)
        xi = modes * wavescale  # column momenta
        block = np.einsum("rcaij,ca->rcij", C_tab[idx], xi) + Z_tab[idx]
        N = len(modes)
        mat = block.transpose(0, 2, 1, 3).reshape(N * m, N * m)
        blocks.append(GalerkinBlock(modes, mat))
    system = GalerkinSystem(K, m, np.asarray(op.periods, dtype=float), path, blocks)
    for b in blocks:
        defect = np.abs(b.matrix - b.matrix.conj().T).max(initial=0.0)
        if defect > 1e-12 * max(1.0, np.abs(b.matrix).max(initial=0.0)):
            raise NotHermitian(f"Galerkin matrix is not Hermitian (defect {defect:.3g})")
    return system


# ------------------------------------------------------------------ spectral data
@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    trust_window: float
    K: Optional[int] = None
    block_index: Optional[np.ndarray] = None
    column_index: Optional[np.ndarray] = None
    vectors: Optional[list] = None  # per block (size, size)
    modes: Optional[list] = None  # per block (N, 3)
    m: int = 2
    periods: np.ndarray = field(default_factory=lambda: np.full(3, 2 * np.pi))
    source: str = ""

    @property
    def signed_indices(self):
        """Positive eigenvalues get 1, 2, ...; non-positive ones 0, -1, -2, ... downward."""
        lam = self.eigenvalues
        n_nonpos = int(np.sum(lam <= 0))
        out = np.empty(len(lam), dtype=np.int64)
        out[:n_nonpos] = np.arange(-(n_nonpos - 1), 1)
        out[n_nonpos:] = np.arange(1, len(lam) - n_nonpos + 1)
        return out

    def positive(self):
        lam = self.eigenvalues
        return lam[lam > 0]

    def window(self, limit=None):
        limit = self.trust_window if limit is None else limit
        lam = self.eigenvalues
        return lam[np.abs(lam) < limit]


def hermitian_eigensolve(system, keep_vectors=True, residual_tol=1e-8, ortho_tol=1e-10) -> SpectralData:
    """Diagonalize every block (or a single Hermitian matrix) and merge the spectra."""
    if isinstance(system, np.ndarray):
        M = np.asarray(system, dtype=complex)
        system = GalerkinSystem(0, 1, np.full(3, 2 * np.pi), "matrix",
                                [GalerkinBlock(np.zeros((M.shape[0], 3), int), M)])
        trust = np.inf
    else:
        trust = system.trust_window
    values, vectors, bidx, cidx = [], [], [], []
    sizes = sorted({b.matrix.shape[0] for b in system.blocks})
    by_size = {s: [i for i, b in enumerate(system.blocks) if b.matrix.shape[0] == s] for s in sizes}
    per_block = [None] * len(system.blocks)
    for s, ids in by_size.items():
        stackM = np.stack([system.blocks[i].matrix for i in ids])
        try:
            lam, vec = np.linalg.eigh(stackM)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(str(exc)) from exc
        resid = np.linalg.norm(stackM @ vec - vec * lam[:, None, :], axis=1)
        norms = np.linalg.norm(stackM, ord=2, axis=(1, 2)) if s <= 64 else np.abs(stackM).sum(axis=2).max(axis=1)
        if np.any(resid > residual_tol * np.maximum(norms, 1e-300)[:, None]):
            raise ConvergenceFailure("eigenpair residual above tolerance")
        gram = np.conj(np.swapaxes(vec, 1, 2)) @ vec
        if np.abs(gram - np.eye(s)).max() > ortho_tol:
            raise ConvergenceFailure("eigenvectors are not orthonormal")
        for k, i in enumerate(ids):
            per_block[i] = (lam[k], vec[k])
    for i, (lam, vec) in enumerate(per_block):
        values.append(lam)
        bidx.append(np.full(len(lam), i))
        cidx.append(np.arange(len(lam)))
        vectors.append(vec if keep_vectors else None)
    values = np.concatenate(values)
    bidx = np.concatenate(bidx)
    cidx = np.concatenate(cidx)
    order = np.lexsort((cidx, bidx, values))
    return SpectralData(
        values[order], trust, getattr(system, "K", None), bidx[order], cidx[order],
        vectors if keep_vectors else None, [b.modes for b in system.blocks], system.m,
        np.asarray(system.periods, dtype=float), f"galerkin/{system.path}",
    )


def _check_window(data, lam, extra=0.0):
    if np.max(np.abs(np.atleast_1d(lam))) + extra > data.trust_window:
        warnings.warn(
            f"query at lambda={np.max(lam):.6g} (+{extra:.3g}) beyond trust window {data.trust_window:.6g}",
            OutsideTrustWindow, stacklevel=3)


def counting_function(data: SpectralData, lam):
    """``#{k : 0 < lambda_k < lam}``."""
    _check_window(data, lam)
    pos = np.sort(data.positive())
    out = np.searchsorted(pos, np.asarray(lam, dtype=float), side="left")
    return out if np.ndim(out) else int(out)


def spectral_function(data: SpectralData, lam, x):
    """``e(lam, x, x) = sum_{0 < lambda_k < lam} |v_k(x)|^2`` at points ``x`` (..., 3)."""
    if data.vectors is None or any(v is None for v in data.vectors):
        raise ValueError("spectral function needs eigenvectors (solve with keep_vectors=True)")
    _check_window(data, lam)
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 3)
    volume = float(np.prod(data.periods))
    total = np.zeros(len(pts))
    sel = (data.eigenvalues > 0) & (data.eigenvalues < lam)
    m = data.m
    for b in np.unique(data.block_index[sel]):
        cols = data.column_index[sel & (data.block_index == b)]
        modes = data.modes[b]
        vec = data.vectors[b][:, cols].reshape(len(modes), m, len(cols))
        phase = np.exp(1j * pts @ (modes * (2 * np.pi / data.periods)).T)  # (P, N)
        vals = np.einsum("pn,nck->pck", phase, vec)
        total += np.sum(np.abs(vals) ** 2, axis=(1, 2))
    return (total / volume).reshape(x.shape[:-1])


# ------------------------------------------------------------------ mollifier
@dataclass
class Mollifier:
    """Smoothing kernel with Fourier transform supported in (-T, T).

    ``cdf(s)`` is the integral of the kernel from minus infinity to ``s``.
    """

    T: float
    s_grid: np.ndarray
    cdf_table: np.ndarray
    density_table: np.ndarray
    tail: float
    _spline: CubicSpline = field(repr=False, default=None)

    def rho_hat(self, t):
        return bump(np.asarray(t, dtype=float), self.T)

    def rho(self, lam):
        lam = np.abs(np.asarray(lam, dtype=float))
        out = np.interp(lam, self.s_grid, self.density_table, right=0.0)
        return out

    def cdf(self, s):
        s = np.asarray(s, dtype=float)
        a = np.abs(s)
        inner = np.where(a <= self.tail, self._spline(np.minimum(a, self.tail)), 1.0)
        return np.where(s >= 0, inner, 1.0 - inner)

    def total_mass(self):
        # trapezoid over the symmetric table; spectrally accurate for a smooth decaying kernel
        return float(2.0 * np.trapezoid(self.density_table, self.s_grid))


def bump(t, T):
    u = np.asarray(t, dtype=float) / T
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def make_mollifier(T=6.0, step=0.01, s_max=None, tail_tol=1e-9, epsabs=1e-15) -> Mollifier:
    """Tabulate the kernel and its cumulative integral by adaptive quadrature."""
    if not T > 0:
        raise ValueError("T must be positive")
    s_max = 40.0 * (6.0 / T) + 60.0 if s_max is None else s_max
    s = np.arange(0.0, s_max + step / 2, step)

    def cdf_integrand(t):
        return bump(t, T) * s * np.sinc(t * s / np.pi)

    def density_integrand(t):
        return bump(t, T) * np.cos(t * s)

    sine, _ = quad_vec(cdf_integrand, 0.0, T, epsabs=epsabs, epsrel=1e-13, limit=20000)
    cos, _ = quad_vec(density_integrand, 0.0, T, epsabs=epsabs, epsrel=1e-13, limit=20000)
    cdf = 0.5 + sine / np.pi
    dens = cos / np.pi
    beyond = np.abs(1.0 - cdf) > tail_tol
    last = np.nonzero(beyond)[0]
    tail_idx = (last[-1] + 1) if len(last) else 0
    if tail_idx >= len(s) - 1:
        raise ValueError("mollifier tail did not decay within the tabulated range; raise s_max")
    tail = float(s[tail_idx])
    spline = CubicSpline(s[: tail_idx + 4], cdf[: tail_idx + 4])
    return Mollifier(T, s, cdf, dens, tail, spline)


def mollified_counting(data: SpectralData, moll: Mollifier, lam):
    """``sum_{lambda_k > 0} P(lam - lambda_k)`` with ``P`` the kernel's cumulative integral."""
    lam = np.asarray(lam, dtype=float)
    _check_window(data, lam, moll.tail)
    pos = np.sort(data.positive())
    out = []
    for L in np.atleast_1d(lam):
        lo = np.searchsorted(pos, L - moll.tail, side="left")
        hi = np.searchsorted(pos, L + moll.tail, side="right")
        out.append(lo + np.sum(moll.cdf(L - pos[lo:hi])))
    out = np.array(out)
    return out if lam.ndim else float(out[0])


# ------------------------------------------------------------------ fits
@dataclass
class TwoTermFit:
    a: float
    b: float
    c: float
    covariance: np.ndarray
    lam: np.ndarray
    values: np.ndarray
    residual_rms: float

    def model(self, lam):
        lam = np.asarray(lam, dtype=float)
        return self.a * lam**3 + self.b * lam**2 + self.c * lam


def fit_two_term(data: SpectralData, moll: Mollifier, lam_lo, lam_hi, n_points=61) -> TwoTermFit:
    """Least-squares fit of ``a l^3 + b l^2 + c l`` to the mollified counting function."""
    lam = np.linspace(lam_lo, lam_hi, n_points)
    values = mollified_counting(data, moll, lam)
    X = np.stack([lam**3, lam**2, lam], axis=1)
    coef, *_ = np.linalg.lstsq(X, values, rcond=None)
    resid = values - X @ coef
    dof = max(1, n_points - 3)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return TwoTermFit(float(coef[0]), float(coef[1]), float(coef[2]), cov, lam, values,
                      float(np.sqrt(np.mean(resid**2))))


# ------------------------------------------------------------------ oracles
@dataclass
class TorusFamily:
    """``sign * W_k + P``: rotating-frame Dirac operator plus a constant potential.

    For ``k3 = 0`` this is ``sign * sigma.D + P`` with any Hermitian ``P``; for
    ``k3 != 0`` the potential must be diagonal so that modes stay paired.
    """

    k3: int = 0
    potential: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=complex))
    sign: int = 1

    def __post_init__(self):
        self.potential = np.asarray(self.potential, dtype=complex)
        if np.abs(self.potential - self.potential.conj().T).max() > 1e-12:
            raise UnsupportedFamily("oracle needs a Hermitian constant potential")
        if self.k3 != 0 and (abs(self.potential[0, 1]) > 0 or abs(self.potential[1, 0]) > 0):
            raise UnsupportedFamily("rotating frames admit only diagonal constant potentials")
        if self.sign not in (1, -1):
            raise UnsupportedFamily("sign must be +1 or -1")

    def negated(self):
        return TorusFamily(self.k3, -self.potential, -self.sign)


def family_of(op) -> TorusFamily:
    """Recognize an operator from the oracle families (unit torus only)."""
    op = to_half_density(op)
    if not np.allclose(op.periods, 2 * np.pi, rtol=0, atol=1e-14):
        raise UnsupportedFamily("oracles assume periods 2*pi")
    coeffs = op.derivative_coeffs
    if op.m != 2 or op.n != 3:
        raise UnsupportedFamily("oracles cover 2x2 operators on the 3-torus")
    for sign in (1, -1):
        pauli = TrigPolyField.constant(sign * PAULI, 3, op.periods)
        if coeffs.equals(pauli, 1e-14):
            if not op.zero_order.is_constant():
                raise UnsupportedFamily("zero-order term is not constant")
            return TorusFamily(0, np.asarray(op.zero_order(np.zeros(3))), sign)
        k = coeffs.max_harmonic()
        if k and coeffs.dependent_axes() == {2}:
            frame_sigma = k3_frame(k).sigma_field() * sign
            if coeffs.equals(frame_sigma, 1e-14):
                if op.potential is not None and not op.potential.is_constant():
                    raise UnsupportedFamily("potential is not constant")
                pot = np.zeros((2, 2), complex) if op.potential is None else op.potential(np.zeros(3))
                expected = sign * (-0.5 * k) * np.eye(2) + pot
                x = np.linspace(0, 2 * np.pi, 7)[:, None] * np.array([0.3, 0.7, 1.0])
                if np.abs(op.zero_order(x) - expected).max() > 1e-10:
                    raise UnsupportedFamily("zero-order term is not Dirac plus a constant")
                return TorusFamily(k, pot, sign)
    raise UnsupportedFamily("operator is not in a supported oracle family")


def lattice_oracle(family, lam_max: float) -> SpectralData:
    """All eigenvalues with ``|lambda| <= lam_max``, by exact 2x2 diagonalization per mode pair."""
    if not isinstance(family, TorusFamily):
        family = family_of(family)
    P = family.potential
    p0 = 0.5 * np.real(np.trace(P))
    pvec = np.real(np.array([np.trace(P @ PAULI[a]) for a in range(3)])) / 2
    shift = np.array([0.0, 0.0, -0.5 * family.k3])
    radius = int(np.ceil(lam_max + np.linalg.norm(pvec) + abs(p0) + abs(family.k3) / 2 + 1))
    r = np.arange(-radius, radius + 1)
    g1, g2 = np.meshgrid(r, r, indexing="ij")
    g1 = g1.ravel().astype(float)
    g2 = g2.ravel().astype(float)
    out = []
    for k3 in r:
        eta = np.stack([g1, g2, np.full_like(g1, k3)], -1) + shift
        vec = family.sign * eta + pvec
        rad = np.linalg.norm(vec, axis=-1)
        lam = np.concatenate([p0 + rad, p0 - rad])
        out.append(lam[np.abs(lam) <= lam_max])
    lam = np.sort(np.concatenate(out))
    return SpectralData(lam, float(lam_max), source=f"oracle/k3={family.k3}")


def pairing_gap(data: SpectralData, limit=None):
    """Largest gap inside consecutive pairs of the sorted spectrum (even multiplicity test)."""
    lam = np.sort(data.window(limit))
    if len(lam) % 2:
        lam = lam[:-1] if abs(lam[-1]) >= abs(lam[0]) else lam[1:]
    return float(np.max(lam[1::2] - lam[0::2], initial=0.0))


# ------------------------------------------------------------------ asymmetry
@dataclass
class AsymmetryReport:
    lam: np.ndarray
    counting_difference: np.ndarray
    fit_plus: TwoTermFit
    fit_minus: TwoTermFit
    a_relative_gap: float
    b_sum_relative: float
    symmetric: bool


def spectra_pair(op, lam_max, K=None, moll_tail=0.0, oracle=True):
    """Spectra of ``op`` and ``-op`` (oracle when available, else Galerkin)."""
    if oracle:
        fam = family_of(op) if not isinstance(op, TorusFamily) else op
        return lattice_oracle(fam, lam_max), lattice_oracle(fam.negated(), lam_max)
    sys_p = assemble_galerkin(op, K)
    sys_m = assemble_galerkin(-op, K)
    return hermitian_eigensolve(sys_p, False), hermitian_eigensolve(sys_m, False)


def asymmetry_report(op, mollifier: Optional[Mollifier] = None, lam_fit=(20.0, 35.0),
                     lam_grid=None, oracle=True, K=None, a_tol=0.01) -> AsymmetryReport:
    moll = make_mollifier(6.0) if mollifier is None else mollifier
    lam_max = lam_fit[1] + moll.tail + 1.0
    plus, minus = spectra_pair(op, lam_max, K, moll.tail, oracle)
    lam_grid = np.linspace(0.5, lam_fit[1], 70) if lam_grid is None else np.asarray(lam_grid)
    diff = counting_function(plus, lam_grid) - counting_function(minus, lam_grid)
    fp = fit_two_term(plus, moll, *lam_fit)
    fm = fit_two_term(minus, moll, *lam_fit)
    a_gap = abs(fp.a - fm.a) / abs(fp.a)
    b_sum = abs(fp.b + fm.b) / max(abs(fp.b), abs(fm.b), 1e-300)
    return AsymmetryReport(lam_grid, np.asarray(diff), fp, fm, a_gap, b_sum,
                           bool(np.all(diff == 0)))
