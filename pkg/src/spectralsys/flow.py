"""Hamiltonian trajectories of an eigenvalue branch and the propagator's principal symbol."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateEigenvalue
from .symbols import (
    SpectralJet,
    SymbolPair,
    evaluate_jet,
    signed_position,
    subprincipal_from_jet,
)

DEFAULT_DT = 0.01
PHASE_IMAG_TOL = 1e-6


@dataclass
class BranchValues:
    h: float
    velocity: np.ndarray  # h_xi
    force: np.ndarray  # -h_x
    vector: np.ndarray
    q: float = 0.0


def branch_values(sym: SymbolPair, j, x, xi, with_phase=True) -> BranchValues:
    """Energy, Hamiltonian vector field, eigenvector and the phase rate ``q`` at one point."""
    jet = evaluate_jet(sym, np.asarray(x, float), np.asarray(xi, float), mixed=with_phase)
    sj = SpectralJet(jet)
    pos = signed_position(sj.h, j)
    out = BranchValues(float(sj.h[pos]), sj.h_dxi()[pos], -sj.h_dx()[pos], sj.V[:, pos])
    if with_phase:
        sub = sj.sub_to_eigenbasis(subprincipal_from_jet(jet))
        q = sub[pos, pos] - 0.5j * sj.frozen_bracket()[pos]
        if abs(q.imag) > PHASE_IMAG_TOL * max(1.0, abs(q.real)):
            raise ValueError(f"phase rate has imaginary part {q.imag:.3g}")
        out.q = float(q.real)
    return out


@dataclass
class Trajectory:
    """Samples of ``(x, xi)``, the parallel-transported eigenvector ``w`` and ``int_0^t q``."""

    j: int
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    w: np.ndarray
    phase: np.ndarray
    h: np.ndarray

    def energy_drift(self):
        return float(np.max(np.abs(self.h - self.h[0])) / abs(self.h[0]))

    def propagator(self, index=-1):
        """``w(t) w(0)^* exp(-i int_0^t q)`` at sample ``index``."""
        return np.outer(self.w[index], self.w[0].conj()) * np.exp(-1j * self.phase[index])

    def rows(self):
        factor = np.exp(-1j * self.phase)
        return np.column_stack([self.t, self.x, self.xi, self.h, factor.real, factor.imag])


def integrate_trajectory(sym: SymbolPair, j, y, eta, t_end, steps=None, with_phase=True,
                         initial_vector=None) -> Trajectory:
    """Classical RK4 for ``x' = h_xi, xi' = -h_x`` with ``int q`` carried as a third component.

    The eigenvector is transported by projecting the previous one onto the new
    eigenline and renormalizing, a discrete form of ``w^* w' = 0``.
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    steps = max(1, int(np.ceil(abs(t_end) / DEFAULT_DT))) if steps is None else int(steps)
    dt = t_end / steps

    def rhs(x, xi):
        bv = branch_values(sym, j, x, xi, with_phase)
        return bv.velocity, bv.force, bv.q, bv

    n = len(y)
    xs = np.empty((steps + 1, n))
    xis = np.empty((steps + 1, n))
    ws = np.empty((steps + 1, sym.m), dtype=complex)
    phase = np.zeros(steps + 1)
    hs = np.empty(steps + 1)
    x, xi, ph = y.copy(), eta.copy(), 0.0
    k1 = rhs(x, xi)
    w = k1[3].vector if initial_vector is None else np.asarray(initial_vector, dtype=complex)
    if initial_vector is not None:
        v0 = k1[3].vector
        if abs(abs(np.vdot(v0, w)) - 1.0) > 1e-10 or abs(np.linalg.norm(w) - 1.0) > 1e-12:
            raise ValueError("initial vector must be a unit eigenvector of the chosen branch")
    xs[0], xis[0], ws[0], hs[0] = x, xi, w, k1[3].h
    for s in range(steps):
        k2 = rhs(x + 0.5 * dt * k1[0], xi + 0.5 * dt * k1[1])
        k3 = rhs(x + 0.5 * dt * k2[0], xi + 0.5 * dt * k2[1])
        k4 = rhs(x + dt * k3[0], xi + dt * k3[1])
        x = x + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        xi = xi + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        ph = ph + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        k1 = rhs(x, xi)
        v = k1[3].vector
        overlap = np.vdot(v, w)
        if abs(overlap) < 0.5:
            raise DegenerateEigenvalue(f"eigenvector jumped at t={dt * (s + 1):.6g}; step too large or branch crossing")
        w = v * (overlap / abs(overlap))
        xs[s + 1], xis[s + 1], ws[s + 1], phase[s + 1], hs[s + 1] = x, xi, w, ph, k1[3].h
    t = dt * np.arange(steps + 1)
    return Trajectory(j, t, xs, xis, ws, phase, hs)


def propagator_principal_symbol(sym: SymbolPair, j, t, y, eta, steps=None, initial_vector=None):
    """The rank-one principal symbol ``u_0(t; y, eta)`` of the propagator on branch ``j``."""
    if t == 0:
        bv = branch_values(sym, j, y, eta, with_phase=False)
        w = bv.vector if initial_vector is None else np.asarray(initial_vector, dtype=complex)
        return np.outer(w, w.conj())
    traj = integrate_trajectory(sym, j, y, eta, t, steps, True, initial_vector)
    return traj.propagator()


def convergence_rate(sym: SymbolPair, j, y, eta, t_end, steps, with_phase=False):
    """Observed order from the final states at ``steps``, ``2 steps`` and ``4 steps``."""
    finals = []
    for s in (steps, 2 * steps, 4 * steps):
        tr = integrate_trajectory(sym, j, y, eta, t_end, s, with_phase)
        finals.append(np.concatenate([tr.x[-1], tr.xi[-1], [tr.phase[-1]]]))
    e1 = np.linalg.norm(finals[0] - finals[1])
    e2 = np.linalg.norm(finals[1] - finals[2])
    return float(np.log2(e1 / e2))


# ------------------------------------------------------------------ loops
@dataclass
class LoopReport:
    """Loops ``x(t) = y`` (mod periods) found along scanned directions.

    ``T_candidate`` is the shortest detected loop time (or ``T_max`` when none
    was found): a scanned lower-bound candidate, not a proof that no shorter
    loop exists in unscanned directions.
    """

    y: np.ndarray
    directions: np.ndarray
    loops: list = field(default_factory=list)  # (direction index, t, distance)
    T_max: float = 0.0
    loop_tol: float = 1e-3
    label: str = "scanned lower-bound candidate"

    @property
    def T_candidate(self):
        return min((t for _, t, _ in self.loops), default=self.T_max)

    def loop_times(self, direction_index):
        return [t for d, t, _ in self.loops if d == direction_index]


def torus_distance(x, y, periods):
    d = np.asarray(x) - np.asarray(y)
    d = d - periods * np.round(d / periods)
    return np.linalg.norm(d, axis=-1)


def fibonacci_directions(count):
    k = np.arange(count) + 0.5
    z = 1 - 2 * k / count
    phi = np.pi * (1 + 5**0.5) * k
    r = np.sqrt(1 - z**2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], -1)


def _refine(traj, i, y, periods, velocity):
    """Minimize the distance to the nearest image of ``y`` on a cubic Hermite arc around sample ``i``."""
    lo, hi = max(i - 1, 0), min(i + 1, len(traj.t) - 1)
    image = y + periods * np.round((traj.x[i] - y) / periods)

    def point(t):
        # piecewise cubic Hermite on [t_k, t_{k+1}]
        k = min(max(np.searchsorted(traj.t, t) - 1, lo), hi - 1)
        t0, t1 = traj.t[k], traj.t[k + 1]
        hstep = t1 - t0
        s = (t - t0) / hstep
        h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
        h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
        return (h00 * traj.x[k] + h10 * hstep * velocity[k]
                + h01 * traj.x[k + 1] + h11 * hstep * velocity[k + 1])

    res = minimize_scalar(lambda t: float(np.sum((point(t) - image) ** 2)),
                          bounds=(traj.t[lo], traj.t[hi]), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(np.sqrt(res.fun))


def loop_scan(sym: SymbolPair, j, y, T_max, direction_grid=64, periods=None, loop_tol=1e-3,
              dt=0.02, workers=1) -> LoopReport:
    """Forward scan for trajectories returning to ``y`` before ``T_max``."""
    y = np.asarray(y, dtype=float)
    periods = np.full(len(y), 2 * np.pi) if periods is None else np.asarray(periods, float)
    dirs = fibonacci_directions(direction_grid) if np.isscalar(direction_grid) else np.asarray(direction_grid, float)
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    steps = max(1, int(np.ceil(T_max / dt)))

    def scan(d_index):
        traj = integrate_trajectory(sym, j, y, dirs[d_index], T_max, steps, with_phase=False)
        velocity = np.array([branch_values(sym, j, xx, kk, False).velocity
                             for xx, kk in zip(traj.x, traj.xi)])
        dist = torus_distance(traj.x, y, periods)
        speed = np.max(np.linalg.norm(velocity, axis=-1))
        coarse = loop_tol + speed * abs(traj.t[1] - traj.t[0])
        departed = np.maximum.accumulate(dist) > 10 * coarse
        found = []
        for i in range(1, len(dist) - 1):
            if departed[i - 1] and dist[i] <= dist[i - 1] and dist[i] <= dist[i + 1] and dist[i] < coarse:
                t_star, d_star = _refine(traj, i, y, periods, velocity)
                if d_star < loop_tol and t_star > 0 and not any(abs(t_star - f[1]) < 1e-6 for f in found):
                    found.append((d_index, t_star, d_star))
        if len(dist) > 1 and departed[-2] and dist[-1] < dist[-2] and dist[-1] < loop_tol:
            found.append((d_index, float(traj.t[-1]), float(dist[-1])))
        return found

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(scan, range(len(dirs))))
    else:
        results = [scan(i) for i in range(len(dirs))]
    loops = [item for chunk in results for item in chunk]
    return LoopReport(y, dirs, loops, float(T_max), loop_tol)
