"""Tensor-valued trigonometric polynomials on a flat torus.

A :class:`TrigPolyField` is a finite sum ``sum_k c_k exp(i <w_k, x>)`` with
integer wave vectors ``k`` and array-valued coefficients ``c_k``.  The
physical wave vector is ``w_k = 2 pi k / periods``.  Derivatives, products,
adjoints and real parts are computed exactly in coefficient space.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch

TWO_PI = 2.0 * np.pi


def _merge(waves, coeffs):
    """Sum coefficients of repeated wave vectors and drop exact zeros."""
    if len(waves) == 0:
        return waves.reshape(0, waves.shape[1] if waves.ndim == 2 else 0), coeffs
    uniq, inverse = np.unique(waves, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    merged = np.zeros((len(uniq),) + coeffs.shape[1:], dtype=complex)
    np.add.at(merged, inverse, coeffs)
    flat = merged.reshape(len(uniq), -1)
    keep = np.any(flat != 0, axis=1)
    return uniq[keep], merged[keep]


class TrigPolyField:
    """Exact trigonometric-polynomial field with values of shape ``shape``."""

    def __init__(self, waves, coeffs, periods=None, shape=None):
        waves = np.asarray(waves, dtype=np.int64)
        coeffs = np.asarray(coeffs, dtype=complex)
        if waves.ndim != 2:
            raise DimensionMismatch("waves must be a 2-D integer array (terms, n)")
        if coeffs.shape[:1] != waves.shape[:1]:
            raise DimensionMismatch(
                f"{waves.shape[0]} wave vectors but {coeffs.shape[0]} coefficients"
            )
        n = waves.shape[1]
        self.n = n
        self.periods = (
            np.full(n, TWO_PI) if periods is None else np.asarray(periods, dtype=float)
        )
        if self.periods.shape != (n,) or np.any(self.periods <= 0):
            raise DimensionMismatch("periods must be n positive numbers")
        if shape is not None and coeffs.shape[1:] != tuple(shape):
            if coeffs.shape[0] == 0:
                coeffs = coeffs.reshape((0,) + tuple(shape))
            else:
                raise DimensionMismatch("coefficient shape does not match value shape")
        self.shape = tuple(coeffs.shape[1:])
        self.waves, self.coeffs = _merge(waves, coeffs)
        if self.coeffs.shape[0] == 0:
            self.coeffs = self.coeffs.reshape((0,) + self.shape)

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value, n=3, periods=None):
        value = np.asarray(value, dtype=complex)
        return cls(np.zeros((1, n), dtype=np.int64), value[None], periods, value.shape)

    @classmethod
    def zeros(cls, shape, n=3, periods=None):
        return cls(np.zeros((0, n), dtype=np.int64), np.zeros((0,) + tuple(shape)), periods, shape)

    @classmethod
    def from_samples(cls, samples, periods=None, max_harmonic=None, tol=0.0):
        """Interpolate values on a uniform grid (axes first, then value axes).

        ``samples`` has shape ``(N_1, ..., N_n) + shape``.  The returned field
        keeps harmonics with ``|k_a| < N_a / 2`` (and ``<= max_harmonic``),
        dropping coefficients whose magnitude is ``<= tol``.
        """
        samples = np.asarray(samples, dtype=complex)
        if periods is None:
            raise DimensionMismatch("periods are required to fix the dimension")
        periods = np.asarray(periods, dtype=float)
        n = len(periods)
        grid = samples.shape[:n]
        spec = np.fft.fftn(samples, axes=tuple(range(n))) / np.prod(grid)
        axes_modes = []
        for size in grid:
            half = (size - 1) // 2
            if max_harmonic is not None:
                half = min(half, max_harmonic)
            axes_modes.append(np.arange(-half, half + 1))
        mesh = np.meshgrid(*axes_modes, indexing="ij")
        waves = np.stack([m.ravel() for m in mesh], axis=1)
        index = tuple(np.mod(waves[:, a], grid[a]) for a in range(n))
        coeffs = spec[index]
        flat = np.abs(coeffs.reshape(len(waves), -1)).max(axis=1, initial=0.0)
        keep = flat > tol
        return cls(waves[keep], coeffs[keep], periods, samples.shape[n:])

    @classmethod
    def sample_function(cls, func, n_grid, periods=None, n=3, axes=None, max_harmonic=None, tol=0.0):
        """Interpolate a pointwise ``func(x)`` on a uniform grid.

        Only the coordinates in ``axes`` are sampled; the others are held at 0,
        which is exact when ``func`` does not depend on them.
        """
        periods = np.full(n, TWO_PI) if periods is None else np.asarray(periods, dtype=float)
        axes = tuple(range(n)) if axes is None else tuple(sorted(axes))
        sizes = [n_grid if a in axes else 1 for a in range(n)]
        pts = torus_grid(sizes, periods)
        values = np.asarray(func(pts.reshape(-1, n)))
        values = values.reshape(tuple(sizes) + values.shape[1:])
        return cls.from_samples(values, periods, max_harmonic, tol)

    # evaluation -----------------------------------------------------------
    @property
    def wavevectors(self):
        return TWO_PI * self.waves / self.periods

    def _phases(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionMismatch(f"points must have last axis {self.n}, got {x.shape}")
        return np.exp(1j * (x @ self.wavevectors.T))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.waves) == 0:
            return np.zeros(x.shape[:-1] + self.shape, dtype=complex)
        ph = self._phases(x)
        return np.tensordot(ph, self.coeffs, axes=([-1], [0]))

    def grad(self, x):
        """Gradient with the derivative axis placed right after the point axes."""
        x = np.asarray(x, dtype=float)
        if len(self.waves) == 0:
            return np.zeros(x.shape[:-1] + (self.n,) + self.shape, dtype=complex)
        ph = self._phases(x)
        dc = 1j * np.einsum("ka,k...->ka...", self.wavevectors, self.coeffs)
        return np.tensordot(ph, dc, axes=([-1], [0]))

    def derivative(self, axis):
        factor = 1j * self.wavevectors[:, axis]
        coeffs = self.coeffs * factor.reshape((-1,) + (1,) * len(self.shape))
        return TrigPolyField(self.waves, coeffs, self.periods, self.shape)

    # algebra --------------------------------------------------------------
    def _check(self, other):
        if other.n != self.n or not np.allclose(other.periods, self.periods, rtol=0, atol=1e-14):
            raise DimensionMismatch("fields live on different tori")

    def _like(self, waves, coeffs, shape=None):
        return TrigPolyField(waves, coeffs, self.periods, self.shape if shape is None else shape)

    def __add__(self, other):
        if isinstance(other, PointwiseField):
            return other + self
        if not isinstance(other, TrigPolyField):
            other = TrigPolyField.constant(np.broadcast_to(other, self.shape), self.n, self.periods)
        self._check(other)
        if other.shape != self.shape:
            raise DimensionMismatch(f"cannot add shapes {self.shape} and {other.shape}")
        return self._like(
            np.concatenate([self.waves, other.waves]),
            np.concatenate([self.coeffs, other.coeffs]),
        )

    __radd__ = __add__

    def __neg__(self):
        return self._like(self.waves, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, TrigPolyField):
            return self.product(scalar, lambda a, b: a * b)
        return self._like(self.waves, self.coeffs * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if not isinstance(other, TrigPolyField):
            other = TrigPolyField.constant(other, self.n, self.periods)
        return self.product(other, np.matmul)

    def __rmatmul__(self, other):
        return TrigPolyField.constant(other, self.n, self.periods).product(self, np.matmul)

    def product(self, other, op):
        """Pointwise product ``op(self(x), other(x))`` computed by convolution."""
        self._check(other)
        if len(self.waves) == 0 or len(other.waves) == 0:
            shape = np.shape(op(np.zeros(self.shape), np.zeros(other.shape)))
            return TrigPolyField.zeros(shape, self.n, self.periods)
        waves = (self.waves[:, None, :] + other.waves[None, :, :]).reshape(-1, self.n)
        a = self.coeffs[:, None]
        b = other.coeffs[None, :]
        coeffs = op(a, b)
        coeffs = coeffs.reshape((-1,) + coeffs.shape[2:])
        return TrigPolyField(waves, coeffs, self.periods, coeffs.shape[1:])

    def map_coeffs(self, func):
        """Apply a linear map to every coefficient (e.g. a contraction)."""
        coeffs = np.stack([func(c) for c in self.coeffs]) if len(self.waves) else None
        if coeffs is None:
            shape = np.shape(func(np.zeros(self.shape, dtype=complex)))
            return TrigPolyField.zeros(shape, self.n, self.periods)
        return TrigPolyField(self.waves, coeffs, self.periods, coeffs.shape[1:])

    def __getitem__(self, index):
        index = index if isinstance(index, tuple) else (index,)
        coeffs = self.coeffs[(slice(None),) + index]
        return TrigPolyField(self.waves, coeffs, self.periods, coeffs.shape[1:])

    def conj(self):
        return self._like(-self.waves, np.conj(self.coeffs))

    def adjoint(self):
        """Pointwise conjugate transpose of a matrix-valued field."""
        return self._like(-self.waves, np.conj(np.swapaxes(self.coeffs, -1, -2)),
                          self.shape[:-2] + (self.shape[-1], self.shape[-2]))

    @property
    def real(self):
        return (self + self.conj()) * 0.5

    @property
    def imag(self):
        return (self - self.conj()) * (-0.5j)

    # inspection -----------------------------------------------------------
    def max_harmonic(self):
        return int(np.abs(self.waves).max(initial=0))

    def dependent_axes(self):
        return {a for a in range(self.n) if np.any(self.waves[:, a] != 0)}

    def is_constant(self):
        return not self.dependent_axes()

    def coefficient(self, wave):
        wave = np.asarray(wave, dtype=np.int64)
        hit = np.nonzero(np.all(self.waves == wave, axis=1))[0]
        if len(hit) == 0:
            return np.zeros(self.shape, dtype=complex)
        return self.coeffs[hit[0]].copy()

    def mean(self):
        return self.coefficient(np.zeros(self.n, dtype=np.int64))

    def realness_defect(self):
        """Largest coefficient mismatch between the field and its conjugate."""
        return _max_abs_difference(self, self.conj())

    def hermiticity_defect(self):
        return _max_abs_difference(self, self.adjoint())

    def equals(self, other, tol=0.0):
        return _max_abs_difference(self, other) <= tol

    def to_dict(self):
        return {
            "periods": self.periods.tolist(),
            "terms": [
                {"k": w.tolist(), "re": c.real.tolist(), "im": c.imag.tolist()}
                for w, c in zip(self.waves, self.coeffs)
            ],
            "shape": list(self.shape),
        }

    def __repr__(self):
        return f"TrigPolyField(shape={self.shape}, terms={len(self.waves)}, max_harmonic={self.max_harmonic()})"


def _max_abs_difference(a, b):
    diff = a - b
    if len(diff.waves) == 0:
        return 0.0
    return float(np.abs(diff.coeffs).max())


def torus_grid(sizes, periods):
    """Uniform grid points of shape ``sizes + (n,)`` starting at the origin."""
    periods = np.asarray(periods, dtype=float)
    axes = [np.arange(s) * (p / s) for s, p in zip(sizes, periods)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def random_trig_poly(rng, shape, max_harmonic=1, scale=1.0, n=3, periods=None, n_terms=None):
    """Random field with integer harmonics ``|k|_inf <= max_harmonic``."""
    modes = np.arange(-max_harmonic, max_harmonic + 1)
    all_waves = np.stack(np.meshgrid(*([modes] * n), indexing="ij"), -1).reshape(-1, n)
    if n_terms is not None and n_terms < len(all_waves):
        all_waves = all_waves[rng.choice(len(all_waves), n_terms, replace=False)]
    coeffs = rng.normal(size=(len(all_waves),) + tuple(shape)) + 1j * rng.normal(
        size=(len(all_waves),) + tuple(shape)
    )
    return TrigPolyField(all_waves, scale * coeffs / len(all_waves), periods, shape)


def stack(fields):
    """Stack equally shaped fields along a new leading value axis."""
    fields = list(fields)
    first = fields[0]
    total = TrigPolyField.zeros((len(fields),) + first.shape, first.n, first.periods)
    for i, f in enumerate(fields):
        coeffs = np.zeros((len(f.waves), len(fields)) + f.shape, dtype=complex)
        coeffs[:, i] = f.coeffs
        total = total + TrigPolyField(f.waves, coeffs, f.periods, (len(fields),) + f.shape)
    return total


class PointwiseField:
    """A smooth field known only through pointwise evaluation.

    ``axes`` lists the coordinates the field depends on; ``resolution`` is the
    grid size used when Fourier coefficients are requested.
    """

    def __init__(self, func, shape, axes, periods=None, n=3, resolution=32):
        self.func = func
        self.shape = tuple(shape)
        self.axes = set(axes)
        self.n = n
        self.periods = np.full(n, TWO_PI) if periods is None else np.asarray(periods, dtype=float)
        self.resolution = resolution

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.func(x), dtype=complex), x.shape[:-1] + self.shape)

    def dependent_axes(self):
        return set(self.axes)

    def is_constant(self):
        return not self.axes

    def max_harmonic(self):
        return 0 if not self.axes else (self.resolution - 1) // 2

    def to_trigpoly(self, max_harmonic=None, tol=1e-15):
        if not self.axes:
            return TrigPolyField.constant(self(np.zeros(self.n)), self.n, self.periods)
        return TrigPolyField.sample_function(self, self.resolution, self.periods, self.n,
                                             axes=self.axes, max_harmonic=max_harmonic, tol=tol)

    def _combine(self, other, op):
        if isinstance(other, (TrigPolyField, PointwiseField)):
            axes = self.axes | other.dependent_axes()
            res = max(self.resolution, getattr(other, "resolution", 0),
                      4 * other.max_harmonic() + 2)
            return PointwiseField(lambda x: op(self(x), other(x)), self.shape, axes,
                                  self.periods, self.n, res)
        value = np.asarray(other, dtype=complex)
        return PointwiseField(lambda x: op(self(x), value), self.shape, self.axes,
                              self.periods, self.n, self.resolution)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return PointwiseField(lambda x: -self(x), self.shape, self.axes, self.periods, self.n,
                              self.resolution)

    def __mul__(self, scalar):
        return PointwiseField(lambda x: scalar * self(x), self.shape, self.axes, self.periods,
                              self.n, self.resolution)

    __rmul__ = __mul__

    def __repr__(self):
        return f"PointwiseField(shape={self.shape}, axes={sorted(self.axes)})"


def as_trigpoly(field, max_harmonic=None):
    """Exact coefficients of a trig poly, or sampled ones for a pointwise field."""
    if isinstance(field, TrigPolyField):
        return field
    return field.to_trigpoly(max_harmonic)
