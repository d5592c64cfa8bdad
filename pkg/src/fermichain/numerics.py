"""Shared dense linear algebra, integration, and stationarity plumbing.

Everything here operates on plain numpy arrays (complex128 unless noted)
and is backed by LAPACK/scipy routines behind thin validation wrappers.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


class NumericalError(RuntimeError):
    """Raised when a numerical primitive cannot meet its contract."""


class QuadratureError(NumericalError):
    pass


class LinearSolveError(NumericalError):
    pass


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def hermiticity_defect(a: np.ndarray) -> float:
    """max |A - A^dagger| relative to max |A| (0 for the zero matrix)."""
    scale = max_abs(a)
    if scale == 0.0:
        return 0.0
    return max_abs(a - a.conj().T) / scale


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and the matching orthonormal eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray


def hermitian_eigendecomposition(
    a: np.ndarray, herm_tol: float = 1e-12
) -> Spectrum:
    """Eigendecomposition A = V diag(E) V^dagger for Hermitian A.

    Rejects inputs whose Hermiticity defect exceeds ``herm_tol`` (relative
    to max |A|).  Eigenvalues come back ascending.
    """
    a = np.asarray(a)
    defect = hermiticity_defect(a)
    if defect > herm_tol:
        raise NumericalError(
            f"matrix is not Hermitian: relative defect {defect:.3e} > {herm_tol:.1e}"
        )
    values, vectors = np.linalg.eigh(a)
    return Spectrum(values=values, vectors=vectors)


def rk4_step(f, y, t: float, dt: float):
    """One classical 4th-order Runge-Kutta update for y' = f(t, y)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(np.asarray(out))):
        raise NumericalError(f"non-finite state after rk4 step at t={t}")
    return out


def quadrature(f, a: float, b: float, tol: float = 1e-10) -> complex:
    """Adaptive integral of a (possibly complex) scalar function on [a, b].

    Raises :class:`QuadratureError` when the estimated error exceeds
    max(tol, tol*|I|).
    """
    if a == b:
        return 0.0 + 0.0j
    re, re_err = quad(lambda x: np.real(f(x)), a, b, epsabs=tol, epsrel=tol, limit=200)
    im, im_err = quad(lambda x: np.imag(f(x)), a, b, epsabs=tol, epsrel=tol, limit=200)
    val = re + 1j * im
    err = re_err + im_err
    if err > max(tol, tol * abs(val)) * 10.0:
        raise QuadratureError(
            f"quadrature error estimate {err:.3e} exceeds tolerance {tol:.1e}"
        )
    return val


def trapezoid_uniform(y: np.ndarray, dx: float) -> complex | float:
    """Composite trapezoid on a uniform grid (zero for < 2 samples)."""
    if len(y) < 2:
        return 0.0
    return dx * (np.sum(y) - 0.5 * (y[0] + y[-1]))


def solve_linear(a: np.ndarray, b: np.ndarray, resid_tol: float = 1e-8) -> np.ndarray:
    """Solve A x = b with a residual check.

    Raises :class:`LinearSolveError` for singular or badly conditioned
    systems, reporting the condition estimate.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise LinearSolveError(f"singular linear system: {exc}") from exc
    resid = np.linalg.norm(a @ x - b)
    scale = np.linalg.norm(b) + np.linalg.norm(a, ord="fro") * np.linalg.norm(x)
    if not np.all(np.isfinite(x)) or resid > resid_tol * max(scale, 1e-300):
        cond = np.linalg.cond(a)
        raise LinearSolveError(
            f"ill-conditioned linear solve: residual {resid:.3e}, cond ~ {cond:.3e}"
        )
    return x


class StationarityMonitor:
    """Detects stationarity of a scalar observable over a trailing window.

    The observable is considered stationary once the window spans at least
    ``window`` time units and its peak-to-peak spread is below
    ``tol * scale``, where scale is the largest magnitude in the window
    (floored to keep the test meaningful near zero).  When ``target`` is
    supplied (a known fixed-point value), the distance to it must pass the
    same threshold, which guards against aliased sampling of slow
    oscillatory transients.
    """

    def __init__(
        self,
        window: float,
        tol: float,
        floor: float = 1e-6,
        target: float | None = None,
        check_every: int = 1,
    ):
        self.window = window
        self.tol = tol
        self.floor = floor
        self.target = target
        self.check_every = max(1, check_every)
        self.residual = math.inf
        self._ts: deque[float] = deque()
        self._js: deque[float] = deque()
        self._count = 0

    def push(self, t: float, j: float) -> bool:
        self._ts.append(t)
        self._js.append(j)
        while self._ts and self._ts[0] < t - self.window:
            self._ts.popleft()
            self._js.popleft()
        self._count += 1
        if self._count % self.check_every:
            return False
        return self._check(t, j)

    def _check(self, t: float, j: float) -> bool:
        if self._ts[-1] - self._ts[0] < 0.99 * self.window:
            return False
        hi = max(self._js)
        lo = min(self._js)
        scale = max(abs(hi), abs(lo), self.floor)
        res = (hi - lo) / scale
        if self.target is not None:
            res = max(res, abs(j - self.target) / scale)
        self.residual = res
        return res <= self.tol
