"""Quartic oscillator ``H_mu = -d^2/dx^2 + (mu + x^2)^2`` on a truncated line.

The operator is even in ``x``, and its k-th eigenfunction has parity
``(-1)**(k-1)``. Every solve is therefore done on the half line with a
Neumann-type (even) or Dirichlet (odd) condition at ``x = 0``. This is the
exact block diagonalisation of the full symmetric finite-difference matrix,
and it keeps the nearly degenerate double-well pairs at ``mu << 0`` apart.

Eigenvalues are read off as Rayleigh quotients written in difference form,
``sum((psi[j+1] - psi[j])**2) / h**2 + sum(V * psi**2)``. That expression has
no cancellation, so it keeps full relative precision on fine grids where the
LAPACK eigenvalue itself carries an absolute error of order ``eps / h**2``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from ._validation import check_int, check_real
from .exceptions import NonConverged, OutOfDomain, TruncationTooSmall

DEFAULT_TOL = 1e-10
WALL_RATIO = 1e-8
# Agmon exponent kept between the outer turning point and the wall.
AGMON_MARGIN = 36.0
# h * sqrt(kinetic energy) for the first attempt of the automatic grid.
_KINETIC_STEP = 0.006
_MAX_REFINEMENTS = 4


def quartic_potential(mu: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: (mu + x * x) ** 2


@dataclass(frozen=True)
class OscillatorParams:
    """Discretisation of one eigenproblem.

    ``n_points`` interior points on ``[-half_width, half_width]`` with
    spacing ``h = 2 L / (n_points + 1)``. It must be ``3 (mod 4)`` so that the
    coarse (``2h``), base (``h``) and refined (``h/2``) grids all contain
    ``x = 0``.
    """

    mu: float
    k: int = 1
    half_width: float = 8.0
    n_points: int = 2003
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "mu", check_real(self.mu, "mu"))
        object.__setattr__(self, "k", check_int(self.k, "k", lo=1))
        object.__setattr__(self, "half_width", check_real(self.half_width, "half_width", lo=0, lo_open=True))
        object.__setattr__(self, "n_points", check_int(self.n_points, "n_points", lo=200))
        object.__setattr__(self, "tol", check_real(self.tol, "tol", lo=0, lo_open=True))
        if self.n_points % 4 != 3:
            raise ValueError(f"n_points must be 3 mod 4, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points + 1)

    def check_against(self, lambda_est: float) -> None:
        """Raise ``ValueError`` if the grid cannot resolve ``lambda_est``."""
        L, h = self.half_width, self.spacing
        if (self.mu + L * L) ** 2 < 4.0 * lambda_est:
            raise ValueError(f"half_width={L} too small: potential at the wall is below 4*lambda")
        if h * h * lambda_est > 0.1:
            raise ValueError(f"grid too coarse: h^2*lambda = {h * h * lambda_est:.3g} > 0.1")


@dataclass(frozen=True, eq=False)
class EigenPair:
    """A normalised eigenpair of ``H_mu``.

    ``lambda_`` is the Richardson extrapolation over the ``h`` and ``h/2``
    grids; ``psi`` lives on the ``h/2`` grid (interior points only, the walls
    carry zeros) and ``psi_coarse`` on the ``h`` grid. ``residual`` is the
    relative residual of ``psi`` for the ``h/2`` matrix and its own
    Rayleigh quotient.
    """

    mu: float
    k: int
    lambda_: float
    psi: np.ndarray = field(repr=False)
    half_width: float
    n_points: int
    residual: float
    error_estimate: float
    psi_coarse: np.ndarray = field(repr=False)
    tol: float = DEFAULT_TOL

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points + 1)

    @property
    def grid(self) -> tuple[float, int, float]:
        return (self.half_width, self.n_points, self.spacing)

    @property
    def x(self) -> np.ndarray:
        return _grid(self.half_width, self.n_points)

    @property
    def x_coarse(self) -> np.ndarray:
        return _grid(self.half_width, (self.n_points - 1) // 2)

    @property
    def norm(self) -> float:
        return float(self.spacing * np.sum(self.psi**2))

    @property
    def psi_at_zero(self) -> float:
        return float(self.psi[self.n_points // 2])

    @cached_property
    def _spline(self) -> CubicSpline:
        L = self.half_width
        xs = np.concatenate([[-L], self.x, [L]])
        ys = np.concatenate([[0.0], self.psi, [0.0]])
        return CubicSpline(xs, ys)

    def __call__(self, x):
        """Cubic interpolation of ``psi``; zero outside the truncated domain."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) <= self.half_width
        out[inside] = self._spline(x[inside])
        return out

    def to_csv_rows(self):
        return zip(self.x.tolist(), self.psi.tolist())


def _grid(L: float, n: int) -> np.ndarray:
    h = 2.0 * L / (n + 1)
    return (np.arange(n) - (n - 1) / 2) * h


def _parity_solve(potential, k: int, L: float, n: int):
    """k-th eigenpair on the symmetric grid with ``n`` (odd) interior points.

    Returns the Rayleigh-quotient eigenvalue and the full-line vector
    (unnormalised, unit 2-norm up to the parity reconstruction).
    """
    m = (n - 1) // 2
    h = 2.0 * L / (n + 1)
    idx = (k - 1) // 2
    even = k % 2 == 1
    inv_h2 = 1.0 / (h * h)
    if even:
        xh = np.arange(m + 1) * h
        d = 2.0 * inv_h2 + potential(xh)
        e = np.full(m, -inv_h2)
        e[0] *= np.sqrt(2.0)
    else:
        xh = np.arange(1, m + 1) * h
        d = 2.0 * inv_h2 + potential(xh)
        e = np.full(m - 1, -inv_h2)
    _, v = eigh_tridiagonal(d, e, select="i", select_range=(idx, idx))
    v = v[:, 0].copy()
    if even:
        v[0] *= np.sqrt(2.0)
        full = np.concatenate([v[:0:-1], v])
    else:
        full = np.concatenate([-v[::-1], [0.0], v])
    x = _grid(L, n)
    padded = np.concatenate([[0.0], full, [0.0]])
    num = np.sum(np.diff(padded) ** 2) * inv_h2 + np.sum(potential(x) * full**2)
    lam = num / np.sum(full**2)
    return lam, full


def _residual(potential, L: float, psi: np.ndarray, lam: float) -> float:
    n = psi.size
    h = 2.0 * L / (n + 1)
    padded = np.concatenate([[0.0], psi, [0.0]])
    Hpsi = (2.0 * psi - padded[:-2] - padded[2:]) / (h * h) + potential(_grid(L, n)) * psi
    return float(np.linalg.norm(Hpsi - lam * psi) / np.linalg.norm(psi))


def _fix_sign(psi: np.ndarray, k: int) -> np.ndarray:
    if k == 1:
        s = psi[psi.size // 2]
    else:
        # rightmost lobe before the decaying tail
        big = np.flatnonzero(np.abs(psi) > 1e-3 * np.max(np.abs(psi)))
        s = psi[big[-1]]
    return psi if s > 0 else -psi


def _normalise(psi: np.ndarray, h: float) -> np.ndarray:
    return psi / np.sqrt(h * np.sum(psi**2))


def _solve_levels(potential, k, L, n, tol, mu=0.0):
    lam_c, _ = _parity_solve(potential, k, L, (n - 1) // 2)
    lam_b, psi_b = _parity_solve(potential, k, L, n)
    lam_f, psi_f = _parity_solve(potential, k, L, 2 * n + 1)
    rich = (4.0 * lam_f - lam_b) / 3.0
    rich_c = (4.0 * lam_b - lam_c) / 3.0
    err = abs(rich - rich_c) / 15.0
    if err > tol * abs(rich):
        raise NonConverged(
            f"mu={mu}, k={k}: Richardson error estimate {err:.3g} exceeds tol*lambda={tol * abs(rich):.3g}"
        )
    h_f = 2.0 * L / (2 * n + 2)
    wall = abs(psi_f[-1]) / np.max(np.abs(psi_f))
    if wall > WALL_RATIO:
        raise TruncationTooSmall(f"mu={mu}, k={k}: |psi(wall)|/max = {wall:.3g} > {WALL_RATIO}")
    psi_f = _normalise(_fix_sign(psi_f, k), h_f)
    psi_b = _normalise(_fix_sign(psi_b, k), 2.0 * h_f)
    res = _residual(potential, L, psi_f, lam_f)
    return rich, psi_f, psi_b, res, err


def solve_eigenpair(params: OscillatorParams) -> EigenPair:
    """Solve for the ``params.k``-th eigenpair of ``H_mu`` on the given grid.

    Raises
    ------
    NonConverged
        If the Richardson error estimate exceeds ``tol * lambda``.
    TruncationTooSmall
        If ``|psi|`` next to the wall exceeds ``1e-8`` of its maximum.
    """
    p = params
    lam, psi, psi_c, res, err = _solve_levels(
        quartic_potential(p.mu), p.k, p.half_width, p.n_points, p.tol, mu=p.mu
    )
    return EigenPair(
        mu=p.mu, k=p.k, lambda_=float(lam), psi=psi, half_width=p.half_width,
        n_points=2 * p.n_points + 1, residual=res, error_estimate=float(err),
        psi_coarse=psi_c, tol=p.tol,
    )


def _round_up_3mod4(n: int) -> int:
    n = max(int(np.ceil(n)), 203)
    return n + (3 - n % 4) % 4


def _coarse_lambda(mu: float, k: int) -> float:
    L0 = np.sqrt(max(-mu, 0.0)) + 6.0 + np.sqrt(k)
    lam, _ = _parity_solve(quartic_potential(mu), k, L0, 1603)
    return lam


def truncation_half_width(mu: float, lambda_est: float) -> float:
    """Smallest wall position meeting the domain rules for ``lambda_est``.

    The wall must see ``(mu + L^2)^2 >= 4 lambda``, sit at least 4 beyond the
    double-well minima when ``mu < 0``, and leave an Agmon exponent of
    ``AGMON_MARGIN`` past the outer turning point so the wall test passes.
    """
    L_pot = np.sqrt(max(2.0 * np.sqrt(lambda_est) - mu, 0.0))
    L_well = np.sqrt(-mu) + 4.0 if mu < 0 else 0.0
    x_turn = np.sqrt(np.sqrt(lambda_est) - mu)
    xs = x_turn + np.linspace(0.0, 20.0, 8001)
    kappa = np.sqrt(np.maximum((mu + xs**2) ** 2 - lambda_est, 0.0))
    agmon = np.concatenate([[0.0], np.cumsum(0.5 * (kappa[1:] + kappa[:-1]) * np.diff(xs))])
    L_agmon = xs[np.searchsorted(agmon, AGMON_MARGIN)]
    return float(max(L_pot, L_well, L_agmon))


def default_params(mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> OscillatorParams:
    """Pick a domain and grid for ``(mu, k)`` from a coarse pre-solve."""
    lam = _coarse_lambda(mu, k)
    L = truncation_half_width(mu, lam)
    kinetic = lam - max(mu, 0.0) ** 2 + 1.0
    h = min(_KINETIC_STEP / np.sqrt(kinetic), np.sqrt(0.05 / lam))
    n = _round_up_3mod4(2.0 * L / h - 1.0)
    return OscillatorParams(mu=mu, k=k, half_width=L, n_points=n, tol=tol)


def solve_auto(mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> EigenPair:
    """``solve_eigenpair`` on an automatic grid, refining on non-convergence."""
    p = default_params(mu, k, tol)
    for _ in range(_MAX_REFINEMENTS):
        try:
            return solve_eigenpair(p)
        except NonConverged:
            p = OscillatorParams(mu=p.mu, k=p.k, half_width=p.half_width, n_points=2 * p.n_points + 1, tol=tol)
    return solve_eigenpair(p)


class EigenCache:
    """Thread-safe memo of automatic solves keyed by ``(round(mu, 12), k, tol)``.

    Two threads racing on the same key both solve; the values are bitwise
    equal, so whichever insert wins is irrelevant.
    """

    def __init__(self, maxsize: int = 4096):
        self.maxsize = maxsize
        self._data: dict = {}
        self._lock = threading.Lock()

    def get(self, mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> EigenPair:
        key = (round(float(mu), 12), int(k), float(tol))
        with self._lock:
            hit = self._data.get(key)
        if hit is not None:
            return hit
        pair = solve_auto(key[0], key[1], key[2])
        with self._lock:
            if len(self._data) >= self.maxsize:
                self._data.pop(next(iter(self._data)))
            self._data.setdefault(key, pair)
            return self._data[key]

    def clear(self) -> None:
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


_CACHE = EigenCache()


def eigenpair(mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> EigenPair:
    """Cached eigenpair on an automatic grid."""
    return _CACHE.get(mu, k, tol)


def hellmann_feynman(pair: EigenPair) -> float:
    """``d lambda_k / d mu = 2 int (mu + x^2) psi^2 dx``.

    The factor 2 comes from ``d/dmu (mu + x^2)^2``. The trapezoid value is taken on both stored grids and Richardson-combined,
    which makes it the exact derivative of the extrapolated eigenvalue up to
    ``O(h^4)``.
    """
    def integral(psi, x):
        h = x[1] - x[0]
        return 2.0 * h * np.sum((pair.mu + x**2) * psi**2)

    fine = integral(pair.psi, pair.x)
    coarse = integral(pair.psi_coarse, pair.x_coarse)
    return float((4.0 * fine - coarse) / 3.0)


def moment_bound_check(pair: EigenPair) -> tuple[float, float, bool]:
    """Compare ``int (mu + x^2)^2 psi^2`` with ``lambda``; must be strictly less."""
    x = pair.x
    lhs = float(pair.spacing * np.sum((pair.mu + x**2) ** 2 * pair.psi**2))
    rhs = pair.lambda_
    return lhs, rhs, lhs < rhs


def scaled_eigenfunction(eta: float, zeta: float, x, k: int = 1, tol: float = DEFAULT_TOL):
    """Eigenfunction of ``-d^2 + (eta + x^2 zeta)^2`` by rescaling.

    Returns ``zeta**(1/6) * psi_mu(zeta**(1/3) * x)`` with ``mu = eta / zeta**(1/3)``.
    """
    zeta = check_real(zeta, "zeta", lo=1.0)
    s = zeta ** (1.0 / 3.0)
    pair = eigenpair(eta / s, k, tol)
    u = s * np.asarray(x, dtype=float)
    if np.any(np.abs(u) > pair.half_width):
        raise OutOfDomain(f"|zeta^(1/3) x| exceeds half_width={pair.half_width:.4g}")
    out = zeta ** (1.0 / 6.0) * pair(u)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class QuasiContactMode:
    """Eigenmode of ``-d^2 + eta^2 + (zeta - x sigma)^2``."""

    eta: float
    zeta: float
    sigma: float
    k: int = 1

    @property
    def alpha(self) -> float:
        return quasi_contact_alpha(self.eta, self.zeta, self.sigma, self.k)

    def __call__(self, x):
        """Normalised Hermite function centred at ``zeta / sigma``."""
        u = np.sqrt(self.sigma) * (np.asarray(x, dtype=float) - self.zeta / self.sigma)
        return self.sigma**0.25 * hermite_function(u, self.k)


def hermite_function(u, k: int = 1):
    """``L^2``-normalised ``k``-th Hermite function of ``-d^2 + u^2``."""
    from math import factorial, pi
    from numpy.polynomial.hermite import hermval

    n = k - 1
    u = np.asarray(u, dtype=float)
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    norm = pi**-0.25 / np.sqrt(2.0**n * factorial(n))
    return norm * hermval(u, coef) * np.exp(-0.5 * u * u)


def quasi_contact_alpha(eta: float, zeta: float, sigma: float, k: int = 1) -> float:
    """Closed-form eigenvalue ``eta^2 + (2k - 1) sigma``; ``zeta`` only shifts the well."""
    sigma = check_real(sigma, "sigma", lo=0, lo_open=True)
    k = check_int(k, "k", lo=1)
    return float(eta) ** 2 + (2 * k - 1) * sigma


def solve_shifted_harmonic(eta: float, zeta: float, sigma: float, k: int = 1, tol: float = DEFAULT_TOL) -> float:
    """Finite-difference eigenvalue of ``-d^2 + eta^2 + (zeta - x sigma)^2``.

    The well is recentred at ``zeta / sigma``; the shift does not change the
    spectrum, which the numeric answer confirms independently.
    """
    sigma = check_real(sigma, "sigma", lo=0, lo_open=True)
    pot = lambda u: eta**2 + sigma**2 * u * u
    lam_est = eta**2 + (2 * k - 1) * sigma
    # Gaussian tail exp(-sigma u^2 / 2) below 1e-16 at the wall
    L = np.sqrt((2 * k + 1) / sigma) + np.sqrt(80.0 / sigma)
    h = _KINETIC_STEP / np.sqrt((2 * k - 1) * sigma + 1.0)
    n = _round_up_3mod4(2.0 * L / h - 1.0)
    for _ in range(_MAX_REFINEMENTS):
        try:
            lam, *_ = _solve_levels(pot, k, L, n, tol)
            return float(lam)
        except NonConverged:
            n = 2 * n + 1
    raise NonConverged(f"shifted harmonic oscillator (eta={eta}, sigma={sigma}, k={k}, estimate {lam_est})")
