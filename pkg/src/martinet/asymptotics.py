"""Leading-order large-``|mu|`` laws for the quartic oscillator spectrum.

Only the printed leading terms are implemented. The higher coefficients of
the two expansions are unknown here and are what the cross-validation
measures as the residual error.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ._validation import check_int, check_real
from .dispersion import speed_direct
from .exceptions import DomainError
from .oscillator import DEFAULT_TOL, eigenpair, truncation_half_width

SQRT2 = np.sqrt(2.0)


def _positive(mu):
    mu = check_real(mu, "mu")
    if mu <= 0:
        raise DomainError(f"plus-infinity law needs mu > 0, got {mu}")
    return mu


def _negative(mu):
    mu = check_real(mu, "mu")
    if mu >= 0:
        raise DomainError(f"minus-infinity law needs mu < 0, got {mu}")
    return mu


def lambda_plus(mu: float, k: int = 1) -> float:
    """``mu^2 + sqrt(2) (2k - 1) sqrt(mu)``."""
    mu = _positive(mu)
    k = check_int(k, "k", lo=1)
    return mu * mu + SQRT2 * (2 * k - 1) * np.sqrt(mu)


def dF_plus(mu: float, k: int = 1) -> float:
    """``1 - (2k - 1) / (2 sqrt 2) mu^(-3/2)``."""
    mu = _positive(mu)
    k = check_int(k, "k", lo=1)
    return 1.0 - (2 * k - 1) / (2.0 * SQRT2) * mu**-1.5


def lambda_minus(mu: float, k: int = 1) -> float:
    """``2 (2k - 1) sqrt(-mu)``: the ``(2k-1)``-th eigenvalue (and the ``2k``-th)."""
    mu = _negative(mu)
    k = check_int(k, "k", lo=1)
    return 2.0 * (2 * k - 1) * np.sqrt(-mu)


def dF_minus(mu: float, k: int = 1) -> float:
    """``-sqrt(2 (2k - 1)) / 4 (-mu)^(-3/4)``."""
    mu = _negative(mu)
    k = check_int(k, "k", lo=1)
    return -np.sqrt(2.0 * (2 * k - 1)) / 4.0 * (-mu) ** -0.75


def _pair_solve(V, lam_e, lam_o, x0, x1, init):
    """Integrate two solutions of ``y'' = (V - lam) y`` and their running overlap."""
    def rhs(x, s):
        v = V(x)
        return [s[1], (v - lam_e) * s[0], s[3], (v - lam_o) * s[2], s[0] * s[2]]

    sol = solve_ivp(rhs, (x0, x1), init, method="DOP853", rtol=1e-12, atol=1e-40)
    return sol.y[:, -1]


def _herring_gap(mu, lam_e, lam_o, L):
    V = lambda x: (mu + x * x) ** 2
    x_turn = np.sqrt(-mu - np.sqrt(0.5 * (lam_e + lam_o)))
    # psi_e(0) = 1 and psi_o'(0) = 1; both grow through the barrier
    inner = _pair_solve(V, lam_e, lam_o, 0.0, x_turn, [1.0, 0.0, 0.0, 1.0, 0.0])
    qe, qo = np.sqrt(V(L) - lam_e), np.sqrt(V(L) - lam_o)
    outer = _pair_solve(V, lam_e, lam_o, L, x_turn, [1.0, -qe, 1.0, -qo, 0.0])
    scale = (outer[0] / inner[0]) * (outer[2] / inner[2])
    overlap = inner[4] - outer[4] / scale
    return 1.0 / overlap


def pairing_gap(mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> float:
    """``lambda_{2k}(mu) - lambda_{2k-1}(mu)`` for separated double wells.

    The gap falls below double precision of the eigenvalues already near
    ``mu = -10``, so it is not formed as a difference. With ``psi_e`` the
    even and ``psi_o`` the odd member of the pair, the Wronskian identity

        (lambda_o - lambda_e) int_0^inf psi_e psi_o dx = psi_e(0) psi_o'(0)

    is evaluated with both functions obtained by shooting: outward from
    ``x = 0`` through the barrier and inward from the wall, matched at the
    inner turning point. Every integration runs in its stable direction,
    so exponentially small values keep their relative accuracy. The odd
    eigenvalue is then corrected to ``lambda_e + gap`` and the identity is
    re-evaluated once.
    """
    mu = _negative(mu)
    k = check_int(k, "k", lo=1)
    if mu > -5.0:
        raise DomainError(f"pairing gap needs separated wells (mu <= -5), got {mu}")
    lam_e = eigenpair(mu, 2 * k - 1, tol).lambda_
    if -mu - np.sqrt(lam_e) <= 0:
        raise DomainError(f"level {2 * k - 1} lies above the barrier at mu={mu}")
    L = truncation_half_width(mu, lam_e)
    gap = _herring_gap(mu, lam_e, lam_e, L)
    gap = _herring_gap(mu, lam_e, lam_e + gap, L)
    return float(gap)


def direct_gap(mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> float:
    """Plain eigenvalue difference; meaningful only while the gap exceeds ~1e-9 lambda."""
    return eigenpair(mu, 2 * k, tol).lambda_ - eigenpair(mu, 2 * k - 1, tol).lambda_


@dataclass
class AsymptoticReport:
    k: int
    regime: str
    quantity: str
    mu_list: list = field(default_factory=list)
    numeric: list = field(default_factory=list)
    asymptotic: list = field(default_factory=list)
    abs_err: list = field(default_factory=list)
    fitted_order: float = float("nan")

    def to_dict(self):
        return asdict(self)

    def rows(self):
        return zip(self.mu_list, self.numeric, self.asymptotic, self.abs_err)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log|y|`` against ``log|x|``."""
    lx = np.log(np.abs(np.asarray(x, dtype=float)))
    ly = np.log(np.abs(np.asarray(y, dtype=float)))
    return float(np.polyfit(lx, ly, 1)[0])


_LAWS = {
    ("plus", "lambda"): (lambda_plus, lambda m, k, tol: eigenpair(m, k, tol).lambda_),
    ("plus", "dF"): (dF_plus, speed_direct),
    ("minus", "lambda"): (lambda_minus, lambda m, k, tol: eigenpair(m, 2 * k - 1, tol).lambda_),
    ("minus", "dF"): (dF_minus, lambda m, k, tol: speed_direct(m, 2 * k - 1, tol)),
}


def cross_validate(k: int, regime: str, mu_list, quantity: str = "dF", tol: float = DEFAULT_TOL,
                   n_jobs=None) -> AsymptoticReport:
    """Compare solver output with a leading-order law over ``mu_list``.

    In the minus regime ``k`` indexes the pair: the numeric value is taken
    from eigenvalue ``2k - 1``.
    """
    if (regime, quantity) not in _LAWS:
        raise ValueError(f"unknown regime/quantity {regime!r}/{quantity!r}")
    law, numeric_fn = _LAWS[(regime, quantity)]
    mus = [float(m) for m in mu_list]
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu_list must be strictly increasing")
    if n_jobs in (None, 1):
        numeric = [float(numeric_fn(m, k, tol)) for m in mus]
    else:
        from joblib import Parallel, delayed
        numeric = [float(v) for v in Parallel(n_jobs=n_jobs)(delayed(numeric_fn)(m, k, tol) for m in mus)]
    asym = [float(law(m, k)) for m in mus]
    err = [abs(a - b) for a, b in zip(numeric, asym)]
    order = loglog_slope(mus, err) if len(mus) >= 2 else float("nan")
    return AsymptoticReport(k=k, regime=regime, quantity=quantity, mu_list=mus, numeric=numeric,
                            asymptotic=asym, abs_err=err, fitted_order=order)
