"""Dispersion curves ``F_k = sqrt(lambda_k)`` and speeds ``F_k'``.

Both curves are sampled at Chebyshev-Lobatto points and stored as Chebyshev
series. ``F'`` at the nodes comes from Hellmann-Feynman, never from
differentiating the ``F`` series; the differentiated series is kept only as a
consistency check. Lobatto grids nest under ``n -> 2n - 1``, so the adaptive
doubling reuses every solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.fft import dct
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_points, check_real
from .exceptions import NoInteriorMinimum, NonConverged, OutOfRange
from .io import write_csv
from .oscillator import DEFAULT_TOL, eigenpair, hellmann_feynman

DOUBLING_TOL = 1e-7
MAX_NODES = 4097


def speed_direct(mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> float:
    """``F_k'(mu) = lambda_k'(mu) / (2 sqrt(lambda_k(mu)))`` from a direct solve."""
    pair = eigenpair(mu, k, tol)
    return hellmann_feynman(pair) / (2.0 * np.sqrt(pair.lambda_))


def dispersion_direct(mu: float, k: int = 1, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    pair = eigenpair(mu, k, tol)
    F = np.sqrt(pair.lambda_)
    return float(F), float(hellmann_feynman(pair) / (2.0 * F))


def lobatto_nodes(a: float, b: float, n: int) -> np.ndarray:
    """``n`` Chebyshev-Lobatto points on ``[a, b]``, in increasing order."""
    t = -np.cos(np.pi * np.arange(n) / (n - 1))
    return 0.5 * (a + b) + 0.5 * (b - a) * t


def cheb_coefficients(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients interpolating ``values`` at increasing Lobatto points."""
    N = values.size - 1
    # dct type 1 expects the cos(j pi / N) ordering, i.e. decreasing nodes
    c = dct(values[::-1], type=1) / N
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


@dataclass(frozen=True, eq=False)
class DispersionTable:
    """Chebyshev representation of ``F_k`` and ``F_k'`` on ``[mu_min, mu_max]``."""

    k: int
    mu_min: float
    mu_max: float
    nodes: np.ndarray = field(repr=False)
    F_values: np.ndarray = field(repr=False)
    Fprime_values: np.ndarray = field(repr=False)
    F_coef: np.ndarray = field(repr=False)
    Fprime_coef: np.ndarray = field(repr=False)
    tol: float = DEFAULT_TOL

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    def _t(self, mu):
        mu = np.asarray(mu, dtype=float)
        span = self.mu_max - self.mu_min
        if np.any(mu < self.mu_min - 1e-12 * span) or np.any(mu > self.mu_max + 1e-12 * span):
            raise OutOfRange(f"mu outside table range [{self.mu_min}, {self.mu_max}]")
        return np.clip((2.0 * mu - self.mu_min - self.mu_max) / span, -1.0, 1.0)

    def F(self, mu):
        out = C.chebval(self._t(mu), self.F_coef)
        return float(out) if np.ndim(out) == 0 else out

    def Fprime(self, mu):
        out = C.chebval(self._t(mu), self.Fprime_coef)
        return float(out) if np.ndim(out) == 0 else out

    def Fsecond(self, mu):
        """Derivative of the ``F'`` series."""
        scale = 2.0 / (self.mu_max - self.mu_min)
        out = scale * C.chebval(self._t(mu), C.chebder(self.Fprime_coef))
        return float(out) if np.ndim(out) == 0 else out

    def F_series_derivative(self, mu):
        """Derivative of the ``F`` series; used only to cross-check ``F'``."""
        scale = 2.0 / (self.mu_max - self.mu_min)
        return scale * C.chebval(self._t(mu), C.chebder(self.F_coef))

    def to_dict(self) -> dict:
        return {
            "k": self.k, "mu_min": self.mu_min, "mu_max": self.mu_max, "tol": self.tol,
            "nodes": self.nodes, "F_values": self.F_values, "Fprime_values": self.Fprime_values,
            "F_coef": self.F_coef, "Fprime_coef": self.Fprime_coef,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DispersionTable":
        arr = {name: np.asarray(d[name], dtype=float)
               for name in ("nodes", "F_values", "Fprime_values", "F_coef", "Fprime_coef")}
        return cls(k=int(d["k"]), mu_min=float(d["mu_min"]), mu_max=float(d["mu_max"]),
                   tol=float(d.get("tol", DEFAULT_TOL)), **arr)


def _node_values(mus, k, tol, n_jobs=None):
    if n_jobs in (None, 1):
        vals = [dispersion_direct(m, k, tol) for m in mus]
    else:
        from joblib import Parallel, delayed
        vals = Parallel(n_jobs=n_jobs)(delayed(dispersion_direct)(m, k, tol) for m in mus)
    return np.asarray(vals, dtype=float).reshape(-1, 2)


def _round_up_lobatto(n: int) -> int:
    j = max(int(np.ceil(np.log2(max(n - 1, 1)))), 5)
    return 2**j + 1


def adaptive_lobatto(fun, a: float, b: float, n_nodes: int = 33, tol: float = DOUBLING_TOL,
                     max_nodes: int = MAX_NODES):
    """Sample ``fun`` on nested Lobatto grids until every column converges.

    ``fun(mus)`` returns an ``(m, q)`` array. The grid doubles (``n -> 2n - 1``,
    reusing all previous samples) until the interpolants of every column move
    by less than ``tol`` on a 1001-point check grid.

    Returns
    -------
    nodes : ndarray, shape (n,)
    values : ndarray, shape (n, q)
    """
    n = _round_up_lobatto(n_nodes)
    vals = np.asarray(fun(lobatto_nodes(a, b, n)), dtype=float)
    check = np.linspace(-1.0, 1.0, 1001)
    while True:
        if 2 * n - 1 > max_nodes:
            raise NonConverged(f"Chebyshev table on [{a}, {b}] not converged with {n} nodes")
        n2 = 2 * n - 1
        nodes2 = lobatto_nodes(a, b, n2)
        vals2 = np.empty((n2, vals.shape[1]))
        vals2[::2] = vals
        vals2[1::2] = fun(nodes2[1::2])
        change = max(
            np.max(np.abs(C.chebval(check, cheb_coefficients(vals2[:, j]))
                          - C.chebval(check, cheb_coefficients(vals[:, j]))))
            for j in range(vals.shape[1])
        )
        n, vals = n2, vals2
        if change < tol:
            return nodes2, vals


def build_table(k: int = 1, mu_min: float = -50.0, mu_max: float = 50.0, n_nodes: int = 33,
                tol: float = DEFAULT_TOL, max_nodes: int = MAX_NODES, n_jobs=None) -> DispersionTable:
    """Tabulate ``F_k`` and ``F_k'`` with adaptive node doubling.

    Starting from ``n_nodes`` (rounded up to ``2**j + 1``) Lobatto points, the
    node count is doubled until both interpolants move by less than ``1e-7``
    on a 1001-point check grid.

    Raises
    ------
    NonConverged
        If ``max_nodes`` is reached first, or an eigen-solve fails.
    """
    k = check_int(k, "k", lo=1)
    mu_min = check_real(mu_min, "mu_min")
    mu_max = check_real(mu_max, "mu_max")
    if not mu_min < mu_max:
        raise ValueError(f"need mu_min < mu_max, got [{mu_min}, {mu_max}]")
    n_nodes = check_int(n_nodes, "n_nodes", lo=33)
    nodes, vals = adaptive_lobatto(lambda m: _node_values(m, k, tol, n_jobs), mu_min, mu_max,
                                   n_nodes, DOUBLING_TOL, max_nodes)
    F, Fp = vals[:, 0].copy(), vals[:, 1].copy()
    return DispersionTable(k=k, mu_min=mu_min, mu_max=mu_max, nodes=nodes, F_values=F,
                           Fprime_values=Fp, F_coef=cheb_coefficients(F),
                           Fprime_coef=cheb_coefficients(Fp), tol=tol)


def eval_F(table: DispersionTable, mu):
    return table.F(mu)


def eval_Fprime(table: DispersionTable, mu):
    return table.Fprime(mu)


def find_min_speed(table: DispersionTable, xatol: float = 1e-7) -> tuple[float, float]:
    """Locate ``mu_k*`` and ``a_k = min F_k'``.

    The ``F'`` series brackets the minimum; Brent's method on direct
    Hellmann-Feynman solves then refines it.
    """
    mus = np.linspace(table.mu_min, table.mu_max, 4001)
    vals = table.Fprime(mus)
    i = int(np.argmin(vals))
    if i == 0 or i == mus.size - 1:
        raise NoInteriorMinimum(f"F'_{table.k} is smallest at the table edge mu={mus[i]}")
    lo, hi = mus[i - 1], mus[i + 1]
    coarse = minimize_scalar(table.Fprime, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
    half = max(0.05, 4 * (hi - lo))
    lo, hi = max(table.mu_min, coarse.x - half), min(table.mu_max, coarse.x + half)
    fine = minimize_scalar(lambda m: speed_direct(m, table.k, table.tol), bounds=(lo, hi),
                           method="bounded", options={"xatol": xatol})
    mu_star = float(fine.x)
    return mu_star, float(speed_direct(mu_star, table.k, table.tol))


@dataclass(frozen=True)
class SpeedWindow:
    """Speeds ``F'(I)`` for ``I = [c - delta, c + delta]``."""

    c: float
    delta: float
    image: tuple[float, float]
    monotone: bool
    F_second_at_c: float

    @property
    def interval(self) -> tuple[float, float]:
        return (self.c - self.delta, self.c + self.delta)

    def scaled(self, t: float) -> tuple[float, float]:
        """``t F'(I)`` as an ordered interval."""
        a, b = t * self.image[0], t * self.image[1]
        return (min(a, b), max(a, b))


def speed_window(table: DispersionTable, c: float, delta: float) -> SpeedWindow:
    c = check_real(c, "c")
    delta = check_real(delta, "delta", lo=0, lo_open=True)
    lo, hi = c - delta, c + delta
    if lo < table.mu_min or hi > table.mu_max:
        raise OutOfRange(f"[{lo}, {hi}] not inside table range [{table.mu_min}, {table.mu_max}]")
    probe = 0.5 * (lo + hi) - 0.5 * (hi - lo) * np.cos(np.pi * (np.arange(64) + 0.5) / 64)
    f2 = table.Fsecond(probe)
    monotone = bool(np.all(f2 > 0) or np.all(f2 < 0))
    if monotone:
        a, b = table.Fprime(lo), table.Fprime(hi)
        image = (min(a, b), max(a, b))
    else:
        dense = table.Fprime(np.linspace(lo, hi, 2001))
        image = (float(dense.min()), float(dense.max()))
    return SpeedWindow(c=c, delta=delta, image=(float(image[0]), float(image[1])),
                       monotone=monotone, F_second_at_c=float(table.Fsecond(c)))


def plot_rows(table: DispersionTable, n: int = 1001):
    mus = np.linspace(table.mu_min, table.mu_max, n)
    return zip(mus, table.F(mus), table.Fprime(mus))


def export_plot(table: DispersionTable, path, n: int = 1001):
    """Write ``mu,F,Fprime`` at ``n`` uniform points."""
    return write_csv(path, ["mu", "F", "Fprime"], plot_rows(table, n))


class DispersionCurve(BaseEstimator):
    """Estimator wrapper around :func:`build_table`.

    ``fit`` tabulates the curves; ``predict`` returns ``F_k``,
    ``predict_speed`` returns ``F_k'`` and ``transform`` stacks both.

    Examples
    --------
    >>> curve = DispersionCurve(k=1, mu_min=-10, mu_max=10).fit()
    >>> curve.predict([0.0])  # doctest: +SKIP
    array([1.02974...])
    """

    def __init__(self, k=1, mu_min=-50.0, mu_max=50.0, n_nodes=33, tol=DEFAULT_TOL,
                 max_nodes=MAX_NODES, n_jobs=None):
        self.k = k
        self.mu_min = mu_min
        self.mu_max = mu_max
        self.n_nodes = n_nodes
        self.tol = tol
        self.max_nodes = max_nodes
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        self.table_ = build_table(self.k, self.mu_min, self.mu_max, self.n_nodes, self.tol,
                                  self.max_nodes, self.n_jobs)
        self.n_nodes_ = self.table_.n_nodes
        return self

    @classmethod
    def from_table(cls, table: DispersionTable) -> "DispersionCurve":
        est = cls(k=table.k, mu_min=table.mu_min, mu_max=table.mu_max, tol=table.tol)
        est.table_ = table
        est.n_nodes_ = table.n_nodes
        return est

    def _mu(self, X):
        check_is_fitted(self, "table_")
        return check_points(X, 1, name="mu")[:, 0]

    def predict(self, X):
        return np.atleast_1d(self.table_.F(self._mu(X)))

    def predict_speed(self, X):
        return np.atleast_1d(self.table_.Fprime(self._mu(X)))

    def transform(self, X):
        mu = self._mu(X)
        return np.column_stack([self.table_.F(mu), self.table_.Fprime(mu)])

    def fit_transform(self, X, y=None):
        return self.fit().transform(X)

    def min_speed(self):
        check_is_fitted(self, "table_")
        return find_min_speed(self.table_)

    def speed_window(self, c, delta):
        check_is_fitted(self, "table_")
        return speed_window(self.table_, c, delta)
