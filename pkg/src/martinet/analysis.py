"""Measurements on propagated packets: fronts, ray decay and the on-front amplitude law."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_real
from .asymptotics import loglog_slope
from .dispersion import DispersionTable
from .exceptions import DegeneratePhase, OutOfDomain, ZeroField
from .io import config_hash
from .oscillator import DEFAULT_TOL, eigenpair
from .wavepacket import (_eta_count, FieldSlice, PacketSpec, QuasiContactSpec, Y_CUTOFF, fourier_datum, fourier_floor,
                         k_integral, packet_basis, quasi_contact_synthesize, synthesize)

QUANTILES = (0.05, 0.95)


@dataclass
class EnergyProfile:
    y: np.ndarray
    density: np.ndarray

    @property
    def centroid(self) -> float:
        return float(np.trapezoid(self.y * self.density, self.y))

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.y))

    def quantile(self, q: float) -> float:
        return _quantile(self.y, self.density, q)


def _quantile(y, density, q):
    """Inverse of the trapezoid CDF; a CDF flat at level ``q`` resolves to the plateau midpoint."""
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(y))])
    cdf /= cdf[-1]
    at = np.flatnonzero(np.isclose(cdf, q, rtol=0, atol=1e-12))
    if at.size:
        return float(0.5 * (y[at[0]] + y[at[-1]]))
    i = int(np.searchsorted(cdf, q))
    i = min(max(i, 1), y.size - 1)
    frac = (q - cdf[i - 1]) / (cdf[i] - cdf[i - 1])
    return float(y[i - 1] + frac * (y[i] - y[i - 1]))


def energy_profile_y(field: FieldSlice) -> EnergyProfile:
    """``|u|^2`` marginalised over every axis but ``y`` and normalised to unit mass.

    A spectral axis is summed with Parseval weights (``2 pi sum w |g|^2``);
    other sampled axes are integrated with the trapezoid rule.
    """
    if "y" not in field.axes:
        raise ValueError("field has no y axis")
    dens = np.abs(field.values) ** 2
    names = list(field.axes)
    for name in reversed(list(names)):
        if name == "y":
            continue
        ax = names.index(name)
        if field.spectral_axis == name:
            dens = 2 * np.pi * np.tensordot(dens, field.weights, axes=([ax], [0]))
        elif field.grids[name].size > 1:
            dens = np.trapezoid(dens, field.grids[name], axis=ax)
        else:
            dens = np.take(dens, 0, axis=ax)
        names.pop(ax)
    y = field.grids["y"]
    mass = float(np.trapezoid(dens, y)) if y.size > 1 else float(dens.sum())
    if not mass > 0:
        raise ZeroField("field has no energy on the y grid")
    return EnergyProfile(y=y, density=dens / mass)


@dataclass
class FrontReport:
    t: float
    y_centroid: float
    y_quantile_window: tuple
    predicted_window: tuple
    speed_estimate: float | None
    zeta_max: float
    inflation: float
    contained: bool

    def to_dict(self):
        return asdict(self)


def speed_interval(spec, table=None, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    return spec.speed_interval(table, tol)


def predicted_window(spec, t: float, table=None, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """``t F'(I)`` as an ordered interval."""
    lo, hi = speed_interval(spec, table, tol)
    return (min(t * lo, t * hi), max(t * lo, t * hi))


def _truncation(spec) -> float:
    return spec.zeta_max if isinstance(spec, PacketSpec) else spec.sigma_max


def _scale(spec) -> float:
    """Transverse packet scale, used to size the tails margin of the ``y`` grid."""
    return spec.zeta_max ** (-1.0 / 3.0) if isinstance(spec, PacketSpec) else spec.sigma_max**-0.5


def _check_monotone(spec, table, tol):
    if isinstance(spec, QuasiContactSpec):
        return
    basis = packet_basis(spec, table, tol)
    lo, hi = spec.mu_window
    probe = 0.5 * (lo + hi) - 0.5 * (hi - lo) * np.cos(np.pi * (np.arange(64) + 0.5) / 64)
    f2 = basis.Fsecond(probe)
    if not (np.all(f2 > 0) or np.all(f2 < 0)):
        raise OutOfDomain(f"F' is not monotone on the packet window [{lo}, {hi}]")


def default_y_grid(spec, times, table=None, tol: float = DEFAULT_TOL, step: float = 0.02) -> np.ndarray:
    """Uniform ``y`` line covering every predicted window plus the packet's tails."""
    wins = [predicted_window(spec, t, table, tol) for t in times]
    margin = 80.0 * _scale(spec)
    lo = min(w[0] for w in wins) - margin
    hi = max(w[1] for w in wins) + margin
    n = int(math.ceil((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


def _spectrum(spec, grid, t, table, tol, check_resolution):
    if isinstance(spec, PacketSpec):
        return synthesize(spec, grid, t, table=table, spectral=True, check_resolution=check_resolution, tol=tol)
    return quasi_contact_synthesize(spec, grid, t, spectral=True, check_resolution=check_resolution)


def front_report(spec, t: float, y_grid, *, table=None, tol: float = DEFAULT_TOL,
                 check_resolution: bool = False) -> FrontReport:
    """Energy window and centroid at one time, on the ``x = 0`` line (and ``z = 0`` for quasi-contact)."""
    field = _spectrum(spec, {"x": 0.0, "y": np.asarray(y_grid, dtype=float)}, t, table, tol, check_resolution)
    prof = energy_profile_y(field)
    window = (prof.quantile(QUANTILES[0]), prof.quantile(QUANTILES[1]))
    pred = predicted_window(spec, t, table, tol)
    dy = float(np.max(np.diff(prof.y))) if prof.y.size > 1 else 0.0
    infl = max(3.0 * dy, 10.0 * _truncation(spec) ** (-1.0 / 3.0))
    contained = pred[0] - infl <= window[0] and window[1] <= pred[1] + infl
    speed = prof.centroid / t if abs(t) >= 0.1 else None
    return FrontReport(t=float(t), y_centroid=prof.centroid, y_quantile_window=window, predicted_window=pred,
                       speed_estimate=speed, zeta_max=_truncation(spec), inflation=infl, contained=bool(contained))


def track_front(spec, times, grid=None, *, table: DispersionTable | None = None, tol: float = DEFAULT_TOL,
                check_resolution: bool = False) -> list[FrontReport]:
    """Front reports for a packet at each time.

    Parameters
    ----------
    spec : PacketSpec or QuasiContactSpec
    times : sequence of float
        At least three times, including 0.
    grid : array_like, optional
        The ``y`` line; defaults to :func:`default_y_grid`.
    """
    times = [check_real(t, "t") for t in times]
    if len(times) < 3 or 0.0 not in times:
        raise ValueError("need at least three times including t = 0")
    _check_monotone(spec, table, tol)
    y = default_y_grid(spec, times, table, tol) if grid is None else np.asarray(grid, dtype=float)
    return [front_report(spec, t, y, table=table, tol=tol, check_resolution=check_resolution) for t in times]


def front_speed(reports) -> tuple[float, float, float]:
    """Least-squares ``centroid = speed t + intercept``; returns ``(speed, intercept, r2)``."""
    t = np.array([r.t for r in reports])
    y = np.array([r.y_centroid for r in reports])
    speed, intercept = np.polyfit(t, y, 1)
    resid = y - (speed * t + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(speed), float(intercept), r2


@dataclass
class RayProbe:
    kind: str
    params: dict
    samples: list
    magnitudes: list
    fitted_exponent: float
    floors: list = field(default_factory=list)
    t: float = 0.0
    scaled_magnitudes: list | None = None

    def to_dict(self):
        return asdict(self)


def ray_decay(spec: PacketSpec, t: float, kind: str, samples, *, a: float | None = None, b: float | None = None,
              direction=None, table: DispersionTable | None = None, tol: float = DEFAULT_TOL) -> RayProbe:
    """Magnitude of the Fourier transform of ``U(t) u0`` along a ray.

    ``kind="core"`` follows ``(xi, eta, zeta) = (zeta^(1/3) a, zeta^(1/3) b, zeta)``
    over ``zeta`` in ``samples``; ``kind="cone"`` follows ``r * direction``
    over ``r`` in ``samples``. The exponent is the log-log slope of the
    magnitudes, each first raised to its rounding floor. For core rays,
    ``scaled_magnitudes`` holds ``zeta^(1/6) |U|``, which the exact transform
    keeps constant.
    """
    samples = [check_real(s, "sample", lo=0, lo_open=True) for s in samples]
    sign = spec.zeta_sign
    mags, floors, scaled = [], [], []
    if kind == "core":
        if a is None or b is None:
            raise ValueError("core rays need a and b")
        if spec.bump(b) == 0.0:
            raise ValueError(f"phi({b}) = 0: the core ray carries no energy")
        for zeta in samples:
            s = zeta ** (1.0 / 3.0)
            val = fourier_datum(spec, s * a, s * b, sign * zeta, t, table=table, tol=tol)
            pair = eigenpair(sign * b, spec.k, tol)
            mags.append(abs(val))
            floors.append(fourier_floor(pair) * float(Y_CUTOFF(zeta)) * spec.bump(b) / math.sqrt(s))
            scaled.append(abs(val) * zeta ** (1.0 / 6.0))
        params = {"a": a, "b": b}
    elif kind == "cone":
        d = np.asarray(direction if direction is not None else (1.0, 0.0, 1.0), dtype=float)
        if d.shape != (3,) or d[2] * sign <= 0:
            raise ValueError("cone direction must be a 3-vector pointing into the packet's zeta half-space")
        d = d / np.linalg.norm(d)
        for r in samples:
            xi, eta, zeta = r * d
            val = fourier_datum(spec, xi, eta, zeta, t, table=table, tol=tol)
            mags.append(abs(val))
            s = abs(zeta) ** (1.0 / 3.0)
            phi = spec.bump(eta / s)
            if phi > 0:
                pair = eigenpair(sign * eta / s, spec.k, tol)
                floors.append(fourier_floor(pair) * float(Y_CUTOFF(abs(zeta))) * phi / math.sqrt(s))
            else:
                floors.append(0.0)
        params = {"direction": d.tolist()}
        scaled = None
    else:
        raise ValueError(f"kind must be 'core' or 'cone', got {kind!r}")
    positive = [f for f in floors if f > 0]
    base = min(positive) if positive else 1e-300
    fit = [max(m, f if f > 0 else base) for m, f in zip(mags, floors)]
    if len(samples) < 2:
        exponent = float("nan")
    elif not any(mags):
        exponent = float("-inf")
    else:
        exponent = loglog_slope(samples, fit)
    return RayProbe(kind=kind, params=params, samples=samples, magnitudes=mags, fitted_exponent=exponent,
                    floors=floors, t=float(t), scaled_magnitudes=scaled)


@dataclass
class OffFrontReport:
    t: float
    x: float
    y: float
    zeta_max: list
    values: list
    tails: list
    exponent: float
    outside_window: bool

    def to_dict(self):
        d = asdict(self)
        d["values"] = [[v.real, v.imag] for v in self.values]
        return d


def off_front_decay(spec: PacketSpec, t: float, zeta_max_list, *, y_off: float, x_off: float = 0.0,
                    table: DispersionTable | None = None, tol: float = DEFAULT_TOL) -> OffFrontReport:
    """Convergence of ``U(t) u0 (x_off, y_off, 0)`` as the truncation grows.

    The tail at step ``i`` is ``|u(zeta_max[i+1]) - u(zeta_max[i])|``; its
    log-log slope against ``zeta_max[i]`` is the reported exponent. Tails
    are raised to ``1e-14`` of the field scale before the fit, so a
    rounding-limited exponent is an upper bound.
    """
    t = check_real(t, "t")
    if t == 0.0:
        raise ValueError("t must be nonzero")
    zl = sorted(float(z) for z in zeta_max_list)
    if len(zl) < 3:
        raise ValueError("need at least three zeta_max values")
    # one inner rule for every run, so the differences isolate the added frequencies
    n_eta = _eta_count(spec.bump.half_width, zl[-1] ** (1.0 / 3.0), abs(t) + abs(y_off), 1)
    vals = []
    for zm in zl:
        f = synthesize(spec.replace(zeta_max=zm), {"x": float(x_off), "y": float(y_off), "z": 0.0}, t,
                       table=table, tol=tol, min_eta_nodes=n_eta)
        vals.append(complex(f.values.ravel()[0]))
    scale = max(abs(v) for v in vals)
    tails = [abs(b - a) for a, b in zip(vals, vals[1:])]
    floor = 1e-14 * scale if scale > 0 else 1e-300
    if max(tails) <= floor:
        exponent = float("-inf")
    else:
        exponent = loglog_slope(zl[:-1], [max(x, floor) for x in tails])
    lo, hi = predicted_window(spec, t, table, tol)
    width = max(hi - lo, 1e-12)
    outside = (y_off < lo - 3 * width) or (y_off > hi + 3 * width) or x_off != 0.0
    return OffFrontReport(t=t, x=float(x_off), y=float(y_off), zeta_max=zl, values=vals, tails=tails,
                          exponent=exponent, outside_window=bool(outside))


def stationary_amplitude(spec: PacketSpec, c: float, t: float = 1.0, *, table=None,
                         tol: float = DEFAULT_TOL) -> complex:
    """``a_1 = phi(c) psi_c(0) (2 pi / |F''(c)|)^(1/2) exp(-i pi sgn(t F''(c)) / 4)``."""
    basis = packet_basis(spec, table, tol)
    f2 = basis.Fsecond(c)
    if abs(f2) < 1e-6:
        raise DegeneratePhase(f"|F''({c})| = {abs(f2):.3g} < 1e-6")
    psi0 = eigenpair(c, spec.k, tol).psi_at_zero
    mag = spec.bump(c) * psi0 * math.sqrt(2 * math.pi / abs(f2))
    return complex(mag * np.exp(-0.25j * math.pi * np.sign(t * f2)))


@dataclass
class StationaryPhaseReport:
    t: float
    c: float
    zeta: list
    magnitudes: list
    predicted: list
    prefactor_ratio: list
    phase_error: list
    t_scaling: list
    exponent: float
    a1: complex
    F_second: float

    def to_dict(self):
        d = asdict(self)
        d["a1"] = [self.a1.real, self.a1.imag]
        return d


def stationary_phase_check(spec: PacketSpec, t: float, c: float, zeta_list, *, table=None,
                           tol: float = DEFAULT_TOL) -> StationaryPhaseReport:
    """Compare ``K(zeta)`` with its stationary-phase asymptote.

    ``prefactor_ratio`` is ``|K| (zeta^(1/3) |t|)^(1/2) / |a_1|``;
    ``phase_error`` is the argument of ``K`` divided by the full predicted
    leading term; ``t_scaling`` is ``sqrt(2) |K(2t)| / |K(t)|``.
    """
    t = check_real(t, "t")
    zl = [check_real(z, "zeta", lo=0, lo_open=True) for z in zeta_list]
    basis = packet_basis(spec, table, tol)
    a1 = stationary_amplitude(spec, c, t, table=table, tol=tol)
    Fc, Fpc = basis.F(c), basis.Fprime(c)
    mags, pred, ratio, perr, tsc = [], [], [], [], []
    for zeta in zl:
        s = zeta ** (1.0 / 3.0)
        K = k_integral(spec, t, c, zeta, table=table, tol=tol)
        K2 = k_integral(spec, 2 * t, c, zeta, table=table, tol=tol)
        lam = s * abs(t)
        lead = a1 / math.sqrt(lam) * np.exp(-1j * s * t * (Fc - Fpc * c))
        mags.append(abs(K))
        pred.append(abs(lead))
        ratio.append(abs(K) / abs(lead))
        perr.append(float(np.angle(K / lead)))
        tsc.append(math.sqrt(2.0) * abs(K2) / abs(K))
    exponent = loglog_slope(zl, mags) if len(zl) >= 2 else float("nan")
    return StationaryPhaseReport(t=t, c=float(c), zeta=zl, magnitudes=mags, predicted=pred, prefactor_ratio=ratio,
                                 phase_error=perr, t_scaling=tsc, exponent=exponent, a1=a1,
                                 F_second=float(basis.Fsecond(c)))


def experiment_manifest(spec, reports, table: DispersionTable | None = None, extra: dict | None = None) -> dict:
    """Reproducibility record: spec and table hashes plus every report."""
    out = {
        "spec": spec.to_dict(),
        "spec_hash": config_hash(spec.to_dict()),
        "table_hash": config_hash(table.to_dict()) if table is not None else None,
        "reports": [r.to_dict() for r in reports],
    }
    if extra:
        out.update(extra)
    return out


class FrontTracker(BaseEstimator):
    """Estimator view of :func:`track_front`.

    ``fit`` tracks the packet at ``times``; ``predict`` maps times to
    centroid positions along the fitted line.
    """

    def __init__(self, spec=None, times=(0.0, 0.5, 1.0), y_grid=None, tol=DEFAULT_TOL, check_resolution=False):
        self.spec = spec
        self.times = times
        self.y_grid = y_grid
        self.tol = tol
        self.check_resolution = check_resolution

    def fit(self, X=None, y=None, table=None):
        if self.spec is None:
            raise ValueError("FrontTracker needs a packet spec")
        self.reports_ = track_front(self.spec, self.times, self.y_grid, table=table, tol=self.tol,
                                    check_resolution=self.check_resolution)
        self.speed_, self.intercept_, self.r2_ = front_speed(self.reports_)
        return self

    def predict(self, T):
        check_is_fitted(self, "reports_")
        return self.speed_ * np.asarray(T, dtype=float) + self.intercept_
