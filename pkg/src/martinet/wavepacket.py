"""Well-prepared wave packets and their propagation by oscillatory quadrature.

The propagated field is a double integral over the scaled frequency
``eta_1`` and the vertical frequency ``zeta``::

    U(t)u0(x, y, z) = int int Y(zeta) W(zeta) zeta^(1/2) phi(eta_1)
                      psi_{eta_1}(zeta^(1/3) x)
                      exp(-i zeta^(1/3) (t F(eta_1) - y eta_1)) exp(i z zeta)
                      d eta_1 d zeta

where ``W`` is a smooth roll-off that truncates ``zeta`` at ``zeta_max``.
Every rule is fixed Gauss-Legendre with node counts tied to the largest
phase derivative, so a run is a deterministic function of its inputs.

In *spectral* mode the outer ``zeta`` sum is not carried out. The field
then holds the ``z``-Fourier transform ``g(zeta)`` on the quadrature nodes
together with the node weights. By Parseval, ``int |u|^2 dz`` equals
``2 pi sum w |g|^2``, which the front tracker uses instead of a ``z`` window.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.special import roots_legendre
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_points, check_real
from .dispersion import DispersionTable, adaptive_lobatto, cheb_coefficients
from .exceptions import DegeneratePhase, OutOfDomain, OutOfRange, ResolutionError
from .io import atomic_write_text, csv_text, json_text
from .oscillator import DEFAULT_TOL, eigenpair, hellmann_feynman, hermite_function

MIN_ETA_NODES = 48
PANEL_NODES = 16
RESOLUTION_TOL = 1e-4
BASIS_TOL = 1e-8
_BLOCK = 4096
_STEP_NODES = 64


@lru_cache(maxsize=None)
def _legendre(n: int):
    x, w = roots_legendre(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gl_rule(a: float, b: float, n: int):
    """``n``-point Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _legendre(int(n))
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def panel_rule(a: float, b: float, max_len: float, n: int = PANEL_NODES, anchored: bool = False):
    """Composite Gauss-Legendre rule with equal panels no longer than ``max_len``.

    With ``anchored`` the panels have length exactly ``max_len`` starting at
    ``a`` and the last one may overhang ``b``; rules for different ``b``
    then share every common node.
    """
    m = max(1, math.ceil((b - a) / max_len - 1e-12))
    edges = a + max_len * np.arange(m + 1) if anchored else np.linspace(a, b, m + 1)
    x, w = _legendre(n)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights, m


def _unit_bump(v):
    out = np.zeros_like(v)
    inside = (v > 0) & (v < 1)
    vi = v[inside]
    with np.errstate(over="ignore"):
        out[inside] = np.exp(-1.0 / (vi * (1.0 - vi)))
    return out


_STEP_NORM = float(np.sum(gl_rule(0.0, 1.0, _STEP_NODES)[1] * _unit_bump(gl_rule(0.0, 1.0, _STEP_NODES)[0])))


def smooth_step(u):
    """Normalised integral of a bump: 0 for ``u <= 0``, 1 for ``u >= 1``, C-infinity between."""
    u = np.asarray(u, dtype=float)
    out = np.array(np.clip(u, 0.0, 1.0))
    mid = (u > 0) & (u < 1)
    if np.any(mid):
        x, w = _legendre(_STEP_NODES)
        um = u[mid]
        # integrate over the shorter side so values never overshoot the plateaus
        upper = um > 0.5
        um = np.where(upper, 1.0 - um, um)
        vals = np.empty_like(um)
        for b in range(0, um.size, 16384):
            ub = um[b:b + 16384]
            v = 0.5 * ub[:, None] * (x[None, :] + 1.0)
            vals[b:b + 16384] = 0.5 * ub * (_unit_bump(v) @ w) / _STEP_NORM
        out[mid] = np.where(upper, 1.0 - vals, vals)
    return out


@dataclass(frozen=True)
class BumpProfile:
    """``phi(s) = exp(-delta^2 / (delta^2 - (s - c)^2))`` on ``|s - c| < delta``."""

    center: float
    half_width: float

    def __post_init__(self):
        object.__setattr__(self, "center", check_real(self.center, "center"))
        object.__setattr__(self, "half_width", check_real(self.half_width, "half_width", lo=0, lo_open=True))

    @property
    def support(self) -> tuple[float, float]:
        return (self.center - self.half_width, self.center + self.half_width)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        d2 = self.half_width**2
        u2 = (s - self.center) ** 2
        inside = u2 < d2
        out = np.zeros_like(s)
        out[inside] = np.exp(-d2 / (d2 - u2[inside]))
        return out if out.ndim else float(out)

    def mirrored(self) -> "BumpProfile":
        return BumpProfile(-self.center, self.half_width)

    def contains(self, s) -> bool:
        lo, hi = self.support
        return lo < s < hi


@dataclass(frozen=True)
class CutoffY:
    """Smooth step from 0 below ``lo`` to 1 above ``hi``."""

    lo: float = 1.0
    hi: float = 2.0

    def __call__(self, zeta):
        return smooth_step((np.asarray(zeta, dtype=float) - self.lo) / (self.hi - self.lo))


Y_CUTOFF = CutoffY()


def rolloff_window(zeta, zeta_max: float, frac: float):
    """1 below ``(1 - frac) zeta_max``, smoothly down to 0 at ``zeta_max``."""
    start = (1.0 - frac) * zeta_max
    return 1.0 - smooth_step((np.asarray(zeta, dtype=float) - start) / (frac * zeta_max))


_MODES = ("half_wave", "full_wave")


def _sign(value) -> int:
    if value in (1, "+", "+1", "plus"):
        return 1
    if value in (-1, "-", "-1", "minus"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {value!r}")


@dataclass(frozen=True)
class PacketSpec:
    """Martinet wave packet: bump in ``eta_1``, eigen index, truncation and variants."""

    bump: BumpProfile
    k: int = 1
    zeta_max: float = 2000.0
    rolloff_frac: float = 0.25
    z0: float = 0.0
    zeta_sign: int = 1
    mode: str = "half_wave"

    def __post_init__(self):
        if not isinstance(self.bump, BumpProfile):
            raise TypeError("bump must be a BumpProfile")
        object.__setattr__(self, "k", check_int(self.k, "k", lo=1))
        object.__setattr__(self, "zeta_max", check_real(self.zeta_max, "zeta_max", lo=100))
        object.__setattr__(self, "rolloff_frac",
                           check_real(self.rolloff_frac, "rolloff_frac", lo=0, hi=0.5, lo_open=True, hi_open=True))
        object.__setattr__(self, "z0", check_real(self.z0, "z0"))
        object.__setattr__(self, "zeta_sign", _sign(self.zeta_sign))
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")

    @property
    def mu_window(self) -> tuple[float, float]:
        """Oscillator parameters reached by the packet."""
        lo, hi = self.bump.support
        return (lo, hi) if self.zeta_sign > 0 else (-hi, -lo)

    def speed_interval(self, table=None, tol: float = DEFAULT_TOL) -> tuple[float, float]:
        """Range of ``dy/dt`` over the support: ``F'(I)``, or ``-F'(-I)`` for ``zeta < 0``."""
        basis = packet_basis(self, table, tol)
        mus = np.linspace(*self.mu_window, 2001)
        v = self.zeta_sign * basis.Fprime(mus)
        return (float(v.min()), float(v.max()))

    def replace(self, **changes) -> "PacketSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["zeta_sign"] = "+" if self.zeta_sign > 0 else "-"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PacketSpec":
        d = dict(d)
        bump = d.pop("bump")
        if not isinstance(bump, BumpProfile):
            bump = BumpProfile(**bump)
        unknown = set(d) - {"k", "zeta_max", "rolloff_frac", "z0", "zeta_sign", "mode"}
        if unknown:
            raise ValueError(f"unknown packet fields: {sorted(unknown)}")
        return cls(bump=bump, **d)


@dataclass(frozen=True)
class QuasiContactSpec:
    """Packet for the quasi-contact model, bump ``phi(eta_1) phi(zeta_1)`` in scaled variables.

    ``sigma`` is the frequency dual to the fourth coordinate ``s``; the fibre
    operator is a shifted harmonic oscillator with eigenvalue
    ``eta^2 + (2k - 1) sigma``.
    """

    bump_eta: BumpProfile
    bump_zeta: BumpProfile = BumpProfile(0.0, 1.0)
    k: int = 1
    sigma_max: float = 2000.0
    rolloff_frac: float = 0.25
    sigma_sign: int = 1
    mode: str = "half_wave"

    def __post_init__(self):
        object.__setattr__(self, "k", check_int(self.k, "k", lo=1))
        object.__setattr__(self, "sigma_max", check_real(self.sigma_max, "sigma_max", lo=100))
        object.__setattr__(self, "rolloff_frac",
                           check_real(self.rolloff_frac, "rolloff_frac", lo=0, hi=0.5, lo_open=True, hi_open=True))
        object.__setattr__(self, "sigma_sign", _sign(self.sigma_sign))
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")

    def omega(self, eta1):
        """Scaled dispersion ``sqrt(eta_1^2 + 2k - 1)``."""
        return np.sqrt(np.asarray(eta1, dtype=float) ** 2 + 2 * self.k - 1)

    def group_speed(self, eta1):
        return np.asarray(eta1, dtype=float) / self.omega(eta1)

    def speed_interval(self, table=None, tol: float = DEFAULT_TOL) -> tuple[float, float]:
        lo, hi = self.bump_eta.support
        return (float(self.group_speed(lo)), float(self.group_speed(hi)))

    def replace(self, **changes) -> "QuasiContactSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_sign"] = "+" if self.sigma_sign > 0 else "-"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuasiContactSpec":
        d = dict(d)
        for name in ("bump_eta", "bump_zeta"):
            if name in d and not isinstance(d[name], BumpProfile):
                d[name] = BumpProfile(**d[name])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class WindowBasis:
    """Chebyshev tables of ``F``, ``F'`` and ``psi_mu(0)`` over a packet's ``mu`` window."""

    k: int
    mu_min: float
    mu_max: float
    tol: float
    nodes: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)
    table: DispersionTable | None = field(default=None, repr=False)

    def _t(self, mu):
        mu = np.asarray(mu, dtype=float)
        span = self.mu_max - self.mu_min
        if np.any(mu < self.mu_min - 1e-12 * span) or np.any(mu > self.mu_max + 1e-12 * span):
            raise OutOfRange(f"mu outside packet window [{self.mu_min}, {self.mu_max}]")
        return np.clip((2.0 * mu - self.mu_min - self.mu_max) / span, -1.0, 1.0)

    def _eval(self, j, mu):
        out = C.chebval(self._t(mu), self.coef[j])
        return float(out) if np.ndim(out) == 0 else out

    def F(self, mu):
        return self.table.F(mu) if self.table is not None else self._eval(0, mu)

    def Fprime(self, mu):
        return self.table.Fprime(mu) if self.table is not None else self._eval(1, mu)

    def Fsecond(self, mu):
        scale = 2.0 / (self.mu_max - self.mu_min)
        out = scale * C.chebval(self._t(mu), C.chebder(self.coef[1]))
        return float(out) if np.ndim(out) == 0 else out

    def psi0(self, mu):
        return self._eval(2, mu)

    def psi_scaled(self, mus, u):
        """``psi_mu(u)`` for each ``mu`` (columns) at points ``u`` (rows); zero off the grid."""
        u = np.asarray(u, dtype=float)
        return np.column_stack([eigenpair(float(m), self.k, self.tol)(u) for m in np.atleast_1d(mus)])


def _basis_values(mus, k, tol):
    out = np.empty((len(mus), 3))
    for i, m in enumerate(mus):
        pair = eigenpair(float(m), k, tol)
        F = np.sqrt(pair.lambda_)
        out[i] = (F, hellmann_feynman(pair) / (2.0 * F), pair.psi_at_zero)
    return out


@lru_cache(maxsize=64)
def window_basis(k: int, mu_min: float, mu_max: float, tol: float = DEFAULT_TOL) -> WindowBasis:
    nodes, vals = adaptive_lobatto(lambda m: _basis_values(m, k, tol), mu_min, mu_max, 33, BASIS_TOL, 1025)
    coef = np.vstack([cheb_coefficients(vals[:, j]) for j in range(3)])
    return WindowBasis(k=k, mu_min=mu_min, mu_max=mu_max, tol=tol, nodes=nodes, coef=coef)


def packet_basis(spec: PacketSpec, table: DispersionTable | None = None, tol: float = DEFAULT_TOL) -> WindowBasis:
    """Eigen data over the packet's window; ``F`` and ``F'`` come from ``table`` when given."""
    lo, hi = spec.mu_window
    basis = window_basis(spec.k, lo, hi, tol)
    if table is None:
        return basis
    if table.k != spec.k:
        raise ValueError(f"table is for k={table.k}, packet uses k={spec.k}")
    if lo < table.mu_min or hi > table.mu_max:
        raise OutOfRange(f"packet window [{lo}, {hi}] not inside table [{table.mu_min}, {table.mu_max}]")
    return replace(basis, table=table)


@dataclass
class FieldSlice:
    """Samples of a field on a tensor grid.

    ``axes`` lists the sampled coordinates in storage order and ``fixed``
    holds the values of the others. A spectral slice has a last axis named
    ``zeta`` (or ``sigma``) carrying quadrature nodes, with ``weights``.
    """

    t: float
    axes: tuple
    grids: dict
    fixed: dict
    values: np.ndarray
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def spectral_axis(self) -> str | None:
        return self.axes[-1] if self.weights is not None else None

    def grid(self, name):
        return self.grids[name]

    def rows(self):
        mesh = np.meshgrid(*[self.grids[a] for a in self.axes], indexing="ij")
        flat = [m.ravel() for m in mesh]
        vals = self.values.ravel()
        fixed = [self.fixed[k] for k in sorted(self.fixed)]
        for i in range(vals.size):
            v = vals[i]
            yield [*(f[i] for f in flat), *fixed, float(v.real), float(v.imag), float(abs(v))]

    def header(self):
        return [*self.axes, *sorted(self.fixed), "re", "im", "abs"]

    def to_csv(self, path=None):
        text = csv_text(self.header(), self.rows())
        return atomic_write_text(path, text) if path is not None else text

    def to_dict(self) -> dict:
        d = {
            "t": self.t, "axes": list(self.axes), "fixed": self.fixed,
            "grids": {a: self.grids[a] for a in self.axes},
            "re": self.values.real, "im": self.values.imag, "meta": self.meta,
        }
        if self.weights is not None:
            d["weights"] = self.weights
        return d

    def to_json(self, path=None):
        text = json_text(self.to_dict())
        return atomic_write_text(path, text) if path is not None else text


def _parse_grid(grid, names, spectral_name=None):
    grids, fixed = {}, {}
    unknown = set(grid) - set(names)
    if unknown:
        raise ValueError(f"unknown grid axes {sorted(unknown)}; allowed {list(names)}")
    for name in names:
        if name not in grid:
            if name != spectral_name:
                fixed[name] = 0.0
            continue
        if spectral_name == name:
            raise ValueError(f"axis {name!r} is replaced by its frequency in spectral mode")
        v = np.asarray(grid[name], dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"grid axis {name!r} has non-finite values")
        if v.ndim == 0:
            fixed[name] = float(v)
        elif v.ndim == 1 and v.size:
            grids[name] = v
        else:
            raise ValueError(f"grid axis {name!r} must be a scalar or a non-empty 1-D array")
    axes = tuple(n for n in names if n in grids)
    return axes, grids, fixed


def _values(axes, grids, fixed, name):
    return grids[name] if name in grids else np.array([fixed[name]])


def _eta_count(delta, s_max, extent, refine, floor=MIN_ETA_NODES):
    return refine * max(floor, math.ceil(16 + 8 * delta * s_max * extent))


def _z_sum(g, w, freq, zrel):
    """``sum_j w_j g[j, p] exp(i freq_j z)`` for every column ``p`` and ``z``."""
    out = np.zeros((g.shape[1], zrel.size), dtype=complex)
    for b in range(0, freq.size, _BLOCK):
        E = np.exp(1j * np.outer(freq[b:b + _BLOCK], zrel))
        out += (g[b:b + _BLOCK] * w[b:b + _BLOCK, None]).T @ E
    return out


def _outer_rule(zeta_max, frac, spectral, reach, rate, refine):
    """Nodes ``zeta``, weights and ``Y W zeta^(1/2)`` for the vertical-frequency integral."""
    if spectral:
        s_max = zeta_max ** (1.0 / 3.0)
        s, ws, m = panel_rule(1.0, s_max, np.pi / (4.0 * max(rate, 1.0)) / refine, anchored=True)
        zeta = s**3
        w = 3.0 * s * s * ws
    else:
        zeta, w, m = panel_rule(1.0, zeta_max, np.pi / (4.0 * max(reach, 1.0)) / refine, anchored=True)
    amp = Y_CUTOFF(zeta) * rolloff_window(zeta, zeta_max, frac) * np.sqrt(zeta)
    return zeta, w, amp, m


def _phase_sums(P, s, eta, ys):
    """``sum_j P[:, j] exp(i y s eta_j)`` for every ``y`` in ``ys``, as columns.

    On a uniform ``ys`` the phase factors advance by one complex multiply per
    step and are recomputed exactly every 32 steps.
    """
    base = np.outer(s, eta)
    out = np.empty((s.size, ys.size), dtype=complex)
    uniform = ys.size > 2 and np.allclose(np.diff(ys), ys[1] - ys[0], rtol=1e-12, atol=0)
    step = np.exp(1j * (ys[1] - ys[0]) * base) if uniform else None
    E = None
    for m, y in enumerate(ys):
        if step is None or m % 32 == 0:
            E = np.exp(1j * y * base)
        else:
            E *= step
        out[:, m] = np.einsum("ij,ij->i", P, E)
    return out


def _martinet_inner(spec, basis, s, x, ys, t, eta, weta):
    """``sum_j w_j phi_j psi_{mu_j}(s x) exp(-i s (t F_j - y eta_j))`` for all ``s`` and ``y``."""
    mu = spec.zeta_sign * eta
    F = basis.F(mu)
    out = np.empty((s.size, ys.size), dtype=complex)
    psi0 = None if x != 0.0 else basis.psi0(mu)
    for b in range(0, s.size, _BLOCK):
        sb = s[b:b + _BLOCK]
        psi = psi0[None, :] if psi0 is not None else basis.psi_scaled(mu, sb * x)
        P = (weta * psi) * np.exp(-1j * t * np.outer(sb, F))
        out[b:b + _BLOCK] = _phase_sums(P, sb, eta, ys)
    return out


def _martinet_once(spec, basis, axes, grids, fixed, t, spectral, refine, min_eta=MIN_ETA_NODES):
    xs = _values(axes, grids, fixed, "x")
    ys = _values(axes, grids, fixed, "y")
    times = [t] if spec.mode == "half_wave" else [t, -t]
    ext = abs(t) + float(np.max(np.abs(ys)))
    s_max = spec.zeta_max ** (1.0 / 3.0)
    delta = spec.bump.half_width
    n_eta = _eta_count(delta, s_max, ext, refine, min_eta)
    eta, w = gl_rule(*spec.bump.support, n_eta)
    weta = w * spec.bump(eta)
    if spectral:
        zrel = None
        reach = 0.0
    else:
        zrel = _values(axes, grids, fixed, "z") - spec.z0
        reach = float(np.max(np.abs(zrel)))
    rate = 2.0 * delta * ext + 4.0 * float(np.max(np.abs(xs))) + 1.0
    zeta, wz, amp, n_panels = _outer_rule(spec.zeta_max, spec.rolloff_frac, spectral, reach, rate, refine)
    s = np.cbrt(zeta)
    freq = spec.zeta_sign * zeta
    shape = [xs.size, ys.size, zeta.size if spectral else zrel.size]
    vals = np.empty(shape, dtype=complex)
    for i, x in enumerate(xs):
        g = sum(_martinet_inner(spec, basis, s, float(x), ys, tau, eta, weta) for tau in times) / len(times)
        g *= amp[:, None]
        if spectral:
            vals[i] = (g * np.exp(-1j * spec.z0 * freq)[:, None]).T
        else:
            vals[i] = _z_sum(g, wz, freq, zrel)
    meta = {"zeta_max": spec.zeta_max, "n_eta": n_eta, "n_zeta": int(zeta.size), "n_panels": n_panels,
            "refine": refine, "spectral": spectral, "spec": spec.to_dict()}
    return _assemble(t, axes, grids, fixed, vals, "x", "y", "zeta" if spectral else "z", zeta, wz, spectral, meta)


def _assemble(t, axes, grids, fixed, vals, a, b, c, nodes, w, spectral, meta):
    """Drop singleton storage axes that were fixed values and attach the spectral axis."""
    names = [a, b, c]
    keep = [n for n in names if n in grids or (spectral and n == c)]
    squeeze = tuple(i for i, n in enumerate(names) if n not in keep)
    values = vals.reshape(vals.shape)
    if squeeze:
        values = values.squeeze(axis=squeeze)
    grids = dict(grids)
    weights = None
    if spectral:
        grids[c] = nodes
        weights = w
    return FieldSlice(t=float(t), axes=tuple(keep), grids=grids, fixed=dict(fixed), values=values,
                      weights=weights, meta=meta)


def _check_resolution(coarse: FieldSlice, fine: FieldSlice):
    if coarse.weights is None:
        a, b = coarse.values, fine.values
    else:
        # nodes differ between the rules; compare the z-energy at each spatial point
        a = np.sqrt(2 * np.pi * np.sum(coarse.weights * np.abs(coarse.values) ** 2, axis=-1))
        b = np.sqrt(2 * np.pi * np.sum(fine.weights * np.abs(fine.values) ** 2, axis=-1))
    scale = float(np.max(np.abs(b)))
    change = float(np.max(np.abs(a - b))) / scale if scale > 0 else 0.0
    coarse.meta["resolution_change"] = change
    if change > RESOLUTION_TOL:
        raise ResolutionError(f"doubling the node counts changed the field by {change:.3g} of its maximum")


def synthesize(spec: PacketSpec, grid: dict, t: float = 0.0, *, table: DispersionTable | None = None,
               spectral: bool = False, check_resolution: bool = False, tol: float = DEFAULT_TOL,
               min_eta_nodes: int = MIN_ETA_NODES) -> FieldSlice:
    """Propagated Martinet packet ``U(t) u0`` on a tensor grid.

    Parameters
    ----------
    spec : PacketSpec
    grid : dict
        Keys among ``x``, ``y``, ``z``; arrays become axes, scalars are held
        fixed and missing keys default to 0. In spectral mode ``z`` must be
        absent; the slice gets a ``zeta`` axis instead.
    t : float
        Time. ``t = 0`` gives the datum ``u0``.
    table : DispersionTable, optional
        Source of ``F`` and ``F'``; must cover the packet's window.
    check_resolution : bool
        Recompute with every node count doubled and raise
        :class:`ResolutionError` if any sample moves by more than ``1e-4``
        of the largest modulus.
    min_eta_nodes : int
        Lower bound on the inner node count; lets runs at different
        ``zeta_max`` share one inner rule.
    """
    t = check_real(t, "t")
    axes, grids, fixed = _parse_grid(grid, ("x", "y", "z"), "z" if spectral else None)
    basis = packet_basis(spec, table, tol)
    out = _martinet_once(spec, basis, axes, grids, fixed, t, spectral, 1, min_eta_nodes)
    if check_resolution:
        _check_resolution(out, _martinet_once(spec, basis, axes, grids, fixed, t, spectral, 2, min_eta_nodes))
    return out


def evaluate_points(spec: PacketSpec, points, t: float = 0.0, *, table=None, tol: float = DEFAULT_TOL):
    """Field values at scattered ``(x, y, z)`` points."""
    P = check_points(points, 3, name="points")
    t = check_real(t, "t")
    basis = packet_basis(spec, table, tol)
    out = np.empty(P.shape[0], dtype=complex)
    for j, (x, y, z) in enumerate(P):
        f = _martinet_once(spec, basis, (), {}, {"x": x, "y": y, "z": z}, t, False, 1)
        out[j] = f.values.ravel()[0]
    return out


def fourier_eigenfunction(pair, p):
    """``Psi(p) = (2 pi)^-1 int psi(x) exp(-i x p) dx`` from the grid eigenfunction."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x, h, psi = pair.x, pair.spacing, pair.psi
    out = np.empty(p.size, dtype=complex)
    for b in range(0, p.size, 256):
        out[b:b + 256] = h * (np.exp(-1j * np.outer(p[b:b + 256], x)) @ psi) / (2 * np.pi)
    return out


def fourier_floor(pair) -> float:
    """Rounding level of :func:`fourier_eigenfunction`."""
    return float(16 * np.finfo(float).eps * pair.spacing * np.sum(np.abs(pair.psi)) / (2 * np.pi))


def fourier_datum(spec: PacketSpec, xi: float, eta: float, zeta: float, t: float = 0.0, *,
                  table: DispersionTable | None = None, tol: float = DEFAULT_TOL) -> complex:
    """Full Fourier transform of ``U(t) u0`` at ``(xi, eta, zeta)``.

    Computed from the scaling structure: with ``s = |zeta|^(1/3)`` and
    ``mu = eta / s``, the value is
    ``Y(|zeta|) phi(mu) s^(-1/2) Psi_mu(xi / s) exp(-i t s F(mu))``. The
    factor ``s^(-1/2) = |zeta|^(-1/6)`` comes from transforming the
    ``L^2``-normalised ``|zeta|^(1/6) psi_mu(s x)`` in ``x``.

    Raises
    ------
    OutOfDomain
        If ``zeta`` has the wrong sign for the packet.
    OutOfRange
        If ``mu`` is in the bump support but outside ``table``.
    """
    xi, eta, zeta, t = (check_real(v, n) for v, n in ((xi, "xi"), (eta, "eta"), (zeta, "zeta"), (t, "t")))
    if zeta * spec.zeta_sign <= 0:
        raise OutOfDomain(f"zeta={zeta} has the wrong sign for this packet")
    az = abs(zeta)
    Y = float(Y_CUTOFF(az))
    if Y == 0.0:
        return 0j
    s = np.cbrt(az)
    eta1 = eta / s
    phi = spec.bump(eta1)
    if phi == 0.0:
        return 0j
    mu = spec.zeta_sign * eta1
    if table is not None:
        if not table.mu_min <= mu <= table.mu_max:
            raise OutOfRange(f"mu={mu} outside table [{table.mu_min}, {table.mu_max}]")
        F = table.F(mu)
    else:
        F = None
    pair = eigenpair(mu, spec.k, tol)
    if F is None:
        F = math.sqrt(pair.lambda_)
    Psi = fourier_eigenfunction(pair, xi / s)[0]
    if spec.mode == "half_wave":
        phase = np.exp(-1j * t * s * F)
    else:
        phase = math.cos(t * s * F)
    return complex(Y * phi * Psi * phase * np.exp(-1j * spec.z0 * zeta) / math.sqrt(s))


def k_integral(spec: PacketSpec, t: float, c: float, zeta: float, *, table: DispersionTable | None = None,
               tol: float = DEFAULT_TOL, refine: int = 1) -> complex:
    """``K(zeta) = int phi(eta) psi_eta(0) exp(-i zeta^(1/3) t (F(eta) - F'(c) eta)) d eta``."""
    t = check_real(t, "t")
    if t == 0.0:
        raise ValueError("t must be nonzero")
    c = check_real(c, "c")
    zeta = check_real(zeta, "zeta", lo=0, lo_open=True)
    if spec.zeta_sign != 1:
        raise ValueError("k_integral is defined for zeta > 0 packets")
    if not spec.bump.contains(c):
        raise OutOfDomain(f"c={c} is not interior to the bump support {spec.bump.support}")
    basis = packet_basis(spec, table, tol)
    f2 = basis.Fsecond(c)
    if abs(f2) < 1e-6:
        raise DegeneratePhase(f"|F''({c})| = {abs(f2):.3g} < 1e-6")
    s = np.cbrt(zeta)
    n = _eta_count(spec.bump.half_width, s, abs(t), refine)
    eta, w = gl_rule(*spec.bump.support, n)
    F = basis.F(eta)
    phase = np.exp(-1j * s * t * (F - basis.Fprime(c) * eta))
    return complex(np.sum(w * spec.bump(eta) * basis.psi0(eta) * phase))


def _quasi_once(spec: QuasiContactSpec, axes, grids, fixed, t, spectral, refine):
    xs = _values(axes, grids, fixed, "x")
    ys = _values(axes, grids, fixed, "y")
    zs = _values(axes, grids, fixed, "z")
    times = [t] if spec.mode == "half_wave" else [t, -t]
    sgn = spec.sigma_sign
    r_max = math.sqrt(spec.sigma_max)
    d1, d2 = spec.bump_eta.half_width, spec.bump_zeta.half_width
    ext_y = abs(t) + float(np.max(np.abs(ys)))
    ext_z = float(np.max(np.abs(zs)))
    n_eta = _eta_count(d1, r_max, ext_y, refine)
    n_zeta = _eta_count(d2, r_max, ext_z, refine)
    eta, we = gl_rule(*spec.bump_eta.support, n_eta)
    zet, wz1 = gl_rule(*spec.bump_zeta.support, n_zeta)
    weta = we * spec.bump_eta(eta)
    wzet = wz1 * spec.bump_zeta(zet)
    omega = spec.omega(eta)
    if spectral:
        rate = 2.0 * d1 * ext_y + 2.0 * d2 * ext_z + 4.0 * float(np.max(np.abs(xs))) + 1.0
        r, wr, n_panels = panel_rule(1.0, r_max, np.pi / (4.0 * rate) / refine, anchored=True)
        sigma = r * r
        w = 2.0 * r * wr
        srel = None
    else:
        srel = _values(axes, grids, fixed, "s")
        reach = max(float(np.max(np.abs(srel))), 1.0)
        sigma, w, n_panels = panel_rule(1.0, spec.sigma_max, np.pi / (4.0 * reach) / refine, anchored=True)
        r = np.sqrt(sigma)
    amp = Y_CUTOFF(sigma) * rolloff_window(sigma, spec.sigma_max, spec.rolloff_frac) * sigma**1.25
    freq = sgn * sigma
    n_last = sigma.size if spectral else srel.size
    vals = np.empty((xs.size, ys.size, zs.size, n_last), dtype=complex)
    for i, x in enumerate(xs):
        for k, z in enumerate(zs):
            # zeta_1 factor: Hermite mode centred at sgn * zeta_1, transverse phase exp(i r z zeta_1)
            B = np.empty(r.size, dtype=complex)
            A = np.zeros((r.size, ys.size), dtype=complex)
            for b in range(0, r.size, _BLOCK):
                rb = r[b:b + _BLOCK]
                herm = hermite_function(np.subtract.outer(rb * x, sgn * zet), spec.k)
                B[b:b + _BLOCK] = (herm * np.exp(1j * z * np.outer(rb, zet))) @ wzet
                for tau in times:
                    P = weta * np.exp(-1j * tau * np.outer(rb, omega))
                    A[b:b + _BLOCK] += _phase_sums(P, rb, eta, ys)
            g = (A / len(times)) * (amp * B)[:, None]
            vals[i, :, k] = g.T if spectral else _z_sum(g, w, freq, srel)
    meta = {"sigma_max": spec.sigma_max, "n_eta": n_eta, "n_zeta": n_zeta, "n_sigma": int(sigma.size),
            "n_panels": n_panels, "refine": refine, "spectral": spectral, "spec": spec.to_dict()}
    names = ["x", "y", "z", "sigma" if spectral else "s"]
    keep = [n for n in names if n in grids or (spectral and n == "sigma")]
    squeeze = tuple(i for i, n in enumerate(names) if n not in keep)
    values = vals.squeeze(axis=squeeze) if squeeze else vals
    grids = dict(grids)
    weights = None
    if spectral:
        grids["sigma"] = sigma
        weights = w
    return FieldSlice(t=float(t), axes=tuple(keep), grids=grids, fixed=dict(fixed), values=values,
                      weights=weights, meta=meta)


def quasi_contact_synthesize(spec: QuasiContactSpec, grid: dict, t: float = 0.0, *, spectral: bool = False,
                             check_resolution: bool = False) -> FieldSlice:
    """Propagated quasi-contact packet with analytic eigen data.

    Grid keys are among ``x``, ``y``, ``z``, ``s``. With ``r = sigma^(1/2)``
    the integrand is
    ``Y W sigma^(5/4) phi(eta_1) phi(zeta_1) h_k(r x - zeta_1)
    exp(i r (y eta_1 + z zeta_1 - t omega(eta_1))) exp(i s sigma)``,
    where ``h_k`` is the normalised Hermite function. In spectral mode the
    ``s`` sum is replaced by a ``sigma`` axis with weights.
    """
    t = check_real(t, "t")
    axes, grids, fixed = _parse_grid(grid, ("x", "y", "z", "s"), "s" if spectral else None)
    out = _quasi_once(spec, axes, grids, fixed, t, spectral, 1)
    if check_resolution:
        _check_resolution(out, _quasi_once(spec, axes, grids, fixed, t, spectral, 2))
    return out


class WavePacket(BaseEstimator, TransformerMixin):
    """Estimator view of a Martinet packet at a fixed time.

    ``fit`` prepares the eigen data over the packet window; ``transform``
    maps an ``(n, 3)`` array of ``(x, y, z)`` points to complex field values.
    """

    def __init__(self, center=5.0, half_width=0.25, k=1, zeta_max=2000.0, rolloff_frac=0.25, z0=0.0,
                 zeta_sign="+", mode="half_wave", t=0.0, tol=DEFAULT_TOL):
        self.center = center
        self.half_width = half_width
        self.k = k
        self.zeta_max = zeta_max
        self.rolloff_frac = rolloff_frac
        self.z0 = z0
        self.zeta_sign = zeta_sign
        self.mode = mode
        self.t = t
        self.tol = tol

    def _spec(self):
        return PacketSpec(BumpProfile(self.center, self.half_width), k=self.k, zeta_max=self.zeta_max,
                          rolloff_frac=self.rolloff_frac, z0=self.z0, zeta_sign=self.zeta_sign, mode=self.mode)

    def fit(self, X=None, y=None):
        self.spec_ = self._spec()
        self.basis_ = packet_basis(self.spec_, None, self.tol)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        return evaluate_points(self.spec_, X, self.t, tol=self.tol)

    def synthesize(self, grid, **kwargs):
        check_is_fitted(self, "spec_")
        return synthesize(self.spec_, grid, self.t, tol=self.tol, **kwargs)
