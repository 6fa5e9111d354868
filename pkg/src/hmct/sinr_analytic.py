"""Theoretical SINR of the projection receiver and its timing-offset optimum.

The receive prototype is psi(t) = g(t - dt).  For a WSSUS region with
scattering function C(tau, nu) the received signal energy is::

    S(dt)  = sc2 * int int C(tau, nu) |A(tau, nu)|^2

and the interference-plus-noise energy collects every other lattice point
of both cosets plus the noise term::

    IN(dt) = sc2 * int int C(tau, nu) [ sum_{(m,n) != 0} |A(mT + tau, nF + nu)|^2
                                      + sum_{(m,n)} |A((m+1/2)T + tau, (n+1/2)F + nu)|^2 ]
             + noise(dt)

Both are evaluated by tensor-product Gauss-Legendre quadrature.  The
Doppler axis uses nu = f_max sin(theta), which removes the endpoint
singularity of the U-shaped spectrum; the delay axis is split into panels
so that the exponential profile and the Gaussian lattice peaks are both
resolved.  Since |A|^2 factors into a delay and a Doppler Gaussian, the
lattice sums are formed per axis and the 2-D integrand is their outer
product.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import erfc, erfcx

from .channel import LsrParams, NsddChannelSpec
from .errors import ClosedFormInapplicable, QuadratureError
from .search import grid_golden_max
from .waveform import LatticeParams

log = logging.getLogger(__name__)

__all__ = [
    "NOISE_MODELS",
    "SinrConfig",
    "SinrRecord",
    "SinrReport",
    "UpperBound",
    "signal_energy",
    "interference_noise_energy",
    "sinr_theoretical",
    "sinr_factored",
    "sinr_upper_bound",
    "closed_form_offset",
    "max_sinr_offset",
    "erfc_approx",
    "objective_ab",
    "objective_factors",
    "objective_gradients",
    "objective_argmax",
    "sinr_report",
    "db",
]

NOISE_MODELS = ("as_printed", "unit_energy")

# relative change allowed when the quadrature order is doubled
QUAD_RTOL = 1e-8

# Coefficients of the quadratic obtained from the erfc approximation.
_C1 = 3.28
_C2 = 7.7184
_C3 = 3.8592


def db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SinrConfig:
    """System and numerical settings for the theoretical SINR.

    ``lattice_sum_extent`` is the number of lattice periods kept on each
    side of the channel-shifted origin; ``delay_order`` is the number of
    Gauss-Legendre nodes per delay panel and ``doppler_order`` the number
    of nodes on the Doppler axis.

    ``noise_model`` selects the noise term of the interference energy:
    ``as_printed`` uses ``sigma_w2 * |A(0, 0)|`` (which decays with the
    offset), ``unit_energy`` uses ``sigma_w2 * ||psi||^2 = sigma_w2``, the
    noise power a unit-energy receive pulse actually collects.
    """

    lattice: LatticeParams
    sigma: float
    sigma_c2: float = 1.0
    sigma_w2: float = 1e-3
    lattice_sum_extent: int = 3
    delay_order: int = 32
    doppler_order: int = 32
    noise_model: str = "unit_energy"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.sigma_c2 > 0 or self.sigma_w2 < 0:
            raise ValueError("sigma_c2 must be positive and sigma_w2 non-negative")
        if self.lattice_sum_extent < 2:
            raise ValueError("lattice_sum_extent must be >= 2")
        if self.delay_order < 32 or self.doppler_order < 32:
            raise ValueError("quadrature orders must be >= 32")
        if self.noise_model not in NOISE_MODELS:
            raise ValueError(f"noise_model must be one of {NOISE_MODELS}, got {self.noise_model!r}")

    @classmethod
    def from_snr(cls, lattice: LatticeParams, sigma: float, snr_db: float, **kw) -> "SinrConfig":
        sigma_c2 = kw.pop("sigma_c2", 1.0)
        return cls(lattice, sigma, sigma_c2=sigma_c2, sigma_w2=sigma_c2 * 10 ** (-snr_db / 10), **kw)

    @property
    def offset_search_max(self) -> float:
        return self.lattice.T / 2

    def doubled(self) -> "SinrConfig":
        return replace(self, delay_order=2 * self.delay_order, doppler_order=2 * self.doppler_order)


@lru_cache(maxsize=None)
def _legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _composite_legendre(edges: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _legendre(n)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _delay_edges(delta_t: float, lsr: LsrParams, sigma: float, T: float) -> np.ndarray:
    tau = lsr.tau_rms
    end = max(20 * tau, delta_t + 8 * math.sqrt(sigma / (2 * np.pi)))
    # fine panels where the exponential profile lives, coarse ones after
    near = min(end, 40 * tau)
    wide = T / 8
    h = min(wide, 4 * tau)
    edges = np.linspace(0.0, near, max(1, math.ceil(near / h)) + 1)
    if end > near:
        tail = np.linspace(near, end, max(1, math.ceil((end - near) / wide)) + 1)
        edges = np.concatenate([edges, tail[1:]])
    return edges


class _Terms(NamedTuple):
    tau: np.ndarray
    w_tau: np.ndarray      # raw Gauss-Legendre weights on the delay axis
    theta: np.ndarray
    w_theta: np.ndarray    # raw Gauss-Legendre weights on the theta axis
    f0: np.ndarray         # |A|^2 delay factor at the origin
    h0: np.ndarray         # |A|^2 Doppler factor at the origin
    f_rect: np.ndarray     # delay lattice sums, rectangular coset
    f_coset: np.ndarray
    h_rect: np.ndarray
    h_coset: np.ndarray


def _terms(delta_t: float, lsr: LsrParams, cfg: SinrConfig, delay_order: int,
           doppler_order: int, doppler_sign: float = 1.0) -> _Terms:
    T, F, sigma, E = cfg.lattice.T, cfg.lattice.F, cfg.sigma, cfg.lattice_sum_extent
    edges = _delay_edges(delta_t, lsr, sigma, T)
    tau, w_tau = _composite_legendre(edges, delay_order)
    x, w = _legendre(doppler_order)
    theta = 0.5 * np.pi * x
    w_theta = 0.5 * np.pi * w
    nu = doppler_sign * lsr.f_max * np.sin(theta)

    m = np.arange(math.floor((delta_t - edges[-1]) / T) - E - 1, math.ceil(delta_t / T) + E + 2)
    kf = math.ceil(lsr.f_max / F)
    n = np.arange(-kf - E - 1, kf + E + 2)

    def f(s):
        return np.exp(-np.pi * (s - delta_t) ** 2 / sigma)

    def h(s):
        return np.exp(-np.pi * sigma * s**2)

    return _Terms(
        tau=tau, w_tau=w_tau, theta=theta, w_theta=w_theta,
        f0=f(tau), h0=h(nu),
        f_rect=f(m[:, None] * T + tau).sum(axis=0),
        f_coset=f((m[:, None] + 0.5) * T + tau).sum(axis=0),
        h_rect=h(n[:, None] * F + nu).sum(axis=0),
        h_coset=h((n[:, None] + 0.5) * F + nu).sum(axis=0),
    )


def _density_weights(t: _Terms, lsr: LsrParams) -> tuple[np.ndarray, np.ndarray]:
    # scattering function folded into the weights; theta substitution makes
    # the Doppler density exactly 1/pi
    wd = t.w_tau * np.exp(-t.tau / lsr.tau_rms) / lsr.tau_rms
    wn = t.w_theta / np.pi
    return wd, wn


def _noise_term(delta_t: float, cfg: SinrConfig) -> float:
    if cfg.noise_model == "as_printed":
        return cfg.sigma_w2 * math.exp(-np.pi * delta_t**2 / (2 * cfg.sigma))
    return cfg.sigma_w2


def _energies(delta_t: float, lsr: LsrParams, cfg: SinrConfig, delay_order: int,
              doppler_order: int, doppler_sign: float = 1.0) -> tuple[float, float]:
    t = _terms(delta_t, lsr, cfg, delay_order, doppler_order, doppler_sign)
    wd, wn = _density_weights(t, lsr)
    own = np.outer(t.f0, t.h0)
    others = np.outer(t.f_rect, t.h_rect) - own + np.outer(t.f_coset, t.h_coset)
    s = cfg.sigma_c2 * (wd @ own @ wn)
    i = cfg.sigma_c2 * (wd @ others @ wn)
    return float(s), float(i + _noise_term(delta_t, cfg))


def _checked(fn, delta_t, lsr, cfg, doppler_sign=1.0):
    lo = fn(delta_t, lsr, cfg, cfg.delay_order, cfg.doppler_order, doppler_sign)
    hi = fn(delta_t, lsr, cfg, 2 * cfg.delay_order, 2 * cfg.doppler_order, doppler_sign)
    for a, b in zip(np.atleast_1d(lo), np.atleast_1d(hi)):
        if abs(a - b) > QUAD_RTOL * abs(b):
            raise QuadratureError(
                f"quadrature not converged at dt={delta_t:g}, tau_rms={lsr.tau_rms:g}: "
                f"{a!r} vs {b!r} after order doubling"
            )
    return lo


def signal_energy(delta_t: float, lsr: LsrParams, cfg: SinrConfig, *, check: bool = True) -> float:
    """Mean received energy of the desired symbol for offset ``delta_t``."""
    if check:
        return _checked(_energies, delta_t, lsr, cfg)[0]
    return _energies(delta_t, lsr, cfg, cfg.delay_order, cfg.doppler_order)[0]


def interference_noise_energy(delta_t: float, lsr: LsrParams, cfg: SinrConfig, *,
                              check: bool = True) -> float:
    """Mean interference energy from all other lattice symbols plus noise."""
    if check:
        return _checked(_energies, delta_t, lsr, cfg)[1]
    return _energies(delta_t, lsr, cfg, cfg.delay_order, cfg.doppler_order)[1]


def sinr_theoretical(delta_t: float, lsr: LsrParams, cfg: SinrConfig, *, check: bool = True) -> float:
    """Signal energy over interference-plus-noise energy (linear ratio)."""
    if check:
        s, i = _checked(_energies, delta_t, lsr, cfg)
    else:
        s, i = _energies(delta_t, lsr, cfg, cfg.delay_order, cfg.doppler_order)
    return s / i


def sinr_factored(delta_t: float, lsr: LsrParams, cfg: SinrConfig) -> float:
    """Same ratio with the numerator written as a product of 1-D integrals.

    Uses the raw (unnormalised) delay and Doppler integrals and the explicit
    ``1 / (pi tau_rms f_max)`` prefactor, on the same nodes as
    :func:`sinr_theoretical`.
    """
    t = _terms(delta_t, lsr, cfg, cfg.delay_order, cfg.doppler_order)
    delay_int = t.w_tau @ (np.exp(-t.tau / lsr.tau_rms) * t.f0)
    # dnu / sqrt(1 - (nu/f)^2) = f_max dtheta
    doppler_int = lsr.f_max * (t.w_theta @ t.h0)
    _, e_in = _energies(delta_t, lsr, cfg, cfg.delay_order, cfg.doppler_order)
    return cfg.sigma_c2 * delay_int * doppler_int / (np.pi * lsr.tau_rms * lsr.f_max * e_in)


class UpperBound(NamedTuple):
    delta_t: float
    sinr: float


def sinr_upper_bound(lsr: LsrParams, cfg: SinrConfig, *, n_grid: int = 64,
                     tol: float = 1e-11) -> UpperBound:
    """Maximum theoretical SINR over offsets in [0, T/2].

    The optimum depends on the noise power whenever the noise term depends
    on the offset (``noise_model="as_printed"``).
    """
    res = grid_golden_max(
        lambda d: sinr_theoretical(d, lsr, cfg, check=False),
        0.0, cfg.offset_search_max, n_grid=n_grid, tol=tol,
        label=f"SINR(tau_rms={lsr.tau_rms:g}, f_max={lsr.f_max:g})",
    )
    sinr_theoretical(res.x, lsr, cfg, check=True)
    return UpperBound(res.x, res.fx)


def closed_form_offset(sigma: float, tau_rms: float, form: str = "derived") -> float:
    """Closed-form Max-SINR timing offset for an exponential delay profile.

    With ``k = sqrt(sigma) / tau_rms`` the stationarity condition of the
    numerator surrogate, after the erfc approximation, is a quadratic in
    ``x = sqrt(2 pi / sigma) (sigma / (2 pi tau_rms) - dt)`` whose admissible
    root is ``x = (3.28 k - sqrt(3.28^2 k^2 - 7.7184 (k^2 - 4))) / 3.8592``.

    ``form="derived"`` returns ``sigma / (2 pi tau_rms) - sqrt(sigma / 2 pi) * x``.
    ``form="as_printed"`` puts the whole bracket under the square root,
    ``sigma / (2 pi tau_rms) - sqrt(sigma / 2 pi * 3.8592 x) / 3.8592``,
    which is kept for comparison only; it is orders of magnitude off.

    The result is clamped at zero.  Raises ClosedFormInapplicable when a
    radicand is negative or ``x < 0`` (the approximation needs a positive
    argument), which happens for ``tau_rms > sqrt(sigma) / 2``.
    """
    if not (sigma > 0 and tau_rms > 0):
        raise ValueError("sigma and tau_rms must be positive")
    if form not in ("derived", "as_printed"):
        raise ValueError(f"unknown form {form!r}")
    k2 = sigma / tau_rms**2
    inner = _C1**2 * k2 - _C2 * (k2 - 4)
    if inner < 0:
        raise ClosedFormInapplicable(f"negative inner radicand {inner:g}")
    bracket = _C1 * math.sqrt(k2) - math.sqrt(inner)
    if bracket < 0:
        raise ClosedFormInapplicable(
            f"negative outer radicand {bracket:g} (sigma/tau_rms^2 = {k2:g} <= 4)"
        )
    c = sigma / (2 * np.pi * tau_rms)
    if form == "derived":
        dt = c - math.sqrt(sigma / (2 * np.pi)) * bracket / _C3
    else:
        dt = c - math.sqrt(sigma / (2 * np.pi) * bracket) / _C3
    return max(dt, 0.0)


def erfc_approx(x):
    """Approximation of ``erfc(x / sqrt(2))`` for x > 0.

    ``2 exp(-x^2 / 2) / (1.64 x + sqrt(0.76 x^2 + 4))``
    """
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("erfc_approx requires x > 0")
    out = 2 * np.exp(-(x**2) / 2) / (1.64 * x + np.sqrt(0.76 * x**2 + 4))
    return out if out.ndim else float(out)


def objective_factors(delta_t, sigma: float, tau_rms: float):
    """The two factors ``a(dt) = exp(sigma / (4 pi tau^2) - dt / tau)`` and
    ``b(dt) = sqrt(sigma)/2 * erfc(sqrt(pi/sigma) (sigma / (2 pi tau) - dt))``.

    Their product is the delay integral of the SINR numerator
    ``int_0^inf exp(-t / tau) exp(-pi (t - dt)^2 / sigma) dt``.  ``a`` overflows
    once ``sigma / tau^2`` exceeds a few thousand; use :func:`objective_ab`
    for the product.
    """
    dt = np.asarray(delta_t, dtype=float)
    a = np.exp(sigma / (4 * np.pi * tau_rms**2) - dt / tau_rms)
    b = np.sqrt(sigma) / 2 * erfc(np.sqrt(np.pi / sigma) * (sigma / (2 * np.pi * tau_rms) - dt))
    return a, b


def objective_gradients(delta_t, sigma: float, tau_rms: float):
    """Closed-form derivatives ``(da/ddt, db/ddt) = (-a / tau, exp(-pi/sigma (sigma/(2 pi tau) - dt)^2))``."""
    a, _ = objective_factors(delta_t, sigma, tau_rms)
    c = sigma / (2 * np.pi * tau_rms)
    dt = np.asarray(delta_t, dtype=float)
    return -a / tau_rms, np.exp(-np.pi / sigma * (c - dt) ** 2)


def _log_objective(delta_t, sigma: float, tau_rms: float):
    # log(a b) = log(sqrt(sigma)/2) - pi dt^2 / sigma + log(erfcx(X)), X = sqrt(pi/sigma)(c - dt)
    dt = np.asarray(delta_t, dtype=float)
    X = np.sqrt(np.pi / sigma) * (sigma / (2 * np.pi * tau_rms) - dt)
    with np.errstate(over="ignore"):
        tail = np.where(X >= 0, np.log(erfcx(np.maximum(X, 0))), X**2 + np.log(erfc(np.minimum(X, 0))))
    return np.log(np.sqrt(sigma) / 2) - np.pi * dt**2 / sigma + tail


def objective_ab(delta_t, sigma: float, tau_rms: float):
    """``a(dt) * b(dt)`` with the exact erfc, evaluated without overflow."""
    if not (sigma > 0 and tau_rms > 0):
        raise ValueError("sigma and tau_rms must be positive")
    out = np.exp(_log_objective(delta_t, sigma, tau_rms))
    return out if np.ndim(out) else float(out)


def objective_argmax(sigma: float, tau_rms: float, t_max: float | None = None, *,
                     n_grid: int = 64, tol: float = 1e-12) -> float:
    """Numerical maximizer of :func:`objective_ab` over [0, t_max].

    The objective is log-concave, so the default ``t_max`` only has to
    contain the peak: ``max(sigma / (2 pi tau_rms), tau_rms) + 8 sqrt(sigma)``.
    """
    if not (sigma > 0 and tau_rms > 0):
        raise ValueError("sigma and tau_rms must be positive")
    if t_max is None:
        t_max = max(sigma / (2 * np.pi * tau_rms), tau_rms) + 8 * math.sqrt(sigma)
    res = grid_golden_max(lambda d: float(_log_objective(d, sigma, tau_rms)), 0.0, t_max,
                          n_grid=n_grid, tol=tol, label="a*b objective")
    return res.x


def max_sinr_offset(sigma: float, tau_rms: float, t_max: float | None = None) -> tuple[float, str]:
    """Closed-form offset, or the numerical objective argmax where it does not apply.

    Returns ``(offset, status)`` with status ``"closed_form"`` or
    ``"fallback_argmax"``.
    """
    try:
        return closed_form_offset(sigma, tau_rms), "closed_form"
    except ClosedFormInapplicable:
        return objective_argmax(sigma, tau_rms, t_max), "fallback_argmax"


@dataclass
class SinrRecord:
    G: float
    tau_rms: float
    f_max: float
    delta_t_tpr: float
    delta_t_closed: float
    delta_t_numeric: float
    sinr_tpr: float
    sinr_closed: float
    sinr_ub: float
    closed_status: str = "closed_form"

    @property
    def sinr_tpr_db(self) -> float:
        return float(db(self.sinr_tpr))

    @property
    def sinr_closed_db(self) -> float:
        return float(db(self.sinr_closed))

    @property
    def sinr_ub_db(self) -> float:
        return float(db(self.sinr_ub))

    def bound_chain_holds(self, slack_db: float = 1e-9) -> bool:
        return (self.sinr_ub_db >= self.sinr_closed_db - slack_db
                and self.sinr_closed_db >= self.sinr_tpr_db - slack_db)


@dataclass
class SinrReport:
    records: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def sinr_report(spec: NsddChannelSpec, cfg: SinrConfig) -> SinrReport:
    """TPR, closed-form and upper-bound SINR for every LSR of ``spec``.

    ``cfg.sigma_w2`` is used as given; ``spec.snr_db`` is not consulted.
    """
    report = SinrReport()
    for lsr in spec.lsrs:
        dt_closed, status = max_sinr_offset(cfg.sigma, lsr.tau_rms, cfg.offset_search_max)
        ub = sinr_upper_bound(lsr, cfg)
        report.records.append(SinrRecord(
            G=lsr.spread_factor,
            tau_rms=lsr.tau_rms,
            f_max=lsr.f_max,
            delta_t_tpr=0.0,
            delta_t_closed=dt_closed,
            delta_t_numeric=ub.delta_t,
            sinr_tpr=sinr_theoretical(0.0, lsr, cfg),
            sinr_closed=sinr_theoretical(dt_closed, lsr, cfg),
            sinr_ub=ub.sinr,
            closed_status=status,
        ))
    return report
