"""Non-stationary doubly dispersive channel.

Each local stationarity region (LSR) is WSSUS with an exponential power
delay profile and a U-shaped (isotropic scattering) Doppler spectrum.  A
realization is a tapped delay line on the sampling grid whose taps are sums
of equal-power complex sinusoids with Doppler ``f_max cos(theta)``.
Consecutive LSRs draw independent realizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .waveform import BasebandSignal

__all__ = [
    "LsrParams",
    "NsddChannelSpec",
    "ChannelRealization",
    "scattering_function",
    "delay_profile",
    "realize_lsr_channel",
    "apply_channel",
    "add_awgn",
]

# delay profile truncation, in units of tau_rms
DELAY_SPAN = 10.0


@dataclass(frozen=True)
class LsrParams:
    """Scattering statistics of one LSR.

    ``num_taps`` caps the number of delay taps; when ``10 tau_rms`` spans
    more samples than that, taps are spaced several samples apart.
    """

    tau_rms: float
    f_max: float
    num_taps: int = 64
    num_doppler_components: int = 16
    seed: int = 0

    def __post_init__(self):
        if not (self.tau_rms > 0 and self.f_max > 0):
            raise ValueError(f"tau_rms and f_max must be positive, got {self.tau_rms}, {self.f_max}")
        if self.spread_factor >= 0.1:
            raise ValueError(f"channel spread factor {self.spread_factor:g} is not underspread (< 0.1)")
        if self.num_taps < 8:
            raise ValueError(f"num_taps must be >= 8, got {self.num_taps}")
        if self.num_doppler_components < 16:
            raise ValueError(
                f"num_doppler_components must be >= 16, got {self.num_doppler_components}"
            )

    @property
    def spread_factor(self) -> float:
        return self.tau_rms * self.f_max


@dataclass(frozen=True)
class NsddChannelSpec:
    lsrs: tuple
    snr_db: float
    lsr_duration: float = 1e-2

    def __post_init__(self):
        object.__setattr__(self, "lsrs", tuple(self.lsrs))
        if not self.lsrs:
            raise ValueError("at least one LSR is required")
        if not self.lsr_duration > 0:
            raise ValueError(f"lsr_duration must be positive, got {self.lsr_duration}")

    @property
    def sigma_w2(self) -> float:
        """Noise power for unit symbol power."""
        return 10.0 ** (-self.snr_db / 10.0)

    def check_lsr_duration(self, T: float):
        if self.lsr_duration < 10 * T:
            raise ValueError(
                f"LSR duration {self.lsr_duration:g} s is shorter than 10 symbol periods ({10 * T:g} s)"
            )


def scattering_function(tau, nu, p: LsrParams):
    """Exponential-delay, U-shaped-Doppler scattering function.

    Zero outside ``tau >= 0, |nu| < f_max``.  Integrates to one.
    """
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    inside = (tau >= 0) & (np.abs(nu) < p.f_max)
    r = np.where(inside, nu / p.f_max, 0.0)
    with np.errstate(over="ignore"):
        val = np.exp(-np.where(inside, tau, 0.0) / p.tau_rms) / (
            np.pi * p.tau_rms * p.f_max * np.sqrt(1.0 - r**2)
        )
    return np.where(inside, val, 0.0)


def delay_profile(p: LsrParams, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Tap delays (integer samples) and mean tap powers summing to one.

    Taps cover ``[0, 10 tau_rms]``.  Each tap carries the exponential profile
    mass of the delay bin centred on it; tap 0 gets the half bin ``[0, s Ts/2]``.
    For taps k >= 1 the power is therefore proportional to
    ``exp(-tau_k / tau_rms)``.
    """
    n_span = int(np.ceil(DELAY_SPAN * p.tau_rms / Ts - 1e-9))
    spacing = max(1, int(np.ceil((n_span + 1) / p.num_taps)))
    delays = np.arange(0, n_span + 1, spacing)
    edges = np.concatenate([[0.0], (delays + spacing / 2) * Ts])
    mass = -np.diff(np.exp(-edges / p.tau_rms))
    return delays, mass / mass.sum()


@dataclass(frozen=True)
class ChannelRealization:
    """Tapped delay line with sum-of-sinusoids tap gains.

    Tap ``p`` has gain ``sum_q amplitudes[p, q] exp(j (2 pi doppler[p, q] t + phases[p, q]))``
    and delay ``delays[p] * Ts``.
    """

    delays: np.ndarray
    amplitudes: np.ndarray
    doppler: np.ndarray
    phases: np.ndarray
    Ts: float
    tap_powers: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("delays", "amplitudes", "doppler", "phases"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.amplitudes.shape != self.doppler.shape or self.doppler.shape != self.phases.shape:
            raise ValueError("amplitudes, doppler and phases must share a shape")
        if self.amplitudes.shape[0] != len(self.delays):
            raise ValueError("one component row per tap is required")
        if np.any(self.delays < 0):
            raise ValueError("tap delays must be non-negative")

    @classmethod
    def static(cls, delays, gains, Ts: float) -> "ChannelRealization":
        """Time-invariant channel with the given complex tap gains."""
        gains = np.asarray(gains, dtype=complex)
        return cls(
            delays=np.asarray(delays, dtype=int),
            amplitudes=np.abs(gains)[:, None],
            doppler=np.zeros((len(gains), 1)),
            phases=np.angle(gains)[:, None],
            Ts=Ts,
        )

    @classmethod
    def identity(cls, Ts: float) -> "ChannelRealization":
        return cls.static([0], [1.0], Ts)

    @property
    def max_delay(self) -> int:
        return int(self.delays.max())

    @property
    def taps(self) -> list:
        """``[(delay, [(amplitude, doppler_hz, phase), ...]), ...]``"""
        return [
            (int(d), list(zip(a.tolist(), f.tolist(), ph.tolist())))
            for d, a, f, ph in zip(self.delays, self.amplitudes, self.doppler, self.phases)
        ]

    def gains(self, t) -> np.ndarray:
        """(num_taps, len(t)) complex tap gains at times ``t``."""
        t = np.asarray(t, dtype=float)
        out = np.empty((len(self.delays), t.size), dtype=complex)
        for p in range(len(self.delays)):
            arg = 2 * np.pi * self.doppler[p, :, None] * t[None, :] + self.phases[p, :, None]
            out[p] = self.amplitudes[p] @ np.exp(1j * arg)
        return out


def realize_lsr_channel(p: LsrParams, Ts: float, *, rng: np.random.Generator | None = None,
                        duration: float | None = None) -> ChannelRealization:
    """Draw one channel realization for an LSR.

    Doppler frequencies are ``f_max cos(theta)`` with theta uniform, phases
    uniform, all components of a tap sharing its mean power equally.  Uses
    ``p.seed`` unless a generator is supplied.  With ``duration`` given, a
    delay span longer than the signal is rejected.
    """
    if rng is None:
        rng = np.random.default_rng(p.seed)
    delays, powers = delay_profile(p, Ts)
    if duration is not None and delays[-1] * Ts > duration:
        raise ValueError(
            f"delay span {delays[-1] * Ts:g} s exceeds signal duration {duration:g} s"
        )
    q = p.num_doppler_components
    theta = rng.uniform(0.0, 2 * np.pi, size=(len(delays), q))
    phases = rng.uniform(0.0, 2 * np.pi, size=(len(delays), q))
    amplitudes = np.repeat(np.sqrt(powers / q)[:, None], q, axis=1)
    return ChannelRealization(
        delays=delays,
        amplitudes=amplitudes,
        doppler=p.f_max * np.cos(theta),
        phases=phases,
        Ts=Ts,
        tap_powers=powers,
    )


def _convolve(x: np.ndarray, delays: np.ndarray, gains: np.ndarray) -> np.ndarray:
    y = np.zeros(len(x) + int(delays.max()), dtype=complex)
    for p, d in enumerate(delays):
        y[d:d + len(x)] += gains[p, d:d + len(x)] * x
    return y


def apply_channel(x: BasebandSignal, ch: ChannelRealization, gains: np.ndarray | None = None) -> BasebandSignal:
    """Time-varying convolution ``y[k] = sum_p gain_p(t_k) x[k - d_p]``.

    The output keeps the input's time origin and is longer by the maximum
    tap delay.  ``gains`` may hold precomputed ``ch.gains`` on the output
    time axis.
    """
    if abs(x.Ts - ch.Ts) > 1e-12 * x.Ts:
        raise ValueError(f"sampling interval mismatch: signal {x.Ts}, channel {ch.Ts}")
    if ch.max_delay >= len(x):
        raise ValueError(f"channel delay {ch.max_delay} samples exceeds signal length {len(x)}")
    n_out = len(x) + ch.max_delay
    if gains is None:
        gains = ch.gains(x.t0 + np.arange(n_out) * x.Ts)
    elif gains.shape != (len(ch.delays), n_out):
        raise ValueError(f"gains shape {gains.shape} does not match ({len(ch.delays)}, {n_out})")
    return BasebandSignal(_convolve(x.samples, ch.delays, gains), x.Ts, x.t0)


def add_awgn(x: BasebandSignal, sigma_w2: float, rng: np.random.Generator | int | None = None) -> BasebandSignal:
    """Add circular complex white Gaussian noise.

    The per-sample variance is ``sigma_w2 / Ts`` so that the projection onto
    any unit-energy pulse carries noise power ``sigma_w2``.
    """
    if sigma_w2 < 0:
        raise ValueError(f"sigma_w2 must be non-negative, got {sigma_w2}")
    if sigma_w2 == 0:
        return BasebandSignal(x.samples.copy(), x.Ts, x.t0)
    rng = np.random.default_rng(rng)
    scale = np.sqrt(sigma_w2 / x.Ts / 2)
    noise = scale * (rng.standard_normal(len(x)) + 1j * rng.standard_normal(len(x)))
    return BasebandSignal(x.samples + noise, x.Ts, x.t0)
