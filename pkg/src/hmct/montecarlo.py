"""End-to-end link simulation of the projection receiver over realized channels.

Every frame draws fresh QPSK symbols, one channel realization per LSR and
fresh noise, then projects the received signal with each receiver offset.
Signal and interference-plus-noise energies are pooled over the interior
lattice points of all frames.

Signal part of a symbol estimate: in ``per_symbol`` mode it is
``h[i,m,n] * c[i,m,n]`` where ``h`` is the exact response of the realized
channel and receive pulse to that symbol alone, so the residual is precisely
the interference from all other symbols plus noise.  ``scalar`` mode fits a
single least-squares gain per frame instead, which also counts channel
variation across the frame as interference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, NsddChannelSpec, add_awgn, apply_channel, delay_profile, realize_lsr_channel
from .waveform import LatticeParams, PrototypePulse, SymbolGrid, modulate, project, qpsk_grid, symbol_offsets

log = logging.getLogger(__name__)

__all__ = [
    "TrialConfig",
    "EmpiricalSinr",
    "interior_mask",
    "estimate_sinr",
    "effective_gains",
    "run_trial",
    "SINR_CAP_DB",
]

SINR_CAP_DB = 200.0
MIN_SYMBOLS = 100
GAIN_MODES = ("per_symbol", "scalar")


@dataclass(frozen=True)
class TrialConfig:
    lattice: LatticeParams
    pulse: PrototypePulse
    channel: NsddChannelSpec
    offsets: tuple
    num_frames: int = 20
    max_frames: int = 160
    ci_halfwidth_db: float = 0.2
    margin: int = 2
    seed: int = 0
    gain_mode: str = "per_symbol"
    sigma_c2: float = 1.0
    # replaces random realizations in every LSR, e.g. an identity channel
    fixed_channel: ChannelRealization | None = None

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(float(d) for d in self.offsets))
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        if self.max_frames < self.num_frames:
            raise ValueError("max_frames must be >= num_frames")
        if not self.offsets:
            raise ValueError("at least one receiver offset is required")
        for d in self.offsets:
            if not 0 <= d <= self.lattice.T / 2:
                raise ValueError(f"offset {d:g} outside [0, T/2]")
        if self.gain_mode not in GAIN_MODES:
            raise ValueError(f"gain_mode must be one of {GAIN_MODES}")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")

    @property
    def sigma_w2(self) -> float:
        return self.sigma_c2 * 10.0 ** (-self.channel.snr_db / 10.0)


@dataclass
class EmpiricalSinr:
    lsr_index: int
    offset: float
    h_eff: complex
    p_signal: float
    p_interf_noise: float
    sinr_db: float
    n_symbols: int
    n_frames: int = 1
    ci_halfwidth_db: float = math.inf
    warning: str | None = None
    frame_signal: np.ndarray = field(default=None, repr=False)
    frame_interf: np.ndarray = field(default=None, repr=False)

    @property
    def frame_sinr_db(self) -> np.ndarray:
        return 10 * np.log10(self.frame_signal / self.frame_interf)


def _to_db(p_signal: float, p_in: float) -> float:
    if p_in <= 0 or p_signal / p_in >= 10 ** (SINR_CAP_DB / 10):
        return SINR_CAP_DB
    return float(10 * np.log10(p_signal / p_in))


def interior_mask(lattice: LatticeParams, margin: int = 2, lead: int | None = None) -> np.ndarray:
    """(2, M, N) mask of lattice points at least ``margin`` rows/subcarriers
    from every grid edge and ``lead`` rows from the start of the frame."""
    lead = margin if lead is None else lead
    mask = np.zeros((2, lattice.M, lattice.N), dtype=bool)
    mask[:, lead:lattice.M - margin, margin:lattice.N - margin] = True
    return mask


def _frame_sums(tx: np.ndarray, rx: np.ndarray, gains: np.ndarray | None, sigma_c2: float):
    n = tx.size
    corr = np.vdot(tx, rx)
    if gains is None:
        signal = corr / (n * sigma_c2) * tx
    else:
        signal = gains * tx
    return (float(np.sum(np.abs(signal) ** 2)), float(np.sum(np.abs(rx - signal) ** 2)), n, corr)


def estimate_sinr(tx: SymbolGrid, rx: SymbolGrid, *, gains: np.ndarray | None = None,
                  mask: np.ndarray | None = None, margin: int = 2) -> EmpiricalSinr:
    """Empirical SINR of symbol estimates ``rx`` for transmitted ``tx``.

    Without ``gains`` a single effective gain
    ``h_eff = <rx, tx> / (n sigma_c2)`` is fitted over the interior points and
    ``p_signal = |h_eff|^2 sigma_c2``.  With ``gains`` (shape (2, M, N)) the
    per-symbol signal is ``gains * tx``.  An error-free estimate is reported
    at 200 dB.
    """
    if tx.shape != rx.shape:
        raise ValueError(f"shape mismatch: {tx.shape} vs {rx.shape}")
    if mask is None:
        M, N = tx.shape
        mask = np.zeros((2, M, N), dtype=bool)
        mask[:, margin:M - margin, margin:N - margin] = True
    c = tx.as_array()[mask]
    r = rx.as_array()[mask]
    g = None if gains is None else np.asarray(gains)[mask]
    n = c.size
    if n == 0:
        raise ValueError("no interior symbols")
    s, i, _, corr = _frame_sums(c, r, g, tx.sigma_c2)
    h_eff = complex(corr / (n * tx.sigma_c2))
    p_signal = abs(h_eff) ** 2 * tx.sigma_c2 if g is None else s / n
    p_in = i / n
    warning = None
    if n < MIN_SYMBOLS:
        warning = f"only {n} interior symbols; estimate is statistically weak"
    return EmpiricalSinr(lsr_index=0, offset=0.0, h_eff=h_eff, p_signal=p_signal,
                         p_interf_noise=p_in, sinr_db=_to_db(p_signal, p_in), n_symbols=n,
                         warning=warning, frame_signal=np.array([s]), frame_interf=np.array([i]))


def effective_gains(ch: ChannelRealization, lattice: LatticeParams, pulse: PrototypePulse,
                    delta_t: float, tap_gains: np.ndarray | None = None) -> np.ndarray:
    """Response of every receive pulse to its own transmitted symbol.

    Returns the (2, M, N) coefficients ``<H g_{m,n}^i, psi_{m,n}^i>`` for the
    frame layout produced by :func:`~hmct.waveform.modulate`.  ``tap_gains``
    may carry ``ch.gains`` sampled on the frame time axis.
    """
    Ts, Ng = pulse.Ts, pulse.Ng
    offsets = symbol_offsets(lattice, Ts)
    if tap_gains is None:
        t0 = -(Ng - 1) / 2 * Ts
        tap_gains = ch.gains(t0 + np.arange(offsets.max() + Ng) * Ts)
    psi = pulse.delayed(delta_t)
    window = offsets[:, :, None] + np.arange(Ng)
    W = np.zeros((len(ch.delays), 2, lattice.M), dtype=complex)
    for p, d in enumerate(ch.delays):
        if d >= Ng:
            continue
        kernel = np.zeros(Ng)
        kernel[d:] = pulse.samples[:Ng - d] * psi[d:]
        W[p] = tap_gains[p][window] @ kernel * Ts
    f = lattice.subcarrier_freqs
    phase = np.exp(-2j * np.pi * f[None, :, :] * (ch.delays * Ts)[:, None, None])
    return np.einsum("pim,pin->imn", W, phase)


def _halfwidth_db(s: np.ndarray, i: np.ndarray) -> float:
    n = len(s)
    if n < 2:
        return math.inf
    r = s.sum() / i.sum()
    if r <= 0 or not np.isfinite(r):
        return math.inf
    resid = s - r * i
    se = math.sqrt(n / (n - 1) * np.sum(resid**2)) / i.sum()
    return 1.96 * se / r * 10 / math.log(10)


def _frame_rngs(seed: int, lsr_index: int, lsr_seed: int, frame: int):
    ss = np.random.SeedSequence([int(seed), int(lsr_index), int(lsr_seed), int(frame)])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def run_trial(cfg: TrialConfig) -> list[EmpiricalSinr]:
    """Simulate every LSR of ``cfg.channel`` and return one record per (LSR, offset).

    Starts with ``num_frames`` frames (one channel realization each) and
    doubles the count until every offset's 95% confidence half-width is
    below ``ci_halfwidth_db`` or ``max_frames`` is reached.  Fully
    determined by ``cfg.seed`` and the LSR seeds.
    """
    lat, pulse = cfg.lattice, cfg.pulse
    Ts = pulse.Ts
    cfg.channel.check_lsr_duration(lat.T)
    sigma_w2 = cfg.sigma_w2
    frame_len = symbol_offsets(lat, Ts).max() + pulse.Ng
    records = []

    for li, lsr in enumerate(cfg.channel.lsrs):
        if cfg.fixed_channel is not None:
            dmax = cfg.fixed_channel.max_delay
        else:
            dmax = int(delay_profile(lsr, Ts)[0][-1])
        if (frame_len + dmax) * Ts > cfg.channel.lsr_duration:
            raise ValueError(
                f"frame of {(frame_len + dmax) * Ts:g} s exceeds the LSR duration "
                f"{cfg.channel.lsr_duration:g} s"
            )
        lead = cfg.margin + math.ceil(dmax * Ts / lat.T - 1e-9)
        mask = interior_mask(lat, cfg.margin, lead)
        if not mask.any():
            raise ValueError(
                f"no interior symbols: M={lat.M} too small for margin {cfg.margin} "
                f"and a {dmax}-sample delay spread"
            )

        sums = {d: [] for d in cfg.offsets}
        done, target = 0, cfg.num_frames
        while True:
            for f in range(done, target):
                rng_sym, rng_ch, rng_noise = _frame_rngs(cfg.seed, li, lsr.seed, f)
                grid = qpsk_grid(lat.M, lat.N, rng_sym, cfg.sigma_c2)
                x = modulate(grid, lat, pulse)
                ch = cfg.fixed_channel or realize_lsr_channel(lsr, Ts, rng=rng_ch)
                tap_gains = ch.gains(x.t0 + np.arange(len(x) + ch.max_delay) * Ts)
                y = add_awgn(apply_channel(x, ch, gains=tap_gains), sigma_w2, rng_noise)
                tx = grid.as_array()[mask]
                for d in cfg.offsets:
                    rx = project(y, lat, pulse, d).as_array()[mask]
                    gains = None
                    if cfg.gain_mode == "per_symbol":
                        gains = effective_gains(ch, lat, pulse, d, tap_gains)[mask]
                    sums[d].append(_frame_sums(tx, rx, gains, cfg.sigma_c2))
            done = target
            hw = max(_halfwidth_db(np.array([s[0] for s in sums[d]]), np.array([s[1] for s in sums[d]]))
                     for d in cfg.offsets)
            if hw < cfg.ci_halfwidth_db or done >= cfg.max_frames:
                break
            target = min(2 * done, cfg.max_frames)
        log.debug("LSR %d: %d frames, worst CI half-width %.3f dB", li, done, hw)

        for d in cfg.offsets:
            s = np.array([v[0] for v in sums[d]])
            i = np.array([v[1] for v in sums[d]])
            n = sum(v[2] for v in sums[d])
            corr = sum(v[3] for v in sums[d])
            p_s, p_in = s.sum() / n, i.sum() / n
            records.append(EmpiricalSinr(
                lsr_index=li, offset=d, h_eff=complex(corr / (n * cfg.sigma_c2)),
                p_signal=p_s, p_interf_noise=p_in, sinr_db=_to_db(p_s, p_in),
                n_symbols=n, n_frames=done, ci_halfwidth_db=_halfwidth_db(s, i),
                warning=None if n >= MIN_SYMBOLS else f"only {n} interior symbols",
                frame_signal=s, frame_interf=i,
            ))
    return records
