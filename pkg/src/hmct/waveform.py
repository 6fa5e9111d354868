"""Hexagonal-lattice multicarrier modulation with Gaussian prototype pulses.

Symbols live on two rectangular cosets: coset 0 at (mT, nF) and coset 1 at
(mT + T/2, nF + F/2).  Every pulse is placed on the sample grid and carries
an absolute-time subcarrier phase ``exp(+j 2 pi f t)``.

Sample layout of a frame: pulse ``j`` of lattice row ``m`` in coset ``i``
sits at sample ``offset[i, m] + j`` with
``offset[i, m] = round((m T + i T/2) / Ts)`` and the first sample of the
frame at time ``-(Ng - 1) / 2 * Ts``.  Symbol (i=0, m=0) is therefore
centred on t = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeParams",
    "PrototypePulse",
    "SymbolGrid",
    "BasebandSignal",
    "gaussian_pulse",
    "make_gaussian_pulse",
    "gaussian_cross_ambiguity",
    "ambiguity_power",
    "lattice_self_interference",
    "qpsk_grid",
    "modulate",
    "project",
    "symbol_offsets",
]

_ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class LatticeParams:
    """Hexagonal time-frequency lattice.

    T is the symbol period, F the subcarrier spacing, and each coset holds
    an M x N block of symbols (M symbol rows, N subcarriers).
    """

    T: float
    F: float
    N: int
    M: int

    def __post_init__(self):
        if not (self.T > 0 and self.F > 0):
            raise ValueError(f"T and F must be positive, got T={self.T}, F={self.F}")
        if self.N < 1 or self.M < 1:
            raise ValueError(f"N and M must be >= 1, got N={self.N}, M={self.M}")
        if self.T * self.F <= 1:
            raise ValueError(f"lattice density TF={self.T * self.F:g} must exceed 1")

    @property
    def symbol_times(self) -> np.ndarray:
        """(2, M) nominal pulse centres, coset-major."""
        m = np.arange(self.M)
        return np.stack([m * self.T, m * self.T + self.T / 2])

    @property
    def subcarrier_freqs(self) -> np.ndarray:
        """(2, N) subcarrier frequencies, coset-major."""
        n = np.arange(self.N)
        return np.stack([n * self.F, n * self.F + self.F / 2])


def gaussian_pulse(t, sigma: float):
    """Unit-energy Gaussian ``(2/sigma)**0.25 * exp(-pi t^2 / sigma)``."""
    t = np.asarray(t, dtype=float)
    return (2.0 / sigma) ** 0.25 * np.exp(-np.pi * t**2 / sigma)


@dataclass(frozen=True)
class PrototypePulse:
    sigma: float
    Ng: int
    Ts: float
    samples: np.ndarray = field(repr=False, compare=False)

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.Ng) - (self.Ng - 1) / 2) * self.Ts

    def delayed(self, delta_t: float) -> np.ndarray:
        """Receive pulse g(t - delta_t) on the same sample window, unit energy."""
        if delta_t == 0:
            return self.samples
        return _sampled_unit_pulse(self.times - delta_t, self.sigma, self.Ts)


def _sampled_unit_pulse(t: np.ndarray, sigma: float, Ts: float) -> np.ndarray:
    g = gaussian_pulse(t, sigma)
    energy = np.sum(g**2) * Ts
    if abs(energy - 1.0) > _ENERGY_TOL:
        raise ValueError(
            f"pulse window too short or too coarse: raw energy {energy:.12f} "
            f"deviates from 1 by more than {_ENERGY_TOL:g}"
        )
    return g / np.sqrt(energy)


def make_gaussian_pulse(sigma: float, Ng: int, Ts: float) -> PrototypePulse:
    """Sample the unit-energy Gaussian prototype symmetrically about its centre.

    The window of ``Ng`` samples must span at least ``8 sqrt(sigma / 2 pi)``
    and the raw Riemann energy must be within 1e-9 of one before the final
    normalisation, otherwise the pulse is rejected.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if int(Ng) != Ng or Ng < 1:
        raise ValueError(f"Ng must be a positive integer, got {Ng}")
    if not Ts > 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    Ng = int(Ng)
    span = Ng * Ts
    needed = 8.0 * np.sqrt(sigma / (2 * np.pi))
    if span < needed:
        raise ValueError(f"pulse support {span:g} s shorter than required {needed:g} s")
    t = (np.arange(Ng) - (Ng - 1) / 2) * Ts
    samples = _sampled_unit_pulse(t, sigma, Ts)
    samples.setflags(write=False)
    return PrototypePulse(sigma=sigma, Ng=Ng, Ts=Ts, samples=samples)


def gaussian_cross_ambiguity(sigma, delta_t, tau, nu):
    """Closed-form cross-ambiguity between g and psi(t) = g(t - delta_t).

    Defined as ``A(tau, nu) = int g(t - tau) psi*(t) exp(-j 2 pi nu t) dt``,
    i.e. the response of the receive pulse to a copy of g delayed by ``tau``
    and observed with Doppler ``nu``.  For delta_t = 0 this is the usual
    auto-ambiguity of g.  Result::

        exp(-pi (tau - delta_t)^2 / (2 sigma) - pi sigma nu^2 / 2
            - j pi nu (tau + delta_t))

    so that ``|A|^2 = exp(-pi ((tau - delta_t)^2 / sigma + sigma nu^2))``.
    Broadcasts over array arguments.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    mag = -np.pi * (tau - delta_t) ** 2 / (2 * sigma) - np.pi * sigma * nu**2 / 2
    return np.exp(mag - 1j * np.pi * nu * (tau + delta_t))


def ambiguity_power(sigma, delta_t, tau, nu):
    """|A(tau, nu)|^2 for the Gaussian pair, without forming complex values."""
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return np.exp(-np.pi * ((tau - delta_t) ** 2 / sigma + sigma * nu**2))


def lattice_self_interference(lattice: LatticeParams, sigma: float, delta_t: float = 0.0,
                              extent: int = 4) -> float:
    """Sum of |A|^2 over all hexagonal lattice points except the origin.

    This is the interference-to-signal power of an ideal (identity) channel
    with unit-power symbols, relative to |A(0, 0)|^2.
    """
    k = np.arange(-extent, extent + 1)
    m, n = np.meshgrid(k, k, indexing="ij")
    rect = ambiguity_power(sigma, delta_t, m * lattice.T, n * lattice.F)
    coset = ambiguity_power(sigma, delta_t, (m + 0.5) * lattice.T, (n + 0.5) * lattice.F)
    origin = ambiguity_power(sigma, delta_t, 0.0, 0.0)
    return float((rect.sum() - origin + coset.sum()) / origin)


@dataclass
class SymbolGrid:
    """Data symbols of both cosets, each an (M, N) complex array."""

    coset1: np.ndarray
    coset2: np.ndarray
    sigma_c2: float = 1.0

    def __post_init__(self):
        self.coset1 = np.asarray(self.coset1, dtype=complex)
        self.coset2 = np.asarray(self.coset2, dtype=complex)
        if self.coset1.ndim != 2 or self.coset1.shape != self.coset2.shape:
            raise ValueError(
                f"cosets must be equal-shape 2-D arrays, got {self.coset1.shape} "
                f"and {self.coset2.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.coset1.shape

    def as_array(self) -> np.ndarray:
        """Stacked (2, M, N) view, coset-major."""
        return np.stack([self.coset1, self.coset2])

    @classmethod
    def from_array(cls, symbols, sigma_c2: float = 1.0) -> "SymbolGrid":
        symbols = np.asarray(symbols)
        if symbols.ndim != 3 or symbols.shape[0] != 2:
            raise ValueError(f"expected a (2, M, N) array, got {symbols.shape}")
        return cls(symbols[0], symbols[1], sigma_c2)

    @classmethod
    def zeros(cls, M: int, N: int, sigma_c2: float = 1.0) -> "SymbolGrid":
        return cls(np.zeros((M, N), complex), np.zeros((M, N), complex), sigma_c2)

    def __add__(self, other: "SymbolGrid") -> "SymbolGrid":
        return SymbolGrid(self.coset1 + other.coset1, self.coset2 + other.coset2, self.sigma_c2)

    def __mul__(self, a) -> "SymbolGrid":
        return SymbolGrid(a * self.coset1, a * self.coset2, self.sigma_c2)

    __rmul__ = __mul__


def qpsk_grid(M: int, N: int, rng: np.random.Generator, sigma_c2: float = 1.0) -> SymbolGrid:
    """I.i.d. QPSK symbols with average power ``sigma_c2``."""
    bits = rng.integers(0, 2, size=(2, 2, M, N))
    sym = ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) * np.sqrt(sigma_c2 / 2)
    return SymbolGrid(sym[0], sym[1], sigma_c2)


@dataclass(frozen=True)
class BasebandSignal:
    samples: np.ndarray
    Ts: float
    t0: float = 0.0

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) * self.Ts

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.Ts)


def symbol_offsets(lattice: LatticeParams, Ts: float) -> np.ndarray:
    """(2, M) integer sample offsets of every pulse window in a frame."""
    return np.rint(lattice.symbol_times / Ts).astype(int)


def _frame_t0(pulse: PrototypePulse) -> float:
    return -(pulse.Ng - 1) / 2 * pulse.Ts


def _carrier_bank(lattice: LatticeParams, pulse: PrototypePulse) -> np.ndarray:
    # (2, N, Ng): exp(j 2 pi f (t0 + j Ts)) over one pulse window
    tj = _frame_t0(pulse) + np.arange(pulse.Ng) * pulse.Ts
    f = lattice.subcarrier_freqs
    return np.exp(2j * np.pi * f[:, :, None] * tj[None, None, :])


def modulate(grid: SymbolGrid, lattice: LatticeParams, pulse: PrototypePulse,
             pad: int = 0) -> BasebandSignal:
    """Sampled HMCT transmit signal for one frame.

    ``pad`` appends trailing zero samples (room for channel delay spread).
    """
    if grid.shape != (lattice.M, lattice.N):
        raise ValueError(f"grid shape {grid.shape} does not match lattice ({lattice.M}, {lattice.N})")
    Ts = pulse.Ts
    offsets = symbol_offsets(lattice, Ts)
    f = lattice.subcarrier_freqs
    bank = _carrier_bank(lattice, pulse)
    symbols = grid.as_array()
    # absolute-time phase of each window start
    symbols = symbols * np.exp(2j * np.pi * f[:, None, :] * offsets[:, :, None] * Ts)
    segments = np.einsum("imn,inj->imj", symbols, bank) * pulse.samples

    x = np.zeros(offsets.max() + pulse.Ng + int(pad), dtype=complex)
    for i in range(2):
        for m in range(lattice.M):
            o = offsets[i, m]
            x[o:o + pulse.Ng] += segments[i, m]
    return BasebandSignal(x, Ts, _frame_t0(pulse))


def _frame_origin(received: BasebandSignal, pulse: PrototypePulse) -> int:
    if abs(received.Ts - pulse.Ts) > 1e-12 * pulse.Ts:
        raise ValueError(f"sampling interval mismatch: {received.Ts} vs {pulse.Ts}")
    base = (_frame_t0(pulse) - received.t0) / pulse.Ts
    if abs(base - round(base)) > 1e-6 or round(base) < 0:
        raise ValueError("received signal is not aligned with the lattice sample grid")
    return int(round(base))


def project(received: BasebandSignal, lattice: LatticeParams, pulse: PrototypePulse,
            delta_t: float = 0.0) -> SymbolGrid:
    """Inner products of ``received`` with every receive pulse psi_{m,n}^i.

    The receive prototype is psi(t) = g(t - delta_t); ``delta_t = 0`` is the
    traditional matched projection receiver.
    """
    base = _frame_origin(received, pulse)
    offsets = symbol_offsets(lattice, pulse.Ts) + base
    if offsets.max() + pulse.Ng > len(received):
        raise ValueError(
            f"received signal has {len(received)} samples, lattice needs "
            f"{offsets.max() + pulse.Ng}"
        )
    psi = pulse.delayed(delta_t)
    windows = received.samples[offsets[:, :, None] + np.arange(pulse.Ng)] * psi
    bank = _carrier_bank(lattice, pulse)
    est = np.einsum("imj,inj->imn", windows, bank.conj()) * pulse.Ts
    f = lattice.subcarrier_freqs
    est *= np.exp(-2j * np.pi * f[:, None, :] * (offsets[:, :, None] - base) * pulse.Ts)
    return SymbolGrid.from_array(est)
