"""Max-SINR projection receiver for hexagonal multicarrier transmission
over non-stationary doubly dispersive channels."""

from .channel import (
    ChannelRealization,
    LsrParams,
    NsddChannelSpec,
    add_awgn,
    apply_channel,
    realize_lsr_channel,
    scattering_function,
)
from .errors import ClosedFormInapplicable, QuadratureError
from .montecarlo import EmpiricalSinr, TrialConfig, estimate_sinr, run_trial
from .sinr_analytic import (
    SinrConfig,
    closed_form_offset,
    erfc_approx,
    interference_noise_energy,
    max_sinr_offset,
    objective_ab,
    objective_argmax,
    signal_energy,
    sinr_theoretical,
    sinr_upper_bound,
)
from .waveform import (
    BasebandSignal,
    LatticeParams,
    PrototypePulse,
    SymbolGrid,
    gaussian_cross_ambiguity,
    make_gaussian_pulse,
    modulate,
    project,
)

__version__ = "0.1.0"
