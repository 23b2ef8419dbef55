"""Underlaid delay-Doppler sensing pilot for CP-OFDM ISAC.

A 2D pilot built from two m-sequences lives on the delay-Doppler plane, is
mapped to the time-frequency grid and added at reduced power on top of the
OFDM data. The sensing receiver finds targets by correlating the received DD
grid with shifted, phase-compensated copies of the pilot; the communication
receiver uses the known pilot for channel estimation and cancels it before
one-tap equalization.
"""

from .channel import (
    ChannelPath,
    ChannelRealization,
    add_awgn,
    apply_channel,
    fractional_doppler_channel,
    sample_eva_channel,
    sample_sensing_targets,
    true_tf_channel,
)
from .comm import (
    ChannelEstimate,
    EstimateSource,
    RsMask,
    ber,
    build_equivalent_rs,
    cancel_and_equalize,
    estimate_channel,
    make_rs_mask,
    nmse_db,
    qam16_demodulate,
    qam16_modulate,
)
from .grid import (
    Domain,
    FrameGeometry,
    Grid,
    TimeSignal,
    isfft,
    ofdm_demodulate,
    ofdm_modulate,
    sfft,
    superimpose,
)
from .kernels import BACKEND
from .pilot import (
    Pilot2D,
    PhaseMatrix,
    build_pilot,
    cyclic_shift_2d,
    default_pilot,
    inner_product_2d,
    phase_matrix,
)
from .sensing import (
    DetectionConfig,
    SensingReport,
    SinrBreakdown,
    correlation_ccdf,
    detect,
    refine_delay,
    refine_doppler,
    sinr_breakdown,
)
from .sequences import (
    ComponentSequence,
    cyclic_extend,
    cyclic_shift,
    generate_m_sequence,
    periodic_correlation,
)

__version__ = "0.1.0"
