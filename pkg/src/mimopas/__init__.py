"""Link-level simulation of probabilistically shaped MIMO transmission.

Modules: constellation (alphabets and shaping distributions), shaping
(distribution matching and frame assembly), fec (LDPC codes), channel
(correlated Rayleigh fading), detect (sphere and MMSE soft detection),
sim (Monte-Carlo harness), plots (figures), cli (command line).
"""

from .channel import (ChannelInstance, CorrelationConfig, correlation_matrix,
                      draw_channel, sigma2_to_snr, snr_to_sigma2, transmit)
from .constellation import (MbDistribution, PamAlphabet, ShapedConstellation,
                            build_pam, mb_distribution, nu_for_rate, scale_factor,
                            shaped_constellation, uniform_constellation)
from .detect import (DetectionOutput, QrFactorization, RtsDetector, SearchContext,
                     bruteforce_maxlog, mmse_soft, sd_ml, sd_soft_rts, sorted_qr)
from .fec import ParityCheckCode, load_alist, load_code
from .shaping import (CcdmSpec, PasFramePlan, build_composition, ccdm_dematch,
                      ccdm_match, frame_bit_positions, pas_decode, pas_encode,
                      plan_frame)
from .sim import (ConfigError, ScenarioConfig, SweepRecord, assert_comparable,
                  run_mixed_layers, run_point, run_sweep, spectral_efficiency,
                  write_csv)

__version__ = "0.1.0"
