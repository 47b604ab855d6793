"""OTFS link simulation with fractionally spaced message-passing receivers."""

from .analysis import (BerPoint, CsiPerturbSpec, ExitPoint, LinkConfig, ReceiverSpec, SimReport, ber_sweep,
                       exit_chart, mutual_info_apriori, mutual_info_extrinsic, perturb_csi,
                       sample_apriori_llrs, sigma_for_apriori_info, time_domain_oracle)
from .channel import (ChannelPath, ChannelRealization, PowerDelayProfile, add_rx_filtered_noise, apply_channel,
                      draw_channel, snr_to_sigma)
from .core import ConfigError, DDGridConfig, ModAlphabet, RngSpec, make_qam, make_qpsk_gray
from .ddmatrix import (SparseDDMatrix, TruncationSpec, build_branch_matrix, build_on_grid_matrix,
                       stack_branches)
from .equalizer import (ComplexityReport, LLRBlock, MessageState, MPParams, icmp_run, mp_equalize_with_priors,
                        simplified_run, tmp_run, trim_graph)
from .modem import BasebandSignal, heisenberg_rect, isfft, sfft, wigner_rect
from .pulses import RolloffFilter, eval_rc, eval_rrc, rect_cross_ambiguity

__version__ = "0.1.0"
