"""Non-adaptive group testing with binary-splitting decoders.

Designs, channels, decoders and a Monte Carlo harness for the
block-and-circle scheme (noiseless and false-positive channels) and the
repeated-test scheme with density-tracked decoding (symmetric and
asymmetric channels).
"""
from .channel import ChannelKind, ChannelSpec, OutcomeVector, apply_channel, encode
from .neon_decoder import global_decode, local_decode
from .noisy_decoder import chain_verify, decode_noisy, node_positive, subtree_scan
from .params import (
    ConstraintReport,
    NoisyParams,
    SchemeParams,
    block_overflow_bound,
    derive_noiseless_params,
    derive_noisy_params,
    effective_zeta,
    regime_check,
    validate_bac,
    validate_bsc,
    validate_fpc,
)
from .tree_design import (
    NeonDesign,
    NodeId,
    NoisyDesign,
    SplitDesign,
    build_neon_design,
    build_noisy_design,
    build_split_design,
    materialize_matrix,
    node_children,
)

__version__ = "0.1.0"
