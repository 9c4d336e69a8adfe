"""Message-passing core: cross-frame chain messages, per-frame BiGAMP and soft symbols."""

from .bigamp import (
    BiGampState,
    WithinResult,
    extrinsic_update,
    extrinsic_update_fd,
    init_state,
    posterior_channel_estimate,
    s_update,
    within_stage,
    z_conditional,
    z_conditional_fd,
    z_posterior,
)
from .messages import (
    FrameMessages,
    PosteriorChannel,
    across_backward,
    across_forward,
    channel_posterior,
    gaussian_product,
    into_stage,
    out_stage,
)
from .symbols import apriori_symbol_probs, bit_log_probs, extrinsic_llr, symbol_posterior
