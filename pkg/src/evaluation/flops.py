"""Analytic FLOP counts for the patch cascade and the dense baseline.

Every matrix product of an (m, k) by a (k, n) operand costs 2·m·k·n FLOPs
(one multiply-add counts as two). Elementwise work is charged per output
value with the constants below.
"""

from typing import Dict

from ..baseline import GlobalModelConfig
from ..cascade import CascadeConfig, scale_cascade
from ..errors import CostModelError
from ..object_models import FlopsReport

# Entropy, candidate means and boundary weighting per pixel per map.
SAMPLING_PER_PIXEL = 10
# Divide, mask, add and two bilinear multiply-adds per fused pixel.
FUSION_PER_PIXEL = 6
# Bilinear upsample of the final probabilities.
UPSAMPLE_PER_PIXEL = 4

CASCADE_FORMULAS: Dict[str, str] = {
    "tokens": "T = K_target + N_c * K_context",
    "encoder": "T * [conv(3,2,c1,P) + conv(3,c1,c2,P/2) + 2*c2*d], conv(k,i,o,s) = 2*k^2*i*o*s^2",
    "attention": "L * (4*T^2*d_h*heads + 8*T*d^2)",
    "feedforward": "L * 16*T*d^2",
    "decoder": "K_target * [2*d*c2 + conv(3,c2,c1,P/2) + conv(3,2*c1,c1,P) + conv(1,c1,1,P)]",
    "sampling": f"{SAMPLING_PER_PIXEL} * (1 + N_c) * r^2",
    "aggregation": f"2*K_target*P^2 + {FUSION_PER_PIXEL}*r^2 (+ {UPSAMPLE_PER_PIXEL}*R^2 once)",
}

GLOBAL_FORMULAS: Dict[str, str] = {
    "tokens": "T = r^2 target tokens, N_c * r^2 context tokens",
    "encoder": "(1 + N_c) * [conv(3,2,c1,r) + conv(3,c1,c2,r) + 2*c2*d*r^2]",
    "attention": "L * [4*r^4*d + 8*r^2*d^2 + 4*r^2*(N_c*r^2)*d + 2*r^2*d^2 + 4*N_c*r^2*d^2 + 2*r^2*d^2]",
    "feedforward": "L * 16*r^2*d^2",
    "decoder": "2*d*c1*r^2 + conv(3,2*c1,c1,r) + conv(1,c1,1,r)",
}


def conv_flops(k: int, c_in: int, c_out: int, side: int) -> int:
    return 2 * k * k * c_in * c_out * side * side


def attention_flops(tokens: int, d: int, heads: int, layers: int) -> int:
    d_h = d // heads
    return layers * (4 * tokens * tokens * d_h * heads + 8 * tokens * d * d)


def flops_cascade(config: CascadeConfig, n_context: int = 3) -> FlopsReport:
    """Cost of one cascade forward pass, summed over levels."""
    if not config.levels:
        raise CostModelError("cost model needs at least one level")
    m = config.model
    c1, c2 = m.channels
    p = m.patch_size
    per_patch_encoder = conv_flops(3, 2, c1, p) + conv_flops(3, c1, c2, p // 2) + 2 * c2 * m.d
    per_patch_decoder = (
        2 * m.d * c2 + conv_flops(3, c2, c1, p // 2) + conv_flops(3, 2 * c1, c1, p) + conv_flops(1, c1, 1, p)
    )
    totals = dict(encoder=0, attention=0, feedforward=0, decoder=0, sampling=0, aggregation=0)
    for level in config.levels:
        tokens = level.k_target + n_context * level.k_context
        r2 = level.resolution**2
        totals["encoder"] += tokens * per_patch_encoder
        totals["attention"] += attention_flops(tokens, m.d, m.heads, m.layers)
        totals["feedforward"] += m.layers * 16 * tokens * m.d * m.d
        totals["decoder"] += level.k_target * per_patch_decoder
        totals["sampling"] += SAMPLING_PER_PIXEL * (1 + n_context) * r2
        totals["aggregation"] += 2 * level.k_target * p * p + FUSION_PER_PIXEL * r2
    top = config.levels[-1].resolution
    totals["aggregation"] += UPSAMPLE_PER_PIXEL * top * top
    return FlopsReport(arch="cascade", resolution=top, formulas=CASCADE_FORMULAS, **totals)


def flops_cascade_at(config: CascadeConfig, resolution: int, n_context: int = 3) -> FlopsReport:
    """Cost with the schedule stretched to ``resolution`` (fixed K and patch size)."""
    return flops_cascade(scale_cascade(config, resolution), n_context=n_context)


def flops_global(config: GlobalModelConfig, resolution: int, n_context: int = 3) -> FlopsReport:
    """Cost of the dense baseline at working resolution ``resolution``; no cap applies here."""
    if resolution < 1:
        raise CostModelError(f"resolution must be positive, got {resolution}")
    c1, c2 = config.channels
    d, r2 = config.d, resolution * resolution
    ctx = n_context * r2
    encoder = (1 + n_context) * (conv_flops(3, 2, c1, resolution) + conv_flops(3, c1, c2, resolution) + 2 * c2 * d * r2)
    self_attn = 4 * r2 * r2 * d + 8 * r2 * d * d
    cross_attn = 4 * r2 * ctx * d + 2 * r2 * d * d + 4 * ctx * d * d + 2 * r2 * d * d
    decoder = 2 * d * c1 * r2 + conv_flops(3, 2 * c1, c1, resolution) + conv_flops(1, c1, 1, resolution)
    return FlopsReport(
        arch="global",
        resolution=resolution,
        encoder=encoder,
        attention=config.layers * (self_attn + cross_attn),
        feedforward=config.layers * 16 * r2 * d * d,
        decoder=decoder,
        formulas=GLOBAL_FORMULAS,
    )
