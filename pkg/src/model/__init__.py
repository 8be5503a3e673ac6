from .config import ModelConfig, PatchToken, PatchTokens, TokenKind
from .layers import resolution_encoding
from .patch_model import (
    SkipFeatures,
    attention_stack,
    decode_patch,
    decode_patches,
    encode_patch,
    encode_patches,
    init_patch_model,
)
from .rope import apply_rope, rope_2d

__all__ = [
    "ModelConfig",
    "PatchToken",
    "PatchTokens",
    "SkipFeatures",
    "TokenKind",
    "apply_rope",
    "attention_stack",
    "decode_patch",
    "decode_patches",
    "encode_patch",
    "encode_patches",
    "init_patch_model",
    "resolution_encoding",
    "rope_2d",
]
