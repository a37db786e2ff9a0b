from .config import ActionSpace, ConfigError, ModelConfig
from .norms import check_latent_invariants, latent_normalize, simnorm
from .encoders import BatchNorm2d, ConvEncoder, MLPEncoder, MirrorDecoder, build_encoder
from .transformer import Backbone, CacheOverflowError, KVCache, TransformerBlock, kv_cache_manage
from .heads import ActionEmbed, DecisionHead, DynamicsHead, MLPHead
from .world_model import EpisodeContext, WorldModel, clone_model, update_target_model

__all__ = [
    "ActionSpace", "ConfigError", "ModelConfig",
    "check_latent_invariants", "latent_normalize", "simnorm",
    "BatchNorm2d", "ConvEncoder", "MLPEncoder", "MirrorDecoder", "build_encoder",
    "Backbone", "CacheOverflowError", "KVCache", "TransformerBlock", "kv_cache_manage",
    "ActionEmbed", "DecisionHead", "DynamicsHead", "MLPHead",
    "EpisodeContext", "WorldModel", "clone_model", "update_target_model",
]
