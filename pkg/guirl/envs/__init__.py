from .synth_env import EncoderConfig, SceneConfig, SynthGroundingEnv

__all__ = ["SynthGroundingEnv", "SceneConfig", "EncoderConfig"]
