"""Dense text-to-video style rewards over multi-view latents, with toy
manipulation environments and a small tabular RL harness."""

from tevir.latent import (
    DEFAULT_VIEWS,
    MultiViewLatent,
    UsageError,
    ViewWeights,
    cosine,
    multi_view_similarity,
)
from tevir.sequence import (
    CorruptionSpec,
    FormatError,
    GeneratedSequence,
    corrupt,
    load_sequence,
    oracle_sequence,
    save_sequence,
)
from tevir.reward import (
    ProgressState,
    RewardBreakdown,
    RewardConfig,
    RewardEngine,
    best_prefix_match,
    distance_reward,
    progress_reward,
    step_reward,
    update_reached,
)
from tevir.rnd import MlpParams, RndState
from tevir.env import TASKS, EnvAction, EnvState, ManipulationEnv, encode, scripted_expert

__version__ = "0.1.0"
