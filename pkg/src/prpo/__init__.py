"""Permutation-relative policy optimization for tabular prediction."""

from .advantage import (
    AdvantageBundle,
    GroupRewards,
    combine,
    estimate,
    grpo_advantages,
    inter_advantages,
    intra_advantages,
)
from .dataset import (
    ColumnSpec,
    DatasetSplit,
    TabularExample,
    TaskManifest,
    load_dataset,
    resolve_label_range,
    split,
)
from .eval import EvalReport, accuracy, aggregate, evaluate_policy, nmae_metric
from .permute import Permutation, PermutationSet, apply_permutation, sample_permutations
from .policy import (
    Completion,
    Policy,
    PolicyParams,
    ReferenceSnapshot,
    ToyClassifierPolicy,
    ToyPolicy,
    ToyRegressorPolicy,
    load_policy,
    save_policy,
)
from .reward import RewardRecord, classification_reward, nmae, regression_reward
from .serialize import (
    ExtractedAnswer,
    Prompt,
    PromptTemplate,
    build_prompt,
    default_template,
    extract_answer,
    load_template,
    serialize_row,
)
from .trainer import (
    AblationResult,
    RemotePolicy,
    RolloutGroup,
    StepMetrics,
    TrainConfig,
    checkpoint_mean_reward,
    collect_example_block,
    curve_auc,
    kl_penalty,
    paired_ablation,
    ppo_term,
    prpo_grad,
    prpo_loss,
    prpo_loss_under,
    remote_rollout_client,
    train,
)

__version__ = "0.1.0"
