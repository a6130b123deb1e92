"""White-box shadow-model membership inference on small softmax classifiers."""

from .attack import (
    AttackModel,
    Membership,
    MembershipRecord,
    Source,
    SvmConfig,
    attack_victim,
    build_attack_dataset,
    build_attack_dataset_multi,
    infer_membership,
    train_attack_classifier,
)
from .config import ExperimentConfig
from .dataset import (
    Dataset,
    DatasetSplit,
    Sample,
    SplitSpec,
    SynthConfig,
    class_histogram,
    generate_synthetic,
    load_csv,
    split_three_way,
    write_csv,
)
from .errors import ConfigError, DataError, EvaluationError, ShadowMiaError, TrainingError
from .estimators import AttackFeatures, LinearSVMClassifier, SoftmaxMLPClassifier
from .metrics import AttackReport, attack_accuracy, build_report, per_class_precision, precision
from .model import (
    Architecture,
    ModelParams,
    TrainConfig,
    TrainHistory,
    evaluate_accuracy,
    fine_tune,
    forward_posterior,
    init_params,
    loss_and_gradient,
    train,
)
from .pipeline import run_pipeline, sweep_overfitting

__version__ = "0.1.0"
