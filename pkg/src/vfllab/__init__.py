"""Desk-scale vertical federated learning with label-inference attacks and defenses."""

from .attacks import (
    AdversaryState,
    AttackReport,
    CompletionParams,
    active_attack,
    adversary_view,
    direct_attack,
    fit_completion_model,
    passive_model_completion,
    score_asr,
)
from .data import (
    AuxiliaryLabelSet,
    VerticalDataset,
    generate_synthetic,
    load_csv,
    sample_auxiliary,
)
from .defenses import (
    CompressDefense,
    DefenseConfig,
    DefenseRuntime,
    DiscreteSgdDefense,
    GradientStats,
    KdkDefense,
    NoDefense,
    NoisyDefense,
    PpdlDefense,
    calibrate,
    compress,
    discrete_sgd,
    noisy,
    ppdl,
    validate_defense,
)
from .errors import (
    ConfigError,
    DataError,
    DistributionError,
    ModeError,
    NonFiniteError,
    ParameterError,
    ProtocolError,
    ShapeError,
    StateError,
    VflError,
)
from .experiments import (
    AttackRow,
    AttackSpec,
    CsvSpec,
    ExperimentConfig,
    FederationSpec,
    MetricsReport,
    ModelRow,
    SyntheticSpec,
    attack_from_transcripts,
    build_dataset,
    config_from_dict,
    config_hash,
    config_to_dict,
    emit_report,
    load_config,
    replay_adversary,
    run,
    set_by_path,
    sweep,
)
from .labels import (
    KdkConfig,
    LabelDistributionSet,
    TrainedTeacher,
    anonymize,
    distill_student,
    export_distributions_csv,
    import_distributions_csv,
    kdk_label_provider,
    one_hot_labels,
    teacher_soft_labels,
    train_teacher,
)
from .nets import (
    DenseNet,
    Layer,
    Matrix,
    OptimizerState,
    backprop,
    ce_softmax_grad,
    cross_entropy_soft,
    finite_difference_grads,
    fit_classifier,
    forward,
    glorot_net,
    kd_loss,
    make_optimizer,
    optimizer_step,
    softmax,
    softmax_temperature,
    top1_accuracy,
    topk_accuracy,
)
from .protocol import (
    FederationState,
    PartyState,
    RoundTranscript,
    TranscriptSink,
    backward_round,
    evaluate,
    federation_logits,
    forward_round,
    local_update,
    make_federation,
    read_transcripts,
    train,
)

__version__ = "0.1.0"
