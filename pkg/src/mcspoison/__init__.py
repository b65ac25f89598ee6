"""Data poisoning against behavioral worker selection, at desk scale.

The package simulates a crowdsensing platform that scores workers with
per-worker cancellation classifiers, and an insider attacker who corrupts the
training data those classifiers learn from. A small GAN generates poisoning
rows tuned between realism (hard to detect) and damage (misclassify good
contexts); an autoencoder defense tries to catch them; a selection economy
translates classifier damage into lost worker income.
"""

from .attack import (
    PganHyper,
    PganModel,
    PoisonBatch,
    centroid_deviation_fraction,
    classifier_loss,
    discriminator_loss,
    feature_manipulation_attack,
    generate_poison,
    generator_loss,
    inject_poison,
    label_flip_attack,
    load_pgan,
    save_pgan,
    train_pgan,
)
from .behavioral import (
    BehavioralModel,
    MetricsReport,
    classify,
    evaluate_metrics,
    predict_cancellation,
    train_behavioral_model,
)
from .data import (
    DEFAULT_SCHEMA,
    FeatureSchema,
    MinMaxScaler,
    SyntheticWorkerConfig,
    WorkerDataset,
    generate_synthetic_worker,
    impute_pca,
    load_csv,
    minmax_normalize,
    preprocess,
    save_csv,
    smote_balance,
    train_test_split,
)
from .defense import (
    AutoencoderModel,
    OutlierReport,
    detect_outliers,
    detect_outliers_per_class,
    filter_outliers,
    train_autoencoder,
)
from .errors import (
    AttackError,
    ConfigError,
    DefenseError,
    DimensionError,
    IngestionError,
    McsPoisonError,
    PipelineError,
    SelectionError,
    TrainingError,
)
from .experiments import (
    ExperimentConfig,
    RunReport,
    emit_report,
    load_config,
    resolve_config,
    run_alpha_sweep,
    run_benchmark_comparison,
    run_campaign,
    run_experiment,
    run_poison_sweep,
)
from .nn import DenseNetwork, LayerSpec, gradient_check, init_network, load_network, save_network
from .selection import (
    EconomyParams,
    GroupQoSWeights,
    PaymentRecord,
    Task,
    Worker,
    completion_confidence,
    compute_payment,
    greedy_select,
    group_qos,
    latency_score,
    reputation_update,
    run_task_round,
    simulate_campaign,
    worker_qos,
)

__version__ = "0.1.0"
