"""Hallucination-based data augmentation for few-shot recognition.

Pipeline: pretrain a text-conditional GAN on base classes, finetune it on
the n-shot support of novel classes with a class-aware discriminator term,
hallucinate candidate images, keep the top-m per class by discriminator
score, and train a small CNN on real + selected hallucinated examples.
"""

from .classifier import ClsHyper, EvalReport, evaluate, load_report, save_report, train_classifier
from .config import (
    DataConfig,
    ExperimentConfig,
    SelectionSpec,
    SplitSpec,
    config_from_dict,
    config_hash,
    config_to_dict,
    load_config,
    save_config,
)
from .data import (
    Dataset,
    Episode,
    Sample,
    SplitConfig,
    SynthSpec,
    load_dataset,
    make_split,
    sample_episode,
    save_dataset,
    synth_dataset,
)
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    FormatError,
    HallucError,
    NumericsError,
    SelectionError,
)
from .harness import RunRecord, SummaryRow, load_record, run_experiment, summarize, write_summary
from .losses import adv_loss_d, adv_loss_g, class_loss, loss_d, loss_g
from .models import ConvClassifier, Discriminator, GanArch, Generator
from .seeding import derive_seed, rng_for
from .selection import (
    AugmentedDataset,
    Candidate,
    CandidatePool,
    build_augmented,
    build_pool,
    combine_scores,
    score_candidate,
    select_top_m,
)
from .tcgan import GanHyper, GanModel, discriminator_scores, finetune_novel, generate, pretrain_base

__version__ = "0.1.0"

__all__ = [
    "AugmentedDataset", "Candidate", "CandidatePool", "ClsHyper", "ConfigError",
    "ConvClassifier", "DataConfig", "DataError", "Dataset", "Discriminator",
    "DivergenceError", "Episode", "EvalReport", "ExperimentConfig", "FormatError",
    "GanArch", "GanHyper", "GanModel", "Generator", "HallucError", "NumericsError",
    "RunRecord", "Sample", "SelectionError", "SelectionSpec", "SplitConfig",
    "SplitSpec", "SummaryRow", "SynthSpec", "adv_loss_d", "adv_loss_g",
    "build_augmented", "build_pool", "class_loss", "combine_scores",
    "config_from_dict", "config_hash", "config_to_dict", "derive_seed",
    "discriminator_scores", "evaluate", "finetune_novel", "generate",
    "load_config", "load_dataset", "load_record", "load_report", "loss_d",
    "loss_g", "make_split", "pretrain_base", "rng_for", "run_experiment",
    "sample_episode", "save_config", "save_dataset", "save_report",
    "score_candidate", "select_top_m", "summarize", "synth_dataset",
    "train_classifier", "write_summary",
]
