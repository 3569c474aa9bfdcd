"""Experiment harness: sweep cells, cache pretraining, summarize results.

A *cell* is one (arm, master seed, n_shot, m) combination.  The real-only
arm always runs with m=0.  Every stochastic stage draws its seed from the
cell's master seed through :func:`halluc.seeding.derive_seed`, so cells are
reproducible in isolation and the classifier stream is shared between arms
(the m=0 augmented cell is bit-identical to real-only by construction).
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
import torch

from .checkpoint import atomic_dir, load_gan, save_gan
from .classifier import EvalReport, evaluate, load_report, save_report, train_classifier
from .config import ExperimentConfig, config_from_dict, config_hash, config_to_dict, save_config
from .data import Dataset, Episode, SplitConfig, load_dataset, make_split, sample_episode, synth_dataset
from .errors import ConfigError, FormatError
from .seeding import derive_seed
from .selection import AugmentedDataset, build_augmented, build_pool, select_top_m
from .tcgan import GanModel, finetune_novel, pretrain_base

RUN_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class CellResult:
    arm: str
    seed: int
    n_shot: int
    m: int
    report: EvalReport
    path: str | None = None


@dataclass(frozen=True)
class RunRecord:
    config: ExperimentConfig
    config_hash: str
    cells: tuple[CellResult, ...]


@dataclass(frozen=True)
class SummaryRow:
    arm: str
    n_shot: int
    m: int
    seeds: int
    mean_top1: float
    std_top1: float


# ---------------------------------------------------------------------------
# seed resolution


def resolve_data_seed(config: ExperimentConfig, master_seed: int) -> int:
    if config.data.seed is not None:
        return config.data.seed
    return derive_seed(master_seed, "data")


def resolve_split_seed(config: ExperimentConfig, master_seed: int) -> int:
    if config.split.seed is not None:
        return config.split.seed
    return derive_seed(master_seed, "split")


def stream_seeds(master_seed: int, n_shot: int) -> dict:
    """Derived seeds for every stage of one (master seed, n_shot) slice.

    The classifier seed deliberately ignores arm and m so that arms sharing
    a support set also share their training trajectory when the training
    tensors coincide.
    """
    return {
        "episode": derive_seed(master_seed, "episode", n_shot),
        "gan": derive_seed(master_seed, "gan"),
        "pool": derive_seed(master_seed, "pool", n_shot),
        "classifier": derive_seed(master_seed, "classifier", n_shot),
    }


def prepare_dataset(config: ExperimentConfig, master_seed: int) -> Dataset:
    if config.data.path is not None:
        return load_dataset(config.data.path)
    return synth_dataset(config.data.synth_spec(resolve_data_seed(config, master_seed)))


def dataset_fingerprint(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for arr in (dataset.images, dataset.embeddings, dataset.labels):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# pretraining cache


def cache_root(out_dir: str) -> str:
    return os.environ.get("HALLUC_CACHE_DIR") or os.path.join(out_dir, "cache")


def pretrained_gan(dataset: Dataset, split: SplitConfig, hyper, cache_dir: str | None = None) -> GanModel:
    """Pretrain on the base classes, memoized on (data, split, hyper)."""
    if cache_dir is None:
        return pretrain_base(dataset, split, hyper)
    key_src = json.dumps(
        {
            "dataset": dataset_fingerprint(dataset),
            "base": sorted(split.base_classes),
            "hyper": dataclasses.asdict(hyper),
        },
        sort_keys=True,
    )
    key = hashlib.sha256(key_src.encode("utf-8")).hexdigest()[:16]
    path = os.path.join(cache_dir, f"pretrain-{key}")
    if os.path.isdir(path):
        try:
            return load_gan(path)
        except FormatError:
            pass  # stale or truncated entry; fall through and recompute
    model = pretrain_base(dataset, split, hyper)
    save_gan(model, path)
    return model


# ---------------------------------------------------------------------------
# cells


def _cell_dir(out_dir: str, arm: str, seed: int, n_shot: int, m: int) -> str:
    return os.path.join(out_dir, "cells", f"{arm}_s{seed}_n{n_shot}_m{m}")


def train_eval_cell(
    data: AugmentedDataset,
    episode: Episode,
    cls_hyper,
    *,
    arm: str,
    seed: int,
    n_shot: int,
    m: int,
) -> EvalReport:
    model = train_classifier(data, cls_hyper)
    return evaluate(model, episode.query, n_shot=n_shot, m=m, seed=seed, arm=arm)


def run_experiment(
    config: ExperimentConfig,
    out_dir: str,
    resume: bool = True,
    verbose: bool = False,
) -> RunRecord:
    """Run every cell of the sweep, persisting one report.json per cell.

    Finished cells are skipped on resume.  An output directory created for a
    different configuration is rejected rather than silently mixed.
    """
    torch.set_num_threads(1)
    chash = config_hash(config)
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "run.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as f:
            old = json.load(f)
        if old.get("config_hash") != chash:
            raise ConfigError(
                f"{out_dir} holds results for config {old.get('config_hash')!r}; "
                f"refusing to mix with {chash!r} (use a fresh directory)"
            )
    else:
        manifest = {
            "format_version": RUN_FORMAT_VERSION,
            "config_hash": chash,
            "config": config_to_dict(config),
        }
        tmp = manifest_path + f".tmp-{os.getpid()}"
        with open(tmp, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, manifest_path)
    save_config(config, os.path.join(out_dir, "config.yaml"))

    cells: list[CellResult] = []
    for master_seed in config.seeds:
        dataset = prepare_dataset(config, master_seed)
        split = make_split(dataset, config.split.base_fraction, resolve_split_seed(config, master_seed))
        gan_hyper = dataclasses.replace(config.gan, seed=derive_seed(master_seed, "gan"))
        base_model: GanModel | None = None
        for n_shot in config.n_shot:
            seeds = stream_seeds(master_seed, n_shot)
            episode = sample_episode(dataset, split, n_shot, config.query_per_class, seeds["episode"])
            cls_hyper = dataclasses.replace(config.cls, seed=seeds["classifier"])
            pool = None
            for arm in config.arms:
                m_list = (0,) if arm == "real-only" else config.selection.m_values()
                for m in m_list:
                    cell_path = _cell_dir(out_dir, arm, master_seed, n_shot, m)
                    report_path = os.path.join(cell_path, "report.json")
                    if resume and os.path.exists(report_path):
                        report = load_report(report_path)
                        cells.append(CellResult(arm, master_seed, n_shot, m, report, report_path))
                        if verbose:
                            print(f"[cell] {arm} seed={master_seed} n={n_shot} m={m} "
                                  f"top1={report.top1_accuracy:.4f} (resumed)")
                        continue
                    if arm == "augmented" and m > 0:
                        if base_model is None:
                            base_model = pretrained_gan(dataset, split, gan_hyper, cache_root(out_dir))
                        if pool is None:
                            tuned = finetune_novel(base_model, episode, gan_hyper)
                            pool = build_pool(
                                tuned,
                                episode,
                                config.selection.pool_size,
                                seeds["pool"],
                                rule=config.selection.scoring_rule,
                            )
                        data = build_augmented(episode, select_top_m(pool, m))
                    else:
                        data = AugmentedDataset(real=list(episode.support), hallucinated=[])
                    report = train_eval_cell(
                        data, episode, cls_hyper, arm=arm, seed=master_seed, n_shot=n_shot, m=m
                    )
                    with atomic_dir(cell_path) as tmp_dir:
                        save_report(report, os.path.join(tmp_dir, "report.json"))
                    cells.append(CellResult(arm, master_seed, n_shot, m, report, report_path))
                    if verbose:
                        print(f"[cell] {arm} seed={master_seed} n={n_shot} m={m} "
                              f"top1={report.top1_accuracy:.4f}")
    record = RunRecord(config, chash, tuple(cells))
    write_summary(record, os.path.join(out_dir, "summary.csv"))
    return record


def load_record(out_dir: str) -> RunRecord:
    manifest_path = os.path.join(out_dir, "run.json")
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read run manifest {manifest_path}: {exc}") from exc
    config = config_from_dict(manifest["config"])
    chash = manifest["config_hash"]
    if config_hash(config) != chash:
        raise FormatError(f"run manifest hash {chash!r} does not match its embedded config")
    cells: list[CellResult] = []
    cells_root = os.path.join(out_dir, "cells")
    if os.path.isdir(cells_root):
        for name in sorted(os.listdir(cells_root)):
            report_path = os.path.join(cells_root, name, "report.json")
            if not os.path.exists(report_path):
                continue
            report = load_report(report_path)
            cells.append(CellResult(report.arm, report.seed, report.n_shot, report.m, report, report_path))
    return RunRecord(config, chash, tuple(cells))


# ---------------------------------------------------------------------------
# summaries


def summarize(record: RunRecord) -> list[SummaryRow]:
    """Aggregate cell accuracies over master seeds (population std)."""
    groups: dict[tuple, list[float]] = {}
    for cell in record.cells:
        groups.setdefault((cell.arm, cell.n_shot, cell.m), []).append(cell.report.top1_accuracy)
    rows = []
    for arm, n_shot, m in sorted(groups):
        vals = np.asarray(groups[(arm, n_shot, m)], dtype=np.float64)
        rows.append(SummaryRow(arm, n_shot, m, int(vals.size), float(vals.mean()), float(vals.std())))
    return rows


def summary_csv(rows: list[SummaryRow]) -> str:
    lines = ["arm,n_shot,m,seeds,mean_top1,std_top1"]
    for r in rows:
        lines.append(f"{r.arm},{r.n_shot},{r.m},{r.seeds},{r.mean_top1:.6f},{r.std_top1:.6f}")
    return "\n".join(lines) + "\n"


def write_summary(record: RunRecord, path: str) -> list[SummaryRow]:
    rows = summarize(record)
    tmp = path + f".tmp-{os.getpid()}"
    with open(tmp, "w") as f:
        f.write(summary_csv(rows))
    os.replace(tmp, path)
    return rows
