"""Self-paced selection of hallucinated samples.

For each novel class the finetuned generator produces a pool of candidates
conditioned on embeddings resampled from the class's support set. The
finetuned discriminator scores every candidate in a single forward pass
(realism via sigmoid of the adversarial logit, class posterior via softmax
of the class head). Candidates are sorted per class in descending score
order and the top m augment the real support set.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .data import (
    Dataset,
    Episode,
    Sample,
    save_dataset,
    load_dataset,
    stack_embeddings,
)
from .errors import ConfigError, FormatError, SelectionError
from .seeding import derive_seed
from .tcgan import GanModel, discriminator_scores, generate

SCORING_RULES = ("class-only", "realism-gated")
POOL_FORMAT_VERSION = "1"
_SCORE_BATCH = 64


@dataclass(frozen=True)
class Candidate:
    """One generated image with its discriminator scores.

    ``z_seed`` reproduces the noise vector via
    ``np.random.default_rng(z_seed).standard_normal(d_z)``.
    """

    image: np.ndarray
    text_embedding: np.ndarray
    intended_class: int
    source_embedding_index: int
    z_seed: int
    realism_score: float
    class_posterior: float
    combined_score: float
    generation_index: int


@dataclass
class CandidatePool:
    per_class: dict[int, list[Candidate]]
    pool_size: int
    scoring_rule: str


@dataclass
class AugmentedDataset:
    """Episode support plus selected hallucinations, provenance kept apart."""

    real: list[Sample]
    hallucinated: list[Sample]

    def all_samples(self) -> list[Sample]:
        return list(self.real) + list(self.hallucinated)

    def provenance(self) -> list[str]:
        return ["real"] * len(self.real) + ["hallucinated"] * len(self.hallucinated)

    def class_ids(self) -> tuple[int, ...]:
        return tuple(sorted({s.label for s in self.all_samples()}))


def combine_scores(realism_score: float, class_posterior: float, rule: str) -> float:
    if rule == "class-only":
        return class_posterior
    if rule == "realism-gated":
        return realism_score * class_posterior
    raise ConfigError(f"unknown scoring rule {rule!r}; expected one of {SCORING_RULES}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _score_batch(model: GanModel, images: np.ndarray, embeds: np.ndarray,
                 head_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    realism_logits, class_logits = discriminator_scores(model, images, embeds)
    realism = _sigmoid(realism_logits)
    posterior = _softmax(class_logits)[np.arange(len(head_idx)), head_idx]
    return realism, posterior


def score_candidate(model: GanModel, image: np.ndarray, text_embedding: np.ndarray,
                    intended_class: int, rule: str = "class-only"):
    """(realism_score, class_posterior, combined_score) for one image."""
    head = model.label_index(intended_class)
    realism, posterior = _score_batch(
        model, np.asarray(image)[None], np.asarray(text_embedding)[None],
        np.array([head]),
    )
    r, p = float(realism[0]), float(posterior[0])
    return r, p, combine_scores(r, p, rule)


def build_pool(model: GanModel, episode: Episode, pool_size: int, seed: int,
               rule: str = "class-only") -> CandidatePool:
    """Generate and score ``pool_size`` candidates per novel class.

    Conditioning embeddings are resampled uniformly (with replacement) from
    the class's support embeddings; each candidate's noise vector comes from
    its own derived seed so pools are reproducible candidate by candidate.
    """
    if pool_size < 1:
        raise ConfigError("pool_size must be >= 1")
    if not episode.support:
        raise SelectionError("episode support is empty")
    if rule not in SCORING_RULES:
        raise ConfigError(f"unknown scoring rule {rule!r}; expected one of {SCORING_RULES}")
    d_z = model.arch.d_z
    per_class: dict[int, list[Candidate]] = {}
    for cls in sorted(set(episode.novel_classes)):
        support_embeds = stack_embeddings(episode.support_of(cls))
        head = model.label_index(cls)
        rng = np.random.default_rng(derive_seed(seed, "pool", cls))
        src_idx = rng.integers(0, len(support_embeds), size=pool_size)
        z_seeds = [derive_seed(seed, "z", cls, j) for j in range(pool_size)]
        zs = np.stack([
            np.random.default_rng(zs_j).standard_normal(d_z) for zs_j in z_seeds
        ]).astype(np.float32)
        embeds = support_embeds[src_idx]

        candidates: list[Candidate] = []
        for lo in range(0, pool_size, _SCORE_BATCH):
            hi = min(lo + _SCORE_BATCH, pool_size)
            images = generate(model, embeds[lo:hi], zs[lo:hi])
            realism, posterior = _score_batch(
                model, images, embeds[lo:hi], np.full(hi - lo, head)
            )
            for j in range(lo, hi):
                r, p = float(realism[j - lo]), float(posterior[j - lo])
                candidates.append(Candidate(
                    image=images[j - lo],
                    text_embedding=embeds[j],
                    intended_class=cls,
                    source_embedding_index=int(src_idx[j]),
                    z_seed=z_seeds[j],
                    realism_score=r,
                    class_posterior=p,
                    combined_score=combine_scores(r, p, rule),
                    generation_index=j,
                ))
        per_class[cls] = candidates
    return CandidatePool(per_class=per_class, pool_size=pool_size, scoring_rule=rule)


def sort_candidates(candidates: list[Candidate]) -> list[Candidate]:
    """Descending combined score, ties broken by ascending generation index."""
    return sorted(candidates, key=lambda c: (-c.combined_score, c.generation_index))


def select_top_m(pool: CandidatePool, m: int) -> dict[int, list[Candidate]]:
    """Keep the m top-scored candidates per class (m = 0 selects nothing)."""
    if m < 0:
        raise ConfigError("m must be >= 0")
    selected: dict[int, list[Candidate]] = {}
    for cls, candidates in sorted(pool.per_class.items()):
        if m > len(candidates):
            raise SelectionError(
                f"class {cls}: requested m={m} exceeds pool size {len(candidates)}"
            )
        selected[cls] = sort_candidates(candidates)[:m]
    return selected


def build_augmented(episode: Episode, selected: dict[int, list[Candidate]]) -> AugmentedDataset:
    """Concatenate the real support with selected candidates as labeled samples."""
    expected = set(episode.novel_classes)
    got = set(selected)
    if got != expected:
        raise SelectionError(
            f"selected classes {sorted(got)} do not match episode classes {sorted(expected)}"
        )
    hallucinated = [
        Sample(image=c.image, text_embedding=c.text_embedding, label=c.intended_class)
        for cls in sorted(selected)
        for c in selected[cls]
    ]
    return AugmentedDataset(real=list(episode.support), hallucinated=hallucinated)


def dump_pool(pool: CandidatePool, out_dir: str) -> None:
    """Write pool.jsonl plus the candidate images in the dataset binary format."""
    os.makedirs(out_dir, exist_ok=True)
    ordered = [c for cls in sorted(pool.per_class) for c in pool.per_class[cls]]
    with open(os.path.join(out_dir, "pool.jsonl"), "w") as f:
        for c in ordered:
            f.write(json.dumps({
                "class": c.intended_class,
                "generation_index": c.generation_index,
                "z_seed": c.z_seed,
                "source_embedding_index": c.source_embedding_index,
                "realism_score": c.realism_score,
                "class_posterior": c.class_posterior,
                "combined_score": c.combined_score,
            }, sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "pool_manifest.json"), "w") as f:
        json.dump({
            "format_version": POOL_FORMAT_VERSION,
            "pool_size": pool.pool_size,
            "scoring_rule": pool.scoring_rule,
            "classes": sorted(pool.per_class),
        }, f, indent=2, sort_keys=True)
    images = np.stack([c.image for c in ordered])
    embeds = np.stack([c.text_embedding for c in ordered])
    labels = np.array([c.intended_class for c in ordered], dtype=np.int64)
    ds = Dataset(
        images=images, embeddings=embeds, labels=labels,
        class_set=frozenset(int(c) for c in labels),
        image_shape=tuple(images.shape[1:]), embed_dim=embeds.shape[1],
    )
    save_dataset(ds, os.path.join(out_dir, "images"))


def load_pool(in_dir: str) -> CandidatePool:
    try:
        with open(os.path.join(in_dir, "pool_manifest.json")) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read pool manifest in {in_dir}: {exc}") from exc
    if manifest.get("format_version") != POOL_FORMAT_VERSION:
        raise FormatError(f"unsupported pool format version {manifest.get('format_version')!r}")
    ds = load_dataset(os.path.join(in_dir, "images"))
    records = []
    with open(os.path.join(in_dir, "pool.jsonl")) as f:
        for line in f:
            records.append(json.loads(line))
    if len(records) != len(ds):
        raise FormatError(
            f"pool.jsonl has {len(records)} records but images hold {len(ds)} samples"
        )
    per_class: dict[int, list[Candidate]] = {int(c): [] for c in manifest["classes"]}
    for i, rec in enumerate(records):
        cls = int(rec["class"])
        if cls not in per_class:
            raise FormatError(f"pool record class {cls} not in manifest classes")
        if cls != int(ds.labels[i]):
            raise FormatError(f"record {i}: class {cls} != stored label {int(ds.labels[i])}")
        per_class[cls].append(Candidate(
            image=ds.images[i],
            text_embedding=ds.embeddings[i],
            intended_class=cls,
            source_embedding_index=int(rec["source_embedding_index"]),
            z_seed=int(rec["z_seed"]),
            realism_score=float(rec["realism_score"]),
            class_posterior=float(rec["class_posterior"]),
            combined_score=float(rec["combined_score"]),
            generation_index=int(rec["generation_index"]),
        ))
    sizes = {cls: len(v) for cls, v in per_class.items()}
    if len(set(sizes.values())) > 1 or set(sizes.values()) != {int(manifest["pool_size"])}:
        raise FormatError(f"per-class pool sizes {sizes} disagree with manifest")
    return CandidatePool(
        per_class=per_class,
        pool_size=int(manifest["pool_size"]),
        scoring_rule=manifest["scoring_rule"],
    )


def save_augmented(data: AugmentedDataset, out_dir: str) -> None:
    """Dataset binary format plus a provenance sidecar."""
    samples = data.all_samples()
    if not samples:
        raise SelectionError("augmented dataset is empty")
    images = np.stack([s.image for s in samples])
    embeds = np.stack([s.text_embedding for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    ds = Dataset(
        images=images, embeddings=embeds, labels=labels,
        class_set=frozenset(int(c) for c in labels),
        image_shape=tuple(images.shape[1:]), embed_dim=embeds.shape[1],
    )
    save_dataset(ds, out_dir)
    with open(os.path.join(out_dir, "provenance.json"), "w") as f:
        json.dump({"provenance": data.provenance()}, f)


def load_augmented(in_dir: str) -> AugmentedDataset:
    ds = load_dataset(in_dir)
    try:
        with open(os.path.join(in_dir, "provenance.json")) as f:
            prov = json.load(f)["provenance"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise FormatError(f"cannot read provenance sidecar in {in_dir}: {exc}") from exc
    if len(prov) != len(ds):
        raise FormatError("provenance length does not match sample count")
    real = [s for s, p in zip(ds.samples, prov) if p == "real"]
    halluc = [s for s, p in zip(ds.samples, prov) if p == "hallucinated"]
    if len(real) + len(halluc) != len(ds):
        raise FormatError("provenance entries must be 'real' or 'hallucinated'")
    return AugmentedDataset(real=real, hallucinated=halluc)
