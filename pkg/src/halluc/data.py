"""Multimodal toy dataset: images paired with text-style embeddings.

The synthetic generator builds one visual prototype per class (a shared
smooth background plus class-specific colored blobs) and derives the class
embedding from the blob content through a fixed random projection, so the
embedding really is a low-dimensional "description" of what sets the class
apart rather than of the shared scene.
Samples are the prototype plus i.i.d. pixel noise; embeddings are the class
embedding plus Gaussian noise. Everything is a pure function of the spec
(including its seed).
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .seeding import derive_seed

DATASET_FORMAT_VERSION = "1"

# Prototype geometry. Classes share the background and differ only in a few
# soft blobs, which keeps the task fine-grained: prototypes are similar
# enough that single noisy samples are genuinely ambiguous.
_BACKGROUND_RMS = 0.25
_BLOBS_PER_CLASS = 3
_BLOB_AMP_RANGE = (0.02, 0.04)
_BLOB_SIGMA_RANGE = (0.10, 0.20)  # fraction of image side
_PROTO_CLIP = 0.95


@dataclass(frozen=True)
class Sample:
    """One (image, text embedding, class label) triple.

    image: (H, W, C) float32 with values in [-1, 1].
    text_embedding: (embed_dim,) float32, finite.
    label: non-negative class id.
    """

    image: np.ndarray
    text_embedding: np.ndarray
    label: int


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int
    samples_per_class: int
    image_shape: tuple[int, int, int] = (32, 32, 3)
    embed_dim: int = 16
    noise_level: float = 0.1
    seed: int = 0

    def __post_init__(self):
        h, w, c = self.image_shape
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if h <= 0 or w <= 0 or c <= 0:
            raise ConfigError(f"non-positive image_shape {self.image_shape}")
        if self.embed_dim <= 0:
            raise ConfigError("embed_dim must be positive")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")


@dataclass
class Dataset:
    """Ordered sample collection with stacked tensors for training.

    ``samples`` is stable given the construction seed; the stacked arrays
    (``images``, ``embeddings``, ``labels``) share memory with the samples.
    """

    images: np.ndarray       # (N, H, W, C) float32
    embeddings: np.ndarray   # (N, embed_dim) float32
    labels: np.ndarray       # (N,) int64
    class_set: frozenset[int]
    image_shape: tuple[int, int, int]
    embed_dim: int
    samples: list[Sample] = field(init=False, repr=False)

    def __post_init__(self):
        self.samples = [
            Sample(self.images[i], self.embeddings[i], int(self.labels[i]))
            for i in range(len(self.labels))
        ]

    def __len__(self) -> int:
        return len(self.samples)

    def indices_of(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


@dataclass(frozen=True)
class SplitConfig:
    """Disjoint base/novel partition of a dataset's classes."""

    base_classes: frozenset[int]
    novel_classes: frozenset[int]
    seed: int

    def __post_init__(self):
        if self.base_classes & self.novel_classes:
            raise ConfigError("base and novel classes overlap")
        if not self.base_classes or not self.novel_classes:
            raise ConfigError("both split sides must be non-empty")


@dataclass(frozen=True)
class Episode:
    """An n-shot draw from the novel classes plus disjoint query samples."""

    n_shot: int
    support: list[Sample]
    query: list[Sample]
    novel_classes: tuple[int, ...]

    def support_of(self, label: int) -> list[Sample]:
        return [s for s in self.support if s.label == label]


def _smooth_field(rng: np.random.Generator, shape: tuple[int, int, int]) -> np.ndarray:
    """Low-frequency random field from a small cosine basis, RMS-normalized."""
    h, w, c = shape
    ys = np.arange(h)[:, None] / h
    xs = np.arange(w)[None, :] / w
    out = np.zeros((h, w, c))
    for fy in range(3):
        for fx in range(3):
            if fy == 0 and fx == 0:
                continue
            amp = rng.normal(scale=1.0 / (fy + fx), size=c)
            phase = rng.uniform(0.0, 2 * np.pi, size=c)
            wave = 2 * np.pi * (fy * ys + fx * xs)
            out += amp[None, None, :] * np.cos(wave[:, :, None] + phase[None, None, :])
    rms = np.sqrt(np.mean(out**2))
    return out * (_BACKGROUND_RMS / max(rms, 1e-8))


def _class_blobs(rng: np.random.Generator, shape: tuple[int, int, int]) -> np.ndarray:
    h, w, c = shape
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    out = np.zeros((h, w, c))
    for _ in range(_BLOBS_PER_CLASS):
        cy = rng.uniform(0.2 * h, 0.8 * h)
        cx = rng.uniform(0.2 * w, 0.8 * w)
        sigma = rng.uniform(*_BLOB_SIGMA_RANGE) * min(h, w)
        amp = rng.uniform(*_BLOB_AMP_RANGE, size=c) * rng.choice([-1.0, 1.0], size=c)
        bump = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sigma**2))
        out += amp[None, None, :] * bump[:, :, None]
    return out


def class_prototypes(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free class templates: images (K, H, W, C) and embeddings (K, d).

    The embedding prototype is a fixed random linear projection of the
    class-specific blob field (the part of the prototype that is not the
    shared background), normalized to norm sqrt(embed_dim). Like a caption,
    it encodes what distinguishes the class, not the scene it shares with
    every other class; this cross-modal link is what lets a generator
    trained on base classes carry over to novel ones.
    """
    h, w, c = spec.image_shape
    shared = np.random.default_rng(derive_seed(spec.seed, "shared"))
    background = _smooth_field(shared, spec.image_shape)
    proj = shared.normal(size=(spec.embed_dim, h * w * c)) / np.sqrt(h * w * c)

    protos = np.empty((spec.num_classes, h, w, c), dtype=np.float32)
    embeds = np.empty((spec.num_classes, spec.embed_dim), dtype=np.float32)
    for k in range(spec.num_classes):
        rng = np.random.default_rng(derive_seed(spec.seed, "class", k))
        blobs = _class_blobs(rng, spec.image_shape)
        protos[k] = np.clip(background + blobs, -_PROTO_CLIP, _PROTO_CLIP).astype(np.float32)
        e = proj @ blobs.reshape(-1)
        e = e / max(np.linalg.norm(e), 1e-8) * np.sqrt(spec.embed_dim)
        embeds[k] = e.astype(np.float32)
    return protos, embeds


def synth_dataset(spec: SynthSpec) -> Dataset:
    """Build the synthetic dataset; bit-identical for identical specs."""
    h, w, c = spec.image_shape
    protos, proto_embeds = class_prototypes(spec)

    n_total = spec.num_classes * spec.samples_per_class
    images = np.empty((n_total, h, w, c), dtype=np.float32)
    embeds = np.empty((n_total, spec.embed_dim), dtype=np.float32)
    labels = np.empty(n_total, dtype=np.int64)
    for k in range(spec.num_classes):
        rng = np.random.default_rng(derive_seed(spec.seed, "noise", k))
        s = spec.samples_per_class
        lo = k * s
        img_noise = rng.normal(scale=1.0, size=(s, h, w, c)) if spec.noise_level > 0 else 0.0
        emb_noise = rng.normal(scale=1.0, size=(s, spec.embed_dim)) if spec.noise_level > 0 else 0.0
        images[lo:lo + s] = np.clip(
            protos[k][None] + spec.noise_level * img_noise, -1.0, 1.0
        ).astype(np.float32)
        embeds[lo:lo + s] = (proto_embeds[k][None] + spec.noise_level * emb_noise).astype(np.float32)
        labels[lo:lo + s] = k

    return Dataset(
        images=images,
        embeddings=embeds,
        labels=labels,
        class_set=frozenset(range(spec.num_classes)),
        image_shape=spec.image_shape,
        embed_dim=spec.embed_dim,
    )


def make_split(dataset: Dataset, base_fraction: float, seed: int) -> SplitConfig:
    """Seeded shuffle of class ids into base/novel, at least one on each side."""
    classes = sorted(dataset.class_set)
    if len(classes) < 2:
        raise DataError("need at least 2 classes to split")
    if not (0.0 < base_fraction < 1.0):
        raise ConfigError(f"base_fraction must be in (0,1), got {base_fraction}")
    rng = np.random.default_rng(seed)
    order = [classes[i] for i in rng.permutation(len(classes))]
    n_base = int(round(base_fraction * len(classes)))
    n_base = min(max(n_base, 1), len(classes) - 1)
    return SplitConfig(
        base_classes=frozenset(order[:n_base]),
        novel_classes=frozenset(order[n_base:]),
        seed=seed,
    )


def sample_episode(dataset: Dataset, split: SplitConfig, n_shot: int,
                   query_per_class: int, seed: int) -> Episode:
    """Draw n_shot support and query_per_class query samples per novel class.

    Support and query are disjoint by sample identity. Raises naming the
    offending class when it holds too few samples.
    """
    if n_shot < 1 or query_per_class < 1:
        raise ConfigError("n_shot and query_per_class must be positive")
    support: list[Sample] = []
    query: list[Sample] = []
    novel = tuple(sorted(split.novel_classes))
    for label in novel:
        idx = dataset.indices_of(label)
        need = n_shot + query_per_class
        if len(idx) < need:
            raise DataError(
                f"class {label} has {len(idx)} samples but the episode "
                f"needs {need} (n_shot={n_shot} + query={query_per_class})"
            )
        rng = np.random.default_rng(derive_seed(seed, "episode", label))
        perm = idx[rng.permutation(len(idx))]
        support.extend(dataset.samples[i] for i in perm[:n_shot])
        query.extend(dataset.samples[i] for i in perm[n_shot:need])
    return Episode(n_shot=n_shot, support=support, query=query, novel_classes=novel)


def stack_images(samples: list[Sample]) -> np.ndarray:
    return np.stack([s.image for s in samples])


def stack_embeddings(samples: list[Sample]) -> np.ndarray:
    return np.stack([s.text_embedding for s in samples])


def stack_labels(samples: list[Sample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)


def save_dataset(dataset: Dataset, out_dir: str) -> None:
    """Write manifest.json + images.f32 / embeds.f32 / labels.u32."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "image_shape": list(dataset.image_shape),
        "embed_dim": dataset.embed_dim,
        "classes": sorted(dataset.class_set),
        "num_samples": len(dataset),
    }
    dataset.images.astype("<f4").tofile(os.path.join(out_dir, "images.f32"))
    dataset.embeddings.astype("<f4").tofile(os.path.join(out_dir, "embeds.f32"))
    dataset.labels.astype("<u4").tofile(os.path.join(out_dir, "labels.u32"))
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def load_dataset(in_dir: str) -> Dataset:
    """Load the on-disk format, validating sizes against the manifest."""
    try:
        with open(os.path.join(in_dir, "manifest.json")) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read dataset manifest in {in_dir}: {exc}") from exc
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise FormatError(f"unsupported dataset format version {manifest.get('format_version')!r}")

    shape = tuple(manifest["image_shape"])
    embed_dim = int(manifest["embed_dim"])
    n = int(manifest["num_samples"])
    classes = frozenset(int(c) for c in manifest["classes"])

    def _read(name: str, dtype: str, count: int) -> np.ndarray:
        path = os.path.join(in_dir, name)
        arr = np.fromfile(path, dtype=dtype)
        if arr.size != count:
            raise FormatError(
                f"{name} holds {arr.size} values but the manifest implies {count}"
            )
        return arr

    h, w, c = shape
    images = _read("images.f32", "<f4", n * h * w * c).reshape(n, h, w, c)
    embeds = _read("embeds.f32", "<f4", n * embed_dim).reshape(n, embed_dim)
    labels = _read("labels.u32", "<u4", n).astype(np.int64)
    bad = set(np.unique(labels)) - classes
    if bad:
        raise FormatError(f"labels {sorted(bad)} not in the manifest class list")
    return Dataset(
        images=images.astype(np.float32),
        embeddings=embeds.astype(np.float32),
        labels=labels,
        class_set=classes,
        image_shape=shape,
        embed_dim=embed_dim,
    )
