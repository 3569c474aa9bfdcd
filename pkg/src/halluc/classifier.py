"""Final episode classifier: train on the augmented set, evaluate on queries."""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .data import Sample, stack_images, stack_labels
from .errors import ConfigError, DataError, DivergenceError, FormatError
from .models import ConvClassifier, to_nchw
from .seeding import derive_seed
from .selection import AugmentedDataset

REPORT_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class ClsHyper:
    lr: float = 1e-3
    steps: int = 400
    batch_size: int = 32
    seed: int = 0
    width: int = 16
    halluc_weight: float = 1.0  # loss weight of hallucinated vs real samples

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.width <= 0:
            raise ConfigError("lr, batch_size and width must be positive")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.halluc_weight < 0:
            raise ConfigError("halluc_weight must be >= 0")


@dataclass
class ClassifierModel:
    net: ConvClassifier
    class_ids: tuple[int, ...]
    history: dict[str, list[float]] = field(default_factory=dict, repr=False)

    def label_index(self, label: int) -> int:
        try:
            return self.class_ids.index(label)
        except ValueError:
            raise ConfigError(f"label {label} outside classifier head {self.class_ids}") from None


@dataclass
class EvalReport:
    """Exact episode metrics; confusion rows are true classes, columns predictions.

    Row/column order follows ``class_ids``. ``per_class_accuracy`` for a class
    with zero query samples is reported as 0.0.
    """

    top1_accuracy: float
    per_class_accuracy: dict[int, float]
    confusion_matrix: np.ndarray
    n_shot: int
    m: int
    seed: int
    arm: str
    class_ids: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "top1_accuracy": self.top1_accuracy,
            "per_class_accuracy": {str(k): v for k, v in sorted(self.per_class_accuracy.items())},
            "confusion_matrix": [int(v) for v in np.asarray(self.confusion_matrix).reshape(-1)],
            "n_shot": self.n_shot,
            "m": self.m,
            "seed": self.seed,
            "arm": self.arm,
            "class_ids": list(self.class_ids),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EvalReport":
        class_ids = tuple(int(c) for c in d["class_ids"])
        k = len(class_ids)
        matrix = np.array(d["confusion_matrix"], dtype=np.int64)
        if matrix.size != k * k:
            raise FormatError(f"confusion matrix has {matrix.size} entries, expected {k * k}")
        return cls(
            top1_accuracy=float(d["top1_accuracy"]),
            per_class_accuracy={int(k_): float(v) for k_, v in d["per_class_accuracy"].items()},
            confusion_matrix=matrix.reshape(k, k),
            n_shot=int(d["n_shot"]),
            m=int(d["m"]),
            seed=int(d["seed"]),
            arm=d["arm"],
            class_ids=class_ids,
        )


def save_report(report: EvalReport, path: str) -> None:
    tmp = path + f".tmp-{os.getpid()}"
    with open(tmp, "w") as f:
        json.dump(report.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def load_report(path: str) -> EvalReport:
    with open(path) as f:
        return EvalReport.from_json_dict(json.load(f))


def train_classifier(data: AugmentedDataset, hyper: ClsHyper) -> ClassifierModel:
    """Cross-entropy training over real plus hallucinated samples.

    Hallucinated samples enter the loss with weight ``halluc_weight``
    (default 1.0, equal footing). Deterministic given the hyper seed.
    """
    samples = data.all_samples()
    if not samples:
        raise DataError("cannot train a classifier on an empty dataset")
    class_ids = data.class_ids()
    lut = {c: i for i, c in enumerate(class_ids)}

    images = to_nchw(stack_images(samples))
    labels = torch.tensor([lut[int(s.label)] for s in samples], dtype=torch.long)
    weights = torch.tensor(
        [1.0 if p == "real" else hyper.halluc_weight for p in data.provenance()],
        dtype=torch.float32,
    )

    torch.manual_seed(derive_seed(hyper.seed, "cls-init"))
    image_shape = tuple(samples[0].image.shape)
    net = ConvClassifier(image_shape, num_classes=len(class_ids), width=hyper.width)
    rng = torch.Generator().manual_seed(derive_seed(hyper.seed, "cls-stream"))
    opt = torch.optim.Adam(net.parameters(), lr=hyper.lr)

    n = len(samples)
    history: dict[str, list[float]] = {"loss": []}
    net.train()
    for step in range(hyper.steps):
        idx = torch.randint(n, (hyper.batch_size,), generator=rng)
        logits = net(images[idx])
        ce = F.cross_entropy(logits, labels[idx], reduction="none")
        w = weights[idx]
        loss = (ce * w).sum() / w.sum().clamp_min(1e-12)
        opt.zero_grad()
        loss.backward()
        opt.step()
        val = float(loss.detach())
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite classifier loss at step {step}: {val}")
        history["loss"].append(val)
    net.eval()
    return ClassifierModel(net=net, class_ids=class_ids, history=history)


def predict(model: ClassifierModel, samples: list[Sample]) -> np.ndarray:
    """Argmax class ids; ties resolve to the lowest head index."""
    model.net.eval()
    with torch.no_grad():
        logits = model.net(to_nchw(stack_images(samples))).numpy()
    head_idx = np.argmax(logits, axis=1)
    return np.array([model.class_ids[i] for i in head_idx], dtype=np.int64)


def evaluate(model: ClassifierModel, query: list[Sample], *, n_shot: int = 0,
             m: int = 0, seed: int = 0, arm: str = "real-only") -> EvalReport:
    """Exact top-1, per-class accuracy, and confusion counts over the query set."""
    if not query:
        raise DataError("query set is empty")
    labels = stack_labels(query)
    bad = sorted(set(int(y) for y in labels) - set(model.class_ids))
    if bad:
        raise ConfigError(f"query labels {bad} outside classifier head {model.class_ids}")
    preds = predict(model, query)

    k = len(model.class_ids)
    lut = {c: i for i, c in enumerate(model.class_ids)}
    confusion = np.zeros((k, k), dtype=np.int64)
    for y, p in zip(labels, preds):
        confusion[lut[int(y)], lut[int(p)]] += 1
    row_sums = confusion.sum(axis=1)
    per_class = {
        c: (float(confusion[i, i] / row_sums[i]) if row_sums[i] > 0 else 0.0)
        for i, c in enumerate(model.class_ids)
    }
    top1 = float(np.trace(confusion) / confusion.sum())
    return EvalReport(
        top1_accuracy=top1,
        per_class_accuracy=per_class,
        confusion_matrix=confusion,
        n_shot=n_shot,
        m=m,
        seed=seed,
        arm=arm,
        class_ids=model.class_ids,
    )
