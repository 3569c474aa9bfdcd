"""Checkpoint persistence: JSON manifest plus one float32 blob per tensor.

Every tensor is written little-endian float32 under its state-dict name;
the manifest records shapes and original dtypes so integer buffers (batch
norm step counters) survive the round trip. Loading validates every shape
against both the manifest and the freshly built network. Directories are
written to a temporary sibling and renamed into place.
"""

import json
import os
import shutil
from contextlib import contextmanager

import numpy as np
import torch

from .errors import FormatError
from .models import ConvClassifier, Discriminator, GanArch, Generator
from .tcgan import GanModel

CHECKPOINT_FORMAT_VERSION = "1"
GAN_PHASES = ("pretrained", "finetuned")


@contextmanager
def atomic_dir(target: str):
    """Write into a temp directory, then swap it into place."""
    tmp = target.rstrip("/") + f".tmp-{os.getpid()}"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if os.path.exists(target):
        shutil.rmtree(target)
    os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
    os.replace(tmp, target)


def _write_tensors(state: dict[str, torch.Tensor], out_dir: str) -> dict:
    entries = {}
    for name, tensor in state.items():
        fname = name + ".f32"
        arr = tensor.detach().to(torch.float32).numpy().astype("<f4")
        arr.tofile(os.path.join(out_dir, fname))
        entries[name] = {
            "file": fname,
            "shape": list(tensor.shape),
            "dtype": str(tensor.dtype).removeprefix("torch."),
        }
    return entries


def _read_tensors(in_dir: str, entries: dict, template: dict[str, torch.Tensor]) -> dict:
    if set(entries) != set(template):
        missing = sorted(set(template) - set(entries))
        extra = sorted(set(entries) - set(template))
        raise FormatError(f"tensor name mismatch: missing={missing} unexpected={extra}")
    state = {}
    for name, meta in entries.items():
        shape = tuple(meta["shape"])
        if shape != tuple(template[name].shape):
            raise FormatError(
                f"tensor {name}: manifest shape {shape} != expected {tuple(template[name].shape)}"
            )
        arr = np.fromfile(os.path.join(in_dir, meta["file"]), dtype="<f4")
        if arr.size != int(np.prod(shape, dtype=np.int64)) and not (arr.size == 0 and shape == ()):
            raise FormatError(
                f"tensor {name}: blob holds {arr.size} values, shape {shape} expects "
                f"{int(np.prod(shape, dtype=np.int64))}"
            )
        t = torch.from_numpy(arr.astype(np.float32)).reshape(shape)
        state[name] = t.to(getattr(torch, meta["dtype"]))
    return state


def save_gan(model: GanModel, out_dir: str) -> None:
    with atomic_dir(out_dir) as tmp:
        tensors = {}
        tensors.update({f"generator.{k}": v for k, v in model.generator.state_dict().items()})
        tensors.update({f"discriminator.{k}": v for k, v in model.discriminator.state_dict().items()})
        manifest = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "gan",
            "phase": model.phase,
            "arch": {
                "d_z": model.arch.d_z,
                "embed_dim": model.arch.embed_dim,
                "image_shape": list(model.arch.image_shape),
                "gen_width": model.arch.gen_width,
                "disc_width": model.arch.disc_width,
                "cond_dim": model.arch.cond_dim,
            },
            "num_classes": len(model.class_ids),
            "class_ids": list(model.class_ids),
            "tensors": _write_tensors(tensors, tmp),
        }
        with open(os.path.join(tmp, "model_manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)


def _load_manifest(in_dir: str, kind: str) -> dict:
    path = os.path.join(in_dir, "model_manifest.json")
    try:
        with open(path) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint manifest {path}: {exc}") from exc
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format version {manifest.get('format_version')!r}")
    if manifest.get("kind") != kind:
        raise FormatError(f"checkpoint kind {manifest.get('kind')!r}, expected {kind!r}")
    return manifest


def load_gan(in_dir: str) -> GanModel:
    manifest = _load_manifest(in_dir, "gan")
    if manifest.get("phase") not in GAN_PHASES:
        raise FormatError(f"unknown training phase {manifest.get('phase')!r}")
    a = manifest["arch"]
    arch = GanArch(
        d_z=int(a["d_z"]),
        embed_dim=int(a["embed_dim"]),
        image_shape=tuple(a["image_shape"]),
        gen_width=int(a["gen_width"]),
        disc_width=int(a["disc_width"]),
        cond_dim=int(a["cond_dim"]),
    )
    class_ids = tuple(int(c) for c in manifest["class_ids"])
    if len(class_ids) != int(manifest["num_classes"]):
        raise FormatError("num_classes does not match class_ids length")
    gen = Generator(arch)
    disc = Discriminator(arch, num_classes=len(class_ids))
    template = {f"generator.{k}": v for k, v in gen.state_dict().items()}
    template.update({f"discriminator.{k}": v for k, v in disc.state_dict().items()})
    state = _read_tensors(in_dir, manifest["tensors"], template)
    gen.load_state_dict({k.removeprefix("generator."): v for k, v in state.items()
                         if k.startswith("generator.")})
    disc.load_state_dict({k.removeprefix("discriminator."): v for k, v in state.items()
                          if k.startswith("discriminator.")})
    gen.eval()
    disc.eval()
    return GanModel(gen, disc, arch, class_ids, manifest["phase"])


def save_classifier(net: ConvClassifier, class_ids: tuple[int, ...], out_dir: str) -> None:
    with atomic_dir(out_dir) as tmp:
        manifest = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "classifier",
            "image_shape": list(net.image_shape),
            "width": net.width,
            "num_classes": net.num_classes,
            "class_ids": list(class_ids),
            "tensors": _write_tensors(dict(net.state_dict()), tmp),
        }
        with open(os.path.join(tmp, "model_manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)


def load_classifier(in_dir: str):
    manifest = _load_manifest(in_dir, "classifier")
    net = ConvClassifier(
        tuple(manifest["image_shape"]), int(manifest["num_classes"]), int(manifest["width"])
    )
    state = _read_tensors(in_dir, manifest["tensors"], dict(net.state_dict()))
    net.load_state_dict(state)
    net.eval()
    class_ids = tuple(int(c) for c in manifest["class_ids"])
    if len(class_ids) != net.num_classes:
        raise FormatError("num_classes does not match class_ids length")
    return net, class_ids
