"""DCGAN-style networks sized for small square images (8 to 64 px)."""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ConfigError


@dataclass(frozen=True)
class GanArch:
    """Architecture configuration shared by generator and discriminator."""

    d_z: int = 16
    embed_dim: int = 16
    image_shape: tuple[int, int, int] = (32, 32, 3)
    gen_width: int = 32
    disc_width: int = 32
    cond_dim: int = 16

    def __post_init__(self):
        if min(self.d_z, self.embed_dim, self.gen_width, self.disc_width, self.cond_dim) <= 0:
            raise ConfigError("all architecture dimensions must be positive")
        _check_image_shape(self.image_shape)


def _check_image_shape(image_shape) -> int:
    h, w, c = image_shape
    if h != w:
        raise ConfigError(f"images must be square, got {image_shape}")
    if c <= 0:
        raise ConfigError(f"channel count must be positive, got {c}")
    n_up = math.log2(h / 4)
    if h < 8 or n_up != int(n_up):
        raise ConfigError(f"image side must be a power of two >= 8, got {h}")
    return int(n_up)


def dcgan_init(module: nn.Module) -> None:
    name = module.__class__.__name__
    if "Conv" in name or "Linear" in name:
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif "BatchNorm" in name:
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


class Generator(nn.Module):
    """Maps (text embedding, noise) to an image in [-1, 1].

    Conditioning is by concatenation at the input: [embedding, z] feeds a
    linear projection to a 4x4 feature map, followed by stride-2 transposed
    convolutions up to the target resolution and a tanh output.
    """

    def __init__(self, arch: GanArch, norm: bool = True):
        super().__init__()
        self.arch = arch
        h, _, c = arch.image_shape
        n_up = _check_image_shape(arch.image_shape)
        base_ch = arch.gen_width * 2 ** (n_up - 1)
        self.base_ch = base_ch
        self.fc = nn.Linear(arch.embed_dim + arch.d_z, base_ch * 4 * 4)
        layers: list[nn.Module] = []
        ch = base_ch
        for i in range(n_up):
            if norm:
                layers.append(nn.BatchNorm2d(ch))
            layers.append(nn.ReLU())
            out_ch = c if i == n_up - 1 else ch // 2
            layers.append(nn.ConvTranspose2d(ch, out_ch, 4, 2, 1))
            ch = out_ch
        layers.append(nn.Tanh())
        self.net = nn.Sequential(*layers)
        self.apply(dcgan_init)

    def forward(self, embeds: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        if embeds.shape[1] != self.arch.embed_dim or z.shape[1] != self.arch.d_z:
            raise ConfigError(
                f"expected embed_dim={self.arch.embed_dim}, d_z={self.arch.d_z}, "
                f"got {embeds.shape[1]} and {z.shape[1]}"
            )
        h = self.fc(torch.cat([embeds, z], dim=1))
        h = h.view(-1, self.base_ch, 4, 4)
        return self.net(h)


class Discriminator(nn.Module):
    """Realism and class heads over a shared image/text trunk.

    The image passes through stride-2 convolutions down to a 4x4 map; the
    text embedding is projected and tiled over that map, fused by a 1x1
    convolution, and the flattened features feed both heads in one pass.
    No normalization layers, so per-sample scores are batch-independent.
    """

    def __init__(self, arch: GanArch, num_classes: int):
        super().__init__()
        if num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        self.arch = arch
        self.num_classes = num_classes
        h, _, c = arch.image_shape
        n_down = _check_image_shape(arch.image_shape)
        layers: list[nn.Module] = []
        ch = c
        width = arch.disc_width
        for i in range(n_down):
            out_ch = width * 2**i
            layers.append(nn.Conv2d(ch, out_ch, 4, 2, 1))
            layers.append(nn.LeakyReLU(0.2))
            ch = out_ch
        self.conv = nn.Sequential(*layers)
        self.embed_proj = nn.Linear(arch.embed_dim, arch.cond_dim)
        self.fuse = nn.Conv2d(ch + arch.cond_dim, ch, 1)
        self.feat_dim = ch * 4 * 4
        self.realism_head = nn.Linear(self.feat_dim, 1)
        self.class_head = nn.Linear(self.feat_dim, num_classes)
        self.apply(dcgan_init)

    def trunk(self, images: torch.Tensor, embeds: torch.Tensor) -> torch.Tensor:
        if images.shape[1] != self.arch.image_shape[2]:
            raise ConfigError(
                f"expected {self.arch.image_shape[2]} image channels, got {images.shape[1]}"
            )
        if embeds.shape[1] != self.arch.embed_dim:
            raise ConfigError(
                f"expected embed_dim={self.arch.embed_dim}, got {embeds.shape[1]}"
            )
        h = self.conv(images)
        e = self.embed_proj(embeds)[:, :, None, None].expand(-1, -1, h.shape[2], h.shape[3])
        h = torch.nn.functional.leaky_relu(self.fuse(torch.cat([h, e], dim=1)), 0.2)
        return h.flatten(1)

    def forward(self, images: torch.Tensor, embeds: torch.Tensor):
        feat = self.trunk(images, embeds)
        return self.realism_head(feat).squeeze(1), self.class_head(feat)

    def reset_class_head(self, num_classes: int) -> None:
        self.num_classes = num_classes
        self.class_head = nn.Linear(self.feat_dim, num_classes)
        dcgan_init(self.class_head)


class ConvClassifier(nn.Module):
    """Compact 3-block CNN for episode-level classification."""

    def __init__(self, image_shape: tuple[int, int, int], num_classes: int, width: int = 16):
        super().__init__()
        if num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        h, _, c = image_shape
        _check_image_shape(image_shape)
        blocks: list[nn.Module] = []
        ch = c
        side = h
        for i in range(3):
            out_ch = width * 2**i
            blocks.extend([nn.Conv2d(ch, out_ch, 3, 1, 1), nn.ReLU()])
            if side > 4:
                blocks.append(nn.MaxPool2d(2))
                side //= 2
            ch = out_ch
        self.features = nn.Sequential(*blocks)
        self.head = nn.Linear(ch * side * side, num_classes)
        self.image_shape = image_shape
        self.num_classes = num_classes
        self.width = width

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(images).flatten(1))


def to_nchw(images) -> torch.Tensor:
    """(N, H, W, C) float numpy/tensor -> (N, C, H, W) float32 tensor."""
    t = torch.as_tensor(images, dtype=torch.float32)
    if t.ndim == 3:
        t = t[None]
    return t.permute(0, 3, 1, 2).contiguous()


def to_nhwc(images: torch.Tensor):
    """(N, C, H, W) tensor -> (N, H, W, C) float32 numpy array."""
    return images.detach().permute(0, 2, 3, 1).contiguous().numpy().astype("float32", copy=False)
