"""自编码器训练：固定 seed 下参数轨迹可复现，loss 平台期按倍率衰减学习率。"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn
from torch.optim.swa_utils import update_bn
from torch.utils.data import DataLoader, Dataset

from apps.repositories.chart_repository import ManifestRow
from apps.repositories.checkpoint_repository import Checkpoint
from apps.schemas.config import TrainConfig
from apps.services.autoencoder.architecture import CaeArchitecture
from apps.services.autoencoder.network import ConvAutoencoder
from apps.services.chart_render import ChartImage
from apps.telemetry.metrics import observe_epoch

logger = logging.getLogger(__name__)

ChartSource = Union[ManifestRow, ChartImage]


class ImageSizeMismatchError(ValueError):
    """图片尺寸与网络输入尺寸不一致。"""


class EmptyManifestError(ValueError):
    """训练集为空。"""


class NonFiniteLossError(ArithmeticError):
    """训练过程中出现 NaN/Inf loss。"""


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    learning_rate: float


@dataclass(frozen=True, eq=False)
class TrainResult:
    checkpoint: Checkpoint
    log: List[EpochLog]


def _load_image(source: ChartSource) -> ChartImage:
    if isinstance(source, ChartImage):
        return source
    return ChartImage.from_png(source.path, source.symbol, source.start_date)


def check_image_size(image: ChartImage, architecture: CaeArchitecture, label: str = "") -> None:
    size = architecture.input_size
    if (image.width, image.height) != (size, size):
        raise ImageSizeMismatchError(
            f"{label or image.symbol}: 图片 {image.width}x{image.height} 与 {architecture.preset} 输入 {size}x{size} 不一致"
        )


class ChartDataset(Dataset):
    """按需从 PNG 读取的图片数据集，返回 (3, H, W) float32 张量。"""

    def __init__(self, sources: Sequence[ChartSource], architecture: CaeArchitecture) -> None:
        self.sources = list(sources)
        self.architecture = architecture

    def __len__(self) -> int:
        return len(self.sources)

    def __getitem__(self, index: int) -> torch.Tensor:
        source = self.sources[index]
        image = _load_image(source)
        check_image_size(image, self.architecture, str(getattr(source, "path", "")) or image.symbol)
        return torch.from_numpy(image.as_float())


@contextmanager
def deterministic_mode() -> Iterator[None]:
    previous = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(previous)


def seeded_model(architecture: CaeArchitecture, seed: int) -> ConvAutoencoder:
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))
    return ConvAutoencoder(architecture)


def _optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    return torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)


def build_checkpoint(
    model: ConvAutoencoder,
    cfg: TrainConfig,
    log: Sequence[EpochLog] = (),
    config_hash: str = "",
) -> Checkpoint:
    return Checkpoint(
        architecture=model.architecture.to_dict(),
        state_dict=model.state_dict(),
        train_config=cfg.model_dump(mode="json"),
        seed=cfg.seed,
        log=[(entry.epoch, entry.loss, entry.learning_rate) for entry in log],
        config_hash=config_hash,
    )


def initialize_checkpoint(architecture: CaeArchitecture, cfg: TrainConfig, config_hash: str = "") -> Checkpoint:
    """仅按 seed 初始化、未经训练的 checkpoint。"""

    return build_checkpoint(seeded_model(architecture, cfg.seed), cfg, config_hash=config_hash)


def train(
    images: Sequence[ChartSource],
    architecture: CaeArchitecture,
    cfg: TrainConfig,
    *,
    config_hash: str = "",
    epochs: Optional[int] = None,
) -> TrainResult:
    """以像素 MSE（[0,1] 缩放）为目标训练自编码器。

    loss 连续 plateau_patience 轮改善不足 plateau_min_delta 时学习率乘以 lr_decay_factor。
    出现非有限 loss 立即中止，不产出 checkpoint。
    """

    if not images:
        raise EmptyManifestError("训练集为空，未写出 checkpoint")
    first = _load_image(images[0])
    check_image_size(first, architecture)

    max_epochs = epochs or cfg.max_epochs
    with deterministic_mode():
        model = seeded_model(architecture, cfg.seed)
        generator = torch.Generator().manual_seed(cfg.seed)
        loader = DataLoader(
            ChartDataset(images, architecture),
            batch_size=cfg.batch_size,
            shuffle=True,
            generator=generator,
            num_workers=0,
        )
        optimizer = _optimizer(model, cfg)
        # torch 在坏轮数 > patience 时衰减，这里要求恰好 plateau_patience 轮
        scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
            optimizer,
            mode="min",
            factor=cfg.lr_decay_factor,
            patience=cfg.plateau_patience - 1,
            threshold=cfg.plateau_min_delta,
            threshold_mode="abs",
        )
        criterion = nn.MSELoss()
        log: List[EpochLog] = []

        for epoch in range(1, max_epochs + 1):
            model.train()
            total, seen = 0.0, 0
            for batch_index, batch in enumerate(loader):
                optimizer.zero_grad()
                reconstruction, _ = model(batch)
                loss = criterion(reconstruction, batch)
                if not torch.isfinite(loss):
                    raise NonFiniteLossError(
                        f"epoch={epoch} batch={batch_index}: loss={loss.item()} lr={optimizer.param_groups[0]['lr']}"
                    )
                loss.backward()
                optimizer.step()
                total += loss.item() * batch.shape[0]
                seen += batch.shape[0]

            epoch_loss = total / seen
            learning_rate = optimizer.param_groups[0]["lr"]
            log.append(EpochLog(epoch=epoch, loss=epoch_loss, learning_rate=learning_rate))
            observe_epoch(architecture.preset, epoch_loss)
            logger.info(f"train.epoch: epoch={epoch} loss={epoch_loss:.6g} lr={learning_rate:.6g}")
            scheduler.step(epoch_loss)
            if optimizer.param_groups[0]["lr"] != learning_rate:
                logger.info(f"train.lr_decay: epoch={epoch} lr={optimizer.param_groups[0]['lr']:.6g}")

        # 用最终权重在全部训练图上重算瓶颈层的居中统计量
        update_bn(
            DataLoader(ChartDataset(images, architecture), batch_size=cfg.batch_size, shuffle=False, num_workers=0),
            model,
        )
        logger.info(f"train.bottleneck_stats: images={len(images)}")

    return TrainResult(checkpoint=build_checkpoint(model, cfg, log, config_hash), log=log)


__all__ = [
    "ChartDataset",
    "EmptyManifestError",
    "EpochLog",
    "ImageSizeMismatchError",
    "NonFiniteLossError",
    "TrainResult",
    "build_checkpoint",
    "check_image_size",
    "initialize_checkpoint",
    "seeded_model",
    "train",
]
