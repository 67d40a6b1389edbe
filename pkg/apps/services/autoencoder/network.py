"""按 CaeArchitecture 组装的 torch 模块。"""

from __future__ import annotations

from typing import List, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from apps.services.autoencoder.architecture import IMAGE_CHANNELS, CaeArchitecture, DeconvStage


class CenteredBottleneck(nn.BatchNorm1d):
    """无仿射参数的 BatchNorm：把嵌入按训练集统计量居中、缩放。

    训练时单样本 batch 退化为使用 running 统计量。
    """

    def __init__(self, features: int) -> None:
        super().__init__(features, affine=False)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        if self.training and inputs.shape[0] == 1:
            return F.batch_norm(inputs, self.running_mean, self.running_var, training=False, eps=self.eps)
        return super().forward(inputs)


class ConvAutoencoder(nn.Module):
    def __init__(self, architecture: CaeArchitecture) -> None:
        super().__init__()
        self.architecture = architecture

        layers: List[nn.Module] = []
        channels = IMAGE_CHANNELS
        for stage in architecture.encoder_spec:
            layers.append(nn.Conv2d(channels, stage.channels, stage.kernel, stage.stride, padding=stage.kernel // 2))
            layers.append(nn.ReLU(inplace=True))
            if stage.pool > 1:
                layers.append(nn.MaxPool2d(stage.pool))
            channels = stage.channels
        if architecture.project_embedding:
            layers.append(nn.Conv2d(channels, architecture.embedding_dim, kernel_size=1))
        layers.append(nn.AdaptiveAvgPool2d(1))
        layers.append(nn.Flatten())
        self.encoder = nn.Sequential(*layers)
        self.bottleneck = CenteredBottleneck(architecture.embedding_dim)

        dense = architecture.decoder_spec[0]
        self.expand = nn.Linear(architecture.embedding_dim, dense.units)
        self.reshape: Tuple[int, int, int] = tuple(dense.reshape)  # type: ignore[assignment]
        deconvs: List[nn.Module] = []
        channels = dense.reshape[0]
        stages: List[DeconvStage] = list(architecture.decoder_spec[1:])
        for index, stage in enumerate(stages):
            deconvs.append(nn.ConvTranspose2d(channels, stage.channels, stage.kernel, stage.stride, stage.padding))
            deconvs.append(nn.Sigmoid() if index == len(stages) - 1 else nn.ReLU(inplace=True))
            channels = stage.channels
        self.decoder = nn.Sequential(*deconvs)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        return self.bottleneck(self.encoder(images))

    def decode(self, embeddings: torch.Tensor) -> torch.Tensor:
        hidden = F.relu(self.expand(embeddings))
        return self.decoder(hidden.view(-1, *self.reshape))

    def forward(self, images: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        embeddings = self.encode(images)
        return self.decode(embeddings), embeddings


__all__ = ["CenteredBottleneck", "ConvAutoencoder"]
