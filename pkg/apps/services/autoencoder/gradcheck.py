"""中心差分梯度校验（float64）。"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
from torch import nn

from apps.services.autoencoder.architecture import CaeArchitecture, ConvStage, DeconvStage, DenseStage
from apps.services.autoencoder.network import ConvAutoencoder

logger = logging.getLogger(__name__)


def tiny_architecture() -> CaeArchitecture:
    """8×8 输入、两个卷积 stage 的小网络，只用于梯度校验。"""

    return CaeArchitecture(
        preset="tiny",
        input_size=8,
        embedding_dim=4,
        encoder_spec=(ConvStage(4, pool=2), ConvStage(8, pool=2)),
        decoder_spec=(
            DenseStage(units=8 * 2 * 2, reshape=(8, 2, 2)),
            DeconvStage(4, kernel=4, stride=2, padding=1),
            DeconvStage(3, kernel=4, stride=2, padding=1),
        ),
        project_embedding=True,
    )


@dataclass(frozen=True)
class GradientSample:
    parameter: str
    index: int
    analytic: float
    numeric: float

    @property
    def relative_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.numeric))
        if scale < 1e-9:
            return 0.0
        return abs(self.analytic - self.numeric) / scale


@dataclass(frozen=True)
class GradientReport:
    samples: List[GradientSample]
    tolerance: float

    @property
    def pass_fraction(self) -> float:
        if not self.samples:
            return 1.0
        return sum(sample.relative_error <= self.tolerance for sample in self.samples) / len(self.samples)

    def passed(self, required_fraction: float = 0.95) -> bool:
        return self.pass_fraction >= required_fraction


def check_gradients(
    architecture: Optional[CaeArchitecture] = None,
    *,
    samples: int = 200,
    batch: int = 4,
    epsilon: float = 1e-6,
    tolerance: float = 1e-4,
    seed: int = 0,
) -> GradientReport:
    """比较重建 loss 对随机抽样参数的解析梯度与中心差分。

    瓶颈 BatchNorm 以 eval 模式参与计算，保证 loss 是参数的确定函数。
    """

    architecture = architecture or tiny_architecture()
    torch.manual_seed(seed)
    model = ConvAutoencoder(architecture).double().eval()
    generator = torch.Generator().manual_seed(seed)
    size = architecture.input_size
    inputs = torch.rand((batch, 3, size, size), generator=generator, dtype=torch.float64)
    criterion = nn.MSELoss()

    def loss_value() -> float:
        with torch.no_grad():
            output, _ = model(inputs)
            return criterion(output, inputs).item()

    model.zero_grad()
    output, _ = model(inputs)
    criterion(output, inputs).backward()

    named: List[Tuple[str, nn.Parameter]] = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
    sizes = np.array([p.numel() for _, p in named])
    rng = np.random.default_rng(seed)
    picks = rng.choice(int(sizes.sum()), size=min(samples, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    results: List[GradientSample] = []
    for flat in sorted(int(pick) for pick in picks):
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, parameter = named[which]
        index = flat - int(offsets[which])
        view = parameter.data.view(-1)
        original = view[index].item()
        view[index] = original + epsilon
        upper = loss_value()
        view[index] = original - epsilon
        lower = loss_value()
        view[index] = original
        numeric = (upper - lower) / (2 * epsilon)
        analytic = parameter.grad.view(-1)[index].item()
        results.append(GradientSample(name, index, analytic, numeric))

    report = GradientReport(samples=results, tolerance=tolerance)
    logger.info(f"gradcheck.done: samples={len(results)} pass_fraction={report.pass_fraction:.4f}")
    return report


__all__ = ["GradientReport", "GradientSample", "check_gradients", "tiny_architecture"]
