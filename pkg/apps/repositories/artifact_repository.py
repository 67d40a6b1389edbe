"""产物溯源 sidecar、内容哈希与报告目录锁。

每个产物旁写 ``<name>.provenance.json``：生成命令、config_hash、seed、输入文件哈希。
不写时间戳，两次相同运行得到逐字节相同的 sidecar。
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".provenance.json"
LOCK_NAME = ".lock"


class ReportLockedError(RuntimeError):
    """报告目录已被另一个进程持有。"""


@dataclass(frozen=True)
class Provenance:
    command: str
    config_hash: str
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def input_hashes(paths: Mapping[str, Optional[Path]]) -> Dict[str, str]:
    """name → sha256；不存在的输入记为空串。"""

    return {
        name: file_sha256(path) if path is not None and Path(path).is_file() else ""
        for name, path in sorted(paths.items())
    }


def sidecar_path(artifact: Path) -> Path:
    artifact = Path(artifact)
    if artifact.is_dir() or not artifact.suffix:
        return artifact / f"artifact{SIDECAR_SUFFIX}"
    return artifact.with_name(artifact.name + SIDECAR_SUFFIX)


class ArtifactRepository:
    def write_provenance(self, artifact: Path, provenance: Provenance) -> Path:
        path = sidecar_path(artifact)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(provenance), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path

    def read_provenance(self, artifact: Path) -> Optional[Provenance]:
        path = sidecar_path(artifact)
        if not path.exists():
            return None
        try:
            return Provenance(**json.loads(path.read_text(encoding="utf-8")))
        except (ValueError, TypeError):
            logger.warning(f"artifact.sidecar_unreadable: path={path}")
            return None

    def is_fresh(self, artifact: Path, expected: Provenance) -> bool:
        """产物存在且 sidecar 与期望完全一致时可直接复用。"""

        if not Path(artifact).exists():
            return False
        return self.read_provenance(artifact) == expected

    def warn_on_mismatch(self, artifact: Path, config_hash: str) -> None:
        recorded = self.read_provenance(artifact)
        if recorded is not None and recorded.config_hash != config_hash:
            logger.warning(
                f"artifact.config_mismatch: artifact={artifact} recorded={recorded.config_hash[:12]} "
                f"current={config_hash[:12]}"
            )

    @contextmanager
    def locked(self, directory: Path) -> Iterator[Path]:
        """对目录加排他锁，同一报告目录同一时刻只允许一个写者。"""

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        lock_path = directory / LOCK_NAME
        with lock_path.open("w") as handle:
            try:
                fcntl.flock(handle, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except BlockingIOError as exc:
                raise ReportLockedError(f"{directory} 正被另一个进程写入") from exc
            try:
                yield directory
            finally:
                fcntl.flock(handle, fcntl.LOCK_UN)


__all__ = [
    "ArtifactRepository",
    "Provenance",
    "ReportLockedError",
    "file_sha256",
    "input_hashes",
    "sidecar_path",
]
