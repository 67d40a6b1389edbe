from apps.repositories.checkpoint_repository import Checkpoint, CheckpointCorruptError
from apps.services.autoencoder.architecture import ArchitectureError, CaeArchitecture
from apps.services.autoencoder.gradcheck import check_gradients, tiny_architecture
from apps.services.autoencoder.inference import Embedding, NonFiniteEmbeddingError, encode, reconstruct
from apps.services.autoencoder.training import (
    EmptyManifestError,
    ImageSizeMismatchError,
    NonFiniteLossError,
    TrainResult,
    initialize_checkpoint,
    train,
)

__all__ = [
    "ArchitectureError",
    "CaeArchitecture",
    "Checkpoint",
    "CheckpointCorruptError",
    "Embedding",
    "EmptyManifestError",
    "ImageSizeMismatchError",
    "NonFiniteEmbeddingError",
    "NonFiniteLossError",
    "TrainResult",
    "check_gradients",
    "encode",
    "initialize_checkpoint",
    "reconstruct",
    "tiny_architecture",
    "train",
]
