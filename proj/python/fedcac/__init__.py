"""Personalized federated learning simulator (FedCAC and baselines).

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its public surface.
"""

from ._core import (
    Activation,
    Algorithm,
    BlobSpec,
    ClientShard,
    CollaborationMode,
    ConfigError,
    CriticalMask,
    DataError,
    Dataset,
    MlpSpec,
    NoncriticalMode,
    PartitionError,
    PartitionMode,
    PartitionSpec,
    RunConfig,
    Selector,
    SensitivityMap,
    SerializationError,
    __version__,
    compute_threshold,
    deserialize_mask,
    fixed_number_collaborators,
    generate_blobs,
    gradient_angle_probe,
    make_partition,
    mask_from_bits,
    overlap_ratio,
    overlap_similarity_study,
    run,
    select_collaborators,
    serialize_mask,
)

__all__ = [
    "Activation",
    "Algorithm",
    "BlobSpec",
    "ClientShard",
    "CollaborationMode",
    "ConfigError",
    "CriticalMask",
    "DataError",
    "Dataset",
    "MlpSpec",
    "NoncriticalMode",
    "PartitionError",
    "PartitionMode",
    "PartitionSpec",
    "RunConfig",
    "Selector",
    "SensitivityMap",
    "SerializationError",
    "__version__",
    "compute_threshold",
    "deserialize_mask",
    "fixed_number_collaborators",
    "generate_blobs",
    "gradient_angle_probe",
    "make_partition",
    "mask_from_bits",
    "overlap_ratio",
    "overlap_similarity_study",
    "run",
    "select_collaborators",
    "serialize_mask",
]
