"""Federated learning simulation core — Python surface of the C++ library."""

from fedsim._core import (
    FedsimError,
    async_mix,
    decode_package,
    dirichlet_partition,
    encode_package,
    f16_ratio,
    f16_roundtrip,
    fedavg,
    iid_partition,
    quantity_partition,
    run_simulate,
    run_standalone,
    sample_clients,
    shard_partition,
    synth_classification,
    topk_ratio,
    topk_roundtrip,
    topk_threshold_for_100x,
    validate_config,
)

__all__ = [
    "FedsimError",
    "async_mix",
    "decode_package",
    "dirichlet_partition",
    "encode_package",
    "f16_ratio",
    "f16_roundtrip",
    "fedavg",
    "iid_partition",
    "quantity_partition",
    "run_simulate",
    "run_standalone",
    "sample_clients",
    "shard_partition",
    "synth_classification",
    "topk_ratio",
    "topk_roundtrip",
    "topk_threshold_for_100x",
    "validate_config",
]
