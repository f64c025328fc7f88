"""Spectral-partition modulation adapters (C++ core)."""

import json as _json

from ._smoa import (
    Adapter,
    EnergyPartition,
    Error,
    LinearTask,
    RunConfig,
    SpectralDecomposition,
    budget_matched_config,
    build_adapter,
    cumulative_energy,
    decompose,
    encode_matrix,
    grad_check,
    make_task,
    modulation_tensor,
    numerical_rank,
    param_count,
    partition,
    partition_spectrum,
    read_matrix,
    synthetic_weight,
    train,
    write_matrix,
)
from ._smoa import rank_sweep as _rank_sweep


def rank_sweep(spec):
    """Run a rank sweep from a dict with the rank-bench config keys.

    Returns (rows, skipped): rows as dicts, skipped as reason strings.
    """
    return _rank_sweep(_json.dumps(spec))


__all__ = [
    "Adapter",
    "EnergyPartition",
    "Error",
    "LinearTask",
    "RunConfig",
    "SpectralDecomposition",
    "budget_matched_config",
    "build_adapter",
    "cumulative_energy",
    "decompose",
    "encode_matrix",
    "grad_check",
    "make_task",
    "modulation_tensor",
    "numerical_rank",
    "param_count",
    "partition",
    "partition_spectrum",
    "rank_sweep",
    "read_matrix",
    "synthetic_weight",
    "train",
    "write_matrix",
]
