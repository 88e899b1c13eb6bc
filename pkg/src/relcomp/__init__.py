"""Reliability inference for multistate systems on compressed tables.

The package keeps every node probability table in a run/phrase
compressed form and answers joint, marginal, and conditional queries
without ever expanding a full table in memory.  Systems whose
components share causes are handled by folding each dependent group
into one equivalent multistate node.

Typical entry points:

- ``load_model`` / ``SystemModel.from_dict`` to read a model,
- ``dependent_infer`` for Pr(leaf | query, evidence) on one-level
  systems,
- ``leaf_distribution`` / ``reliability_curve`` for layered systems,
- ``compress`` / ``eliminate_last`` for direct table work.
"""
from __future__ import annotations

from .blocks import (
    Block,
    EquivalentNode,
    Partition,
    Violation,
    block_state_counts,
    equivalent_node,
    find_blocks,
    validate_structure,
)
from .ctable import (
    CompressedTable,
    TableStats,
    compress,
    compress_stats,
    decompress,
    dump_table,
    load_table,
    value_at,
)
from .eliminate import (
    CompressedSource,
    DenseSource,
    eliminate_last,
    eliminate_last_oracle,
    reorder_generate,
)
from .engine import (
    CurveResult,
    FlatReport,
    flat_leaf_distribution,
    flat_leaf_report,
    leaf_distribution,
    node_marginals,
    npt_compress_stats,
    parent_groups,
    reliability_curve,
    reliability_states_for,
)
from .errors import (
    DomainError,
    IntegrityError,
    ModelError,
    NumericError,
    RelcompError,
    SizeGuardError,
    UndefinedConditionalError,
)
from .inference import (
    Distribution,
    InferenceResult,
    QuerySpec,
    block_joint,
    dependent_infer,
    independent_infer,
    marginalize_keep,
)
from .model import (
    CommonCause,
    ExponentialLife,
    Node,
    SystemModel,
    TimeGrid,
    WeibullLife,
    discretize,
    failure_probability,
    load_model,
)
from .oracle import MonteCarloResult, enumerate_joint, monte_carlo
from .radix import (
    decode_offsets,
    encode_offsets,
    row_to_states,
    states_to_row,
    strides,
    total_states,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model
    "SystemModel", "Node", "CommonCause", "TimeGrid",
    "ExponentialLife", "WeibullLife", "failure_probability", "discretize",
    "load_model",
    # compressed tables
    "CompressedTable", "TableStats", "compress", "compress_stats",
    "decompress", "value_at", "dump_table", "load_table",
    # elimination
    "eliminate_last", "eliminate_last_oracle", "reorder_generate",
    "CompressedSource", "DenseSource",
    # structure
    "Violation", "Block", "Partition", "validate_structure", "find_blocks",
    "block_state_counts", "EquivalentNode", "equivalent_node",
    # inference
    "QuerySpec", "Distribution", "InferenceResult", "block_joint",
    "independent_infer", "dependent_infer", "marginalize_keep",
    # layered engine
    "node_marginals", "leaf_distribution", "flat_leaf_distribution",
    "flat_leaf_report", "npt_compress_stats", "parent_groups",
    "FlatReport", "CurveResult", "reliability_curve", "reliability_states_for",
    # oracles
    "enumerate_joint", "monte_carlo", "MonteCarloResult",
    # mixed radix
    "total_states", "strides", "row_to_states", "states_to_row",
    "decode_offsets", "encode_offsets",
    # errors
    "RelcompError", "DomainError", "ModelError", "IntegrityError",
    "NumericError", "UndefinedConditionalError", "SizeGuardError",
]
