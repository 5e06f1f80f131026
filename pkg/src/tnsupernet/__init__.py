"""Subgraph search on supernets via tensor-network probability distributions."""

from .supernet import (
    Edge,
    SubgraphIndex,
    Supernet,
    enumerate_indices,
    incident_edges,
    load_supernet,
    load_supernet_file,
    make_chain,
    make_ring,
    make_star,
    serialize_supernet,
    space_size,
    supernet_sha256,
    validate_index,
)
from .encoding import (
    ArgmaxResult,
    EdgeCore,
    InitSpec,
    TnDistribution,
    argmax,
    dense_probabilities,
    edge_marginal,
    expectation_grad,
    init_distribution,
    log_prob,
    log_prob_grad,
    marginal,
    materialize,
    normalized_core,
    prob,
    sample,
    sample_many,
    uniform_ranks,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (
    ConfigError,
    DataFormatError,
    EnumerationCapError,
    NumericalError,
    SupernetFormatError,
    TnSupernetError,
)

__version__ = "0.1.0"

__all__ = [
    "ArgmaxResult",
    "ConfigError",
    "DataFormatError",
    "Edge",
    "EdgeCore",
    "EnumerationCapError",
    "InitSpec",
    "NumericalError",
    "SubgraphIndex",
    "Supernet",
    "SupernetFormatError",
    "TnDistribution",
    "TnSupernetError",
    "argmax",
    "dense_probabilities",
    "edge_marginal",
    "enumerate_indices",
    "expectation_grad",
    "incident_edges",
    "init_distribution",
    "load_checkpoint",
    "load_supernet",
    "load_supernet_file",
    "log_prob",
    "log_prob_grad",
    "make_chain",
    "make_ring",
    "make_star",
    "marginal",
    "materialize",
    "normalized_core",
    "prob",
    "sample",
    "sample_many",
    "save_checkpoint",
    "serialize_supernet",
    "space_size",
    "supernet_sha256",
    "uniform_ranks",
    "validate_index",
]
