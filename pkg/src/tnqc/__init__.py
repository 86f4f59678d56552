"""Tensor-network quantum circuits: simulation, cutting, training and detection."""

from .ansatz import AnsatzLayout, BlockSpec, build_circuit, make_layout, random_params
from .circuit import Circuit, Gate, expval_z, run
from .cutting import cut_expval, cut_run_report, enumerate_configs, partition, reconstruct
from .tn import (
    DenseTensor,
    TensorNetworkGraph,
    circuit_to_tn,
    contract_network,
    mps_factorize,
    tn_expval,
    tn_to_circuit_layout,
)
from .training import LabeledDataset, SPSAConfig, TrainedModel, TrainingConfig, train

__version__ = "0.1.0"

__all__ = [
    "AnsatzLayout",
    "BlockSpec",
    "Circuit",
    "DenseTensor",
    "Gate",
    "LabeledDataset",
    "SPSAConfig",
    "TensorNetworkGraph",
    "TrainedModel",
    "TrainingConfig",
    "build_circuit",
    "circuit_to_tn",
    "contract_network",
    "cut_expval",
    "cut_run_report",
    "enumerate_configs",
    "expval_z",
    "make_layout",
    "mps_factorize",
    "partition",
    "random_params",
    "reconstruct",
    "run",
    "tn_expval",
    "tn_to_circuit_layout",
    "train",
]
