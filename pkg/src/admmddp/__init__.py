"""Decentralized multi-agent trajectory optimization.

Consensus-ADMM coordinated DDP solvers over neighborhood communication
graphs, with a centralized augmented-Lagrangian baseline, vehicle/UAV
dynamics models, and a scenario runner CLI.
"""
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
