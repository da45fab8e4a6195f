"""
Linear bound propagation package: ReLU relaxation and backward propagation
of linear bounds under preactivation sign constraints.
"""
from app.services.lirpa.relaxation import ReluRelaxation, relax_relu, relax_layer
from app.services.lirpa.propagation import (
    compute_linear_bounds,
    compute_intermediate_bounds,
    compute_linear_bounds_batch,
    dump_bounds,
    load_bounds,
)

__all__ = [
    "ReluRelaxation",
    "relax_relu",
    "relax_layer",
    "compute_linear_bounds",
    "compute_intermediate_bounds",
    "compute_linear_bounds_batch",
    "dump_bounds",
    "load_bounds",
]
