"""
Backward linear bound propagation over a box under preactivation sign
constraints.

Layer k bounds are computed from the relaxations of ReLU layers 1 ... k-1
only, so they depend on constraints of earlier layers alone. Lower and upper
passes share one code path; when no neuron is relaxed both passes perform
the same floating-point operations and return bitwise-equal coefficients.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from app.models.bounds import (
    BoundsError,
    ConstraintSet,
    InputBox,
    LinearBoundsSet,
    LinearFunctionBundle,
    Sign,
)
from app.models.network import Network
from app.services.lirpa.relaxation import ReluRelaxation, relax_layer, sign_codes

logger = logging.getLogger(__name__)

_LOWER = True
_UPPER = False


def _backward(
    network: Network,
    target: int,
    relaxations: Sequence[ReluRelaxation],
    lower_side: bool,
) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray]]:
    """
    Back-substitute y^(target) down to the input.

    Returns:
        (A, b, lambdas) where lambdas[i - 1] holds the coefficients met on
        ReLU(y^(i)) for i = 1 ... target-1
    """
    layer = network.layers[target - 1]
    lam = np.eye(layer.out_features)
    bias = np.zeros(layer.out_features)
    lambdas: List[np.ndarray] = [np.empty(0)] * (target - 1)

    for i in range(target, 1, -1):
        current = network.layers[i - 1]
        bias = bias + lam @ current.bias
        coeff = lam @ current.weights
        lambdas[i - 2] = coeff
        relax = relaxations[i - 2]
        positive = coeff >= 0.0
        if lower_side:
            slope = np.where(positive, relax.lower_slope, relax.upper_slope)
            intercept = np.where(positive, relax.lower_intercept, relax.upper_intercept)
        else:
            slope = np.where(positive, relax.upper_slope, relax.lower_slope)
            intercept = np.where(positive, relax.upper_intercept, relax.lower_intercept)
        bias = bias + np.sum(coeff * intercept, axis=1)
        lam = coeff * slope

    first = network.layers[0]
    return lam @ first.weights, bias + lam @ first.bias, lambdas


def _box_extrema(bundle: LinearFunctionBundle, box: InputBox) -> Tuple[np.ndarray, np.ndarray]:
    lower_A, upper_A = bundle.lower_A, bundle.upper_A
    lower = np.clip(lower_A, 0.0, None) @ box.lo + np.clip(lower_A, None, 0.0) @ box.hi + bundle.lower_b
    upper = np.clip(upper_A, 0.0, None) @ box.hi + np.clip(upper_A, None, 0.0) @ box.lo + bundle.upper_b
    return lower, upper


def compute_linear_bounds(network: Network, domain: InputBox, constraints: ConstraintSet) -> LinearBoundsSet:
    """
    Linear lower/upper bounds on every preactivation and on f over a box.

    Args:
        network: Folded scalar network
        domain: Input box D
        constraints: Sign constraints defining the branch

    Returns:
        LinearBoundsSet valid for every x in D satisfying the constraints;
        clamped concrete bounds may cross for infeasible constraint sets

    Raises:
        BoundsError: If a constraint names a nonexistent neuron or the box dimension is wrong
    """
    if domain.dim != network.input_dim:
        error_msg = f"box has dimension {domain.dim}, network expects {network.input_dim}"
        logger.error(error_msg)
        raise BoundsError(error_msg)
    constraints.validate_for(network.hidden_widths)

    bundles: List[LinearFunctionBundle] = []
    lowers: List[np.ndarray] = []
    uppers: List[np.ndarray] = []
    relaxations: List[ReluRelaxation] = []
    output_lambdas: List[np.ndarray] = []

    for k in range(1, network.depth + 1):
        lower_A, lower_b, lambdas = _backward(network, k, relaxations, _LOWER)
        upper_A, upper_b, _ = _backward(network, k, relaxations, _UPPER)
        bundle = LinearFunctionBundle(lower_A=lower_A, lower_b=lower_b, upper_A=upper_A, upper_b=upper_b)
        lower, upper = _box_extrema(bundle, domain)

        if k < network.depth:
            layer_signs = constraints.layer_constraints(k)
            for neuron, sign in layer_signs.items():
                if sign is Sign.GEQ_ZERO:
                    lower[neuron] = max(lower[neuron], 0.0)
                else:
                    upper[neuron] = min(upper[neuron], 0.0)
            relaxations.append(relax_layer(lower, upper, sign_codes(bundle.width, layer_signs)))
        else:
            output_lambdas = [row[0].copy() for row in lambdas]

        bundles.append(bundle)
        lowers.append(lower)
        uppers.append(upper)

    bounds = LinearBoundsSet(
        per_layer=bundles,
        concrete_lower=lowers,
        concrete_upper=uppers,
        output_lambdas=output_lambdas,
        constraints=constraints,
    )
    logger.debug(
        f"📐 LIRPA: bounds under {len(constraints)} constraints, f in "
        f"[{lowers[-1][0]:.4g}, {uppers[-1][0]:.4g}], {len(bounds.unstable_neurons())} unstable"
    )
    return bounds


def compute_intermediate_bounds(
    network: Network, domain: InputBox, constraints: ConstraintSet
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Concrete bounds l^(k), u^(k) of the ReLU layers k = 1 ... N-1, clamped by constraints.
    """
    bounds = compute_linear_bounds(network, domain, constraints)
    depth = network.depth
    return bounds.concrete_lower[: depth - 1], bounds.concrete_upper[: depth - 1]


def compute_linear_bounds_batch(
    network: Network,
    domain: InputBox,
    constraint_sets: Sequence[ConstraintSet],
    workers: int = 1,
) -> List[LinearBoundsSet]:
    """
    compute_linear_bounds for many constraint sets; results follow input order.

    Args:
        workers: Threads used; results do not depend on it
    """
    if workers <= 1 or len(constraint_sets) <= 1:
        return [compute_linear_bounds(network, domain, c) for c in constraint_sets]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(lambda c: compute_linear_bounds(network, domain, c), constraint_sets))


def dump_bounds(bounds: LinearBoundsSet, path: Union[str, Path]) -> None:
    """Write a LinearBoundsSet to JSON for fixtures and debugging."""
    Path(path).write_text(json.dumps(bounds.to_dict()))


def load_bounds(path: Union[str, Path]) -> LinearBoundsSet:
    return LinearBoundsSet.from_dict(json.loads(Path(path).read_text()))
