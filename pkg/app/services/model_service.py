"""
Network evaluation, specification folding and model/problem file I/O.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from app.models.network import (
    AffineLayer,
    HalfSpaceSpec,
    ModelError,
    ModelFormatError,
    Network,
    ProblemInstance,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ModelService:
    """Pure operations on networks plus JSON persistence of models and problems."""

    def fold_spec(self, network: Network, spec: HalfSpaceSpec) -> Network:
        """
        Fold c^T y + d into the last affine layer.

        Args:
            network: Multi-output network with m outputs
            spec: Half-space specification with len(c) == m

        Returns:
            Network with scalar output computing c^T f(x) + d

        Raises:
            ShapeMismatchError: If c does not match the output width
        """
        if spec.c.shape[0] != network.output_dim:
            error_msg = f"spec has {spec.c.shape[0]} coefficients but network has {network.output_dim} outputs"
            logger.error(error_msg)
            raise ShapeMismatchError(error_msg)

        last = network.layers[-1]
        folded = AffineLayer(
            weights=(spec.c @ last.weights).reshape(1, -1),
            bias=np.array([float(spec.c @ last.bias) + spec.d]),
        )
        logger.debug(f"🧩 FOLD: folded spec into layer {network.depth - 1} ({network.output_dim} -> 1 outputs)")
        return Network(layers=list(network.layers[:-1]) + [folded])

    def forward_batch(self, network: Network, points: np.ndarray) -> np.ndarray:
        """
        Evaluate the network on row points.

        Args:
            network: Network to evaluate
            points: Array of shape (n, n_0)

        Returns:
            Outputs of shape (n, n_N)
        """
        return self.preactivations_batch(network, points)[-1]

    def preactivations_batch(self, network: Network, points: np.ndarray) -> List[np.ndarray]:
        """
        Every preactivation y^(1) ... y^(N) on row points.

        Returns:
            List of N arrays, entry k-1 of shape (n, n_k)
        """
        current = np.asarray(points, dtype=np.float64)
        if current.ndim != 2 or current.shape[1] != network.input_dim:
            error_msg = f"points have shape {current.shape}, network expects (n, {network.input_dim})"
            logger.error(error_msg)
            raise ShapeMismatchError(error_msg)

        preactivations: List[np.ndarray] = []
        for idx, layer in enumerate(network.layers):
            pre = current @ layer.weights.T + layer.bias
            preactivations.append(pre)
            if idx < network.depth - 1:
                current = np.maximum(pre, 0.0)
        return preactivations

    def evaluate(self, network: Network, x: np.ndarray) -> np.ndarray:
        """Output vector f(x) of a possibly multi-output network."""
        point = self._as_point(network, x)
        return self.forward_batch(network, point)[0]

    def forward(self, network: Network, x: np.ndarray) -> float:
        """
        Scalar output f(x).

        Raises:
            ShapeMismatchError: If x has the wrong length or the network is not scalar
        """
        if not network.is_scalar:
            error_msg = f"forward needs a scalar network, got {network.output_dim} outputs"
            logger.error(error_msg)
            raise ShapeMismatchError(error_msg)
        return float(self.evaluate(network, x)[0])

    def preactivation(self, network: Network, x: np.ndarray, layer: int) -> np.ndarray:
        """
        Preactivation y^(layer)(x), layers numbered 1 ... N.

        Raises:
            ModelError: If layer is out of range
        """
        if not 1 <= layer <= network.depth:
            error_msg = f"layer {layer} out of range 1..{network.depth}"
            logger.error(error_msg)
            raise ModelError(error_msg)
        point = self._as_point(network, x)
        truncated = Network(layers=list(network.layers[:layer]))
        return self.preactivations_batch(truncated, point)[-1][0]

    def _as_point(self, network: Network, x: np.ndarray) -> np.ndarray:
        point = np.asarray(x, dtype=np.float64).reshape(-1)
        if point.shape[0] != network.input_dim:
            error_msg = f"input has length {point.shape[0]}, network expects {network.input_dim}"
            logger.error(error_msg)
            raise ShapeMismatchError(error_msg)
        return point.reshape(1, -1)

    # ------------------------------------------------------------------ files

    def network_from_dict(self, data: Dict[str, Any]) -> Network:
        """
        Build a Network from the JSON model layout.

        Raises:
            ModelFormatError: If a layer is malformed or layers do not compose
        """
        raw_layers = data.get("layers") if isinstance(data, dict) else None
        if not isinstance(raw_layers, list) or not raw_layers:
            raise ModelFormatError("model needs a non-empty 'layers' list")

        layers = []
        for idx, raw in enumerate(raw_layers):
            try:
                layers.append(AffineLayer(weights=raw["weights"], bias=raw["bias"]))
            except (KeyError, TypeError) as e:
                raise ModelFormatError(f"layer {idx}: missing or malformed field {e}") from e
            except ValidationError as e:
                raise ModelFormatError(f"layer {idx}: {_first_message(e)}") from e
        try:
            return Network(layers=layers)
        except ValidationError as e:
            raise ModelFormatError(_first_message(e)) from e

    def network_to_dict(self, network: Network) -> Dict[str, Any]:
        # float repr round-trips every double exactly
        return {
            "layers": [
                {"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
                for layer in network.layers
            ]
        }

    def load_model(self, path: PathLike) -> Network:
        """
        Load a network from a JSON model file.

        Raises:
            ModelFormatError: If the file is not valid JSON or the model is malformed
        """
        data = _read_json(path)
        network = self.network_from_dict(data)
        logger.info(f"📦 MODEL: loaded {Path(path).name} with widths {network.layer_widths}")
        return network

    def save_model(self, network: Network, path: PathLike) -> None:
        Path(path).write_text(json.dumps(self.network_to_dict(network)))
        logger.debug(f"💾 MODEL: saved {len(network.layers)} layers to {path}")

    def load_problem(self, path: PathLike, truncation_z: Optional[float] = None) -> ProblemInstance:
        """
        Load a problem file and fold its spec.

        Args:
            path: Problem JSON file; its 'model' path is resolved relative to the file
            truncation_z: Override for the file's truncation_z

        Returns:
            Folded ProblemInstance named after the file stem

        Raises:
            ModelFormatError: If the problem or referenced model is malformed
        """
        path = Path(path)
        data = _read_json(path)
        if not isinstance(data, dict) or "model" not in data:
            raise ModelFormatError(f"{path.name}: problem needs a 'model' entry")

        model_path = Path(data["model"])
        if not model_path.is_absolute():
            model_path = path.parent / model_path
        network = self.load_model(model_path)

        spec_data = data.get("spec")
        try:
            if spec_data is not None:
                spec = HalfSpaceSpec(c=spec_data["c"], d=float(spec_data.get("d", 0.0)))
                network = self.fold_spec(network, spec)

            if "cov_diag" in data and "cov_full" in data:
                raise ModelFormatError(f"{path.name}: give either cov_diag or cov_full, not both")
            cov = data.get("cov_diag", data.get("cov_full"))
            if cov is None:
                raise ModelFormatError(f"{path.name}: problem needs cov_diag or cov_full")

            z = truncation_z if truncation_z is not None else float(data.get("truncation_z", 3.0))
            return ProblemInstance(
                network=network,
                input_mean=data["mean"],
                input_cov=cov,
                eta=float(data["eta"]),
                truncation_z=z,
                name=path.stem,
            )
        except (KeyError, TypeError) as e:
            raise ModelFormatError(f"{path.name}: missing or malformed field {e}") from e
        except (ValidationError, ShapeMismatchError) as e:
            message = _first_message(e) if isinstance(e, ValidationError) else str(e)
            raise ModelFormatError(f"{path.name}: {message}") from e

    def save_problem(self, problem: ProblemInstance, path: PathLike, model_path: Optional[PathLike] = None) -> Path:
        """
        Write a folded problem and its model file.

        Args:
            problem: Problem to persist
            path: Problem JSON destination
            model_path: Model destination; defaults to '<stem>.model.json' next to the problem

        Returns:
            Path of the written model file
        """
        path = Path(path)
        model_path = Path(model_path) if model_path else path.with_name(f"{path.stem}.model.json")
        self.save_model(problem.network, model_path)

        cov_key = "cov_diag" if problem.is_diagonal else "cov_full"
        try:
            model_ref = str(model_path.relative_to(path.parent))
        except ValueError:
            model_ref = str(model_path.resolve())
        payload = {
            "model": model_ref,
            "spec": None,
            "mean": problem.input_mean.tolist(),
            cov_key: problem.input_cov.tolist(),
            "eta": problem.eta,
            "truncation_z": problem.truncation_z,
        }
        path.write_text(json.dumps(payload, indent=2))
        logger.info(f"💾 PROBLEM: wrote {path.name} (model {model_path.name})")
        return model_path


def _read_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ModelFormatError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{Path(path).name}: malformed JSON ({e.msg} at line {e.lineno})") from e


def _first_message(error: ValidationError) -> str:
    details = error.errors()
    if not details:
        return str(error)
    message = details[0].get("msg", str(error))
    return message.removeprefix("Value error, ")


# Global service instance
model_service = ModelService()
