"""Dense tanh network ``u_theta`` with Glorot-uniform init and optional global adaptive slope."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import graph as g
from .graph import InputJet, JetLayout, Node

CHECKPOINT_MAGIC = b"PPINNCK1"


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    output_dim: int
    hidden_layers: int = 4
    hidden_width: int = 50
    adaptive_activation: bool = False
    scale_factor_n: float = 5.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("hidden_layers and hidden_width must be >= 1")
        if self.adaptive_activation and not self.scale_factor_n > 0:
            raise ValueError("scale_factor_n must be positive")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NetworkParams:
    """Trainable state: per-layer ``weights[i]`` of shape (fan_out, fan_in), biases, slope."""

    config: NetworkConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    slope_a: float | None = None

    def __post_init__(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("layer count does not match config")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise ValueError(f"layer {i}: shapes {w.shape}, {b.shape} do not chain")
        if self.config.adaptive_activation != (self.slope_a is not None):
            raise ValueError("slope_a must be present iff adaptive_activation is set")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict[str, np.ndarray]:
        """Flat name -> array mapping, also used as graph bindings."""
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        if self.slope_a is not None:
            out["a"] = np.asarray(self.slope_a, dtype=np.float64)
        return out

    @classmethod
    def from_dict(cls, config: NetworkConfig, d: dict[str, np.ndarray]) -> "NetworkParams":
        n = len(config.layer_sizes) - 1
        return cls(
            config,
            [np.asarray(d[f"W{i}"], dtype=np.float64) for i in range(n)],
            [np.asarray(d[f"b{i}"], dtype=np.float64) for i in range(n)],
            float(d["a"]) if config.adaptive_activation else None,
        )

    def copy(self) -> "NetworkParams":
        return NetworkParams.from_dict(self.config, {k: np.array(v) for k, v in self.to_dict().items()})

    def flat(self) -> np.ndarray:
        """Parameters in checkpoint order: layer-major, row-major, slope last."""
        return np.concatenate([np.ravel(v) for v in self.to_dict().values()])

    @classmethod
    def from_flat(cls, config: NetworkConfig, flat: np.ndarray) -> "NetworkParams":
        flat = np.asarray(flat, dtype=np.float64)
        sizes = config.layer_sizes
        need = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:])) + int(config.adaptive_activation)
        if flat.ndim != 1 or flat.size != need:
            raise ValueError(f"checkpoint holds {flat.size} values, config needs {need}")
        d, pos = {}, 0
        for i in range(len(sizes) - 1):
            nw = sizes[i + 1] * sizes[i]
            d[f"W{i}"] = flat[pos:pos + nw].reshape(sizes[i + 1], sizes[i])
            pos += nw
            d[f"b{i}"] = flat[pos:pos + sizes[i + 1]].copy()
            pos += sizes[i + 1]
        if config.adaptive_activation:
            d["a"] = flat[pos]
            pos += 1
        return cls.from_dict(config, d)


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init(config: NetworkConfig, seed: int) -> NetworkParams:
    """Glorot-uniform weights, zero biases, slope ``a = 1/n`` when adaptive."""
    rng = np.random.default_rng(seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = glorot_bound(fan_in, fan_out)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    slope = 1.0 / config.scale_factor_n if config.adaptive_activation else None
    return NetworkParams(config, weights, biases, slope)


class NetworkGraph:
    """Parameter nodes of one network; builds jet graphs through it.

    Several jet graphs (data points, collocation points) can share one
    ``NetworkGraph`` so that their losses differentiate into the same
    parameters.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        n = len(config.layer_sizes) - 1
        self.weights = [g.parameter(f"W{i}") for i in range(n)]
        self.biases = [g.parameter(f"b{i}") for i in range(n)]
        self.slope = g.parameter("a") if config.adaptive_activation else None

    def jet(self, inputs: Node, layout: JetLayout | None) -> Node:
        """Output jet of shape (output_dim, components, N) for an input-jet node."""
        if layout is None:
            layout = JetLayout.values_only(self.config.input_dim)
        if layout.n_inputs != self.config.input_dim:
            raise ValueError("layout does not match network input dimension")
        gain = None
        if self.slope is not None:
            gain = self.config.scale_factor_n * self.slope
        h = inputs
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = g.matvec(w, h, b)
            if i == last:
                return z
            if gain is not None:
                z = g.scale_by(z, gain)
            h = g.tanh_jet(z, layout)
        raise AssertionError("unreachable")

    def outputs(self, inputs: Node, layout: JetLayout | None) -> list[InputJet]:
        if layout is None:
            layout = JetLayout.values_only(self.config.input_dim)
        out = self.jet(inputs, layout)
        return [InputJet.from_jet(out, layout, r) for r in range(self.config.output_dim)]


def _as_points(x, dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"expected points with {dim} coordinates, got shape {np.shape(x)}")
    return pts


def forward(params: NetworkParams, x) -> np.ndarray:
    """Network outputs at ``x`` (shape (D,) or (N, D)); returns (output_dim,) or (N, output_dim)."""
    cfg = params.config
    pts = _as_points(x, cfg.input_dim)
    net = NetworkGraph(cfg)
    inp = g.constant(g.seed_jet(pts, None))
    out = net.jet(inp, None)
    value = g.evaluate(out, params.to_dict())[:, 0, :].T.copy()
    return value[0] if np.ndim(x) == 1 else value


def input_derivatives(params: NetworkParams, x, layout: JetLayout | None = None) -> list[InputJet]:
    """Evaluated value, first and pure second input derivatives per output.

    The returned jets are graph nodes (``jet.value.value`` holds the numbers),
    so a loss built from them can be passed to
    :func:`pareto_pinn.graph.parameter_gradient`.
    """
    cfg = params.config
    pts = _as_points(x, cfg.input_dim)
    layout = layout or JetLayout.full(cfg.input_dim)
    net = NetworkGraph(cfg)
    inp = g.constant(g.seed_jet(pts, layout))
    jets = net.outputs(inp, layout)
    g.evaluate([n for j in jets for n in j.nodes()], params.to_dict())
    return jets


def save_checkpoint(params: NetworkParams, path: str | Path) -> None:
    """Write ``MAGIC`` + one JSON header line + float64 little-endian payload."""
    header = json.dumps({"config": params.config.to_dict(), "count": int(params.flat().size)})
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(header.encode() + b"\n")
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path: str | Path, config: NetworkConfig | None = None) -> NetworkParams:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint")
        header = json.loads(fh.readline())
        payload = np.frombuffer(fh.read(), dtype="<f8")
    stored = NetworkConfig(**header["config"])
    if config is not None and config != stored:
        raise ValueError(f"{path}: checkpoint config {stored} does not match {config}")
    if payload.size != header["count"]:
        raise ValueError(f"{path}: truncated payload")
    return NetworkParams.from_flat(stored, payload.astype(np.float64))
