"""Minimal deterministic feedforward network engine.

Dense layers with relu/sigmoid/identity activations, seeded inverted
dropout, binary cross-entropy and focal losses, bias-corrected Adam, and
exact backpropagation with respect to both parameters and inputs. All
arithmetic is float64 numpy; given the same seeds and inputs every
forward, backward, and update step is bit-identical across runs.

Forward/backward are pure given (params, input, masks) and safe to call
concurrently on shared read-only parameters. AdamState is single-owner.
"""

from __future__ import annotations

import base64
import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, NumericError, ShapeError

ACTIVATIONS = ("relu", "sigmoid", "identity")
LOSS_KINDS = ("binary_cross_entropy", "focal")

# Clamp for probabilities inside losses so log(0) never occurs.
PROB_EPS = 1e-7

SNAPSHOT_FORMAT = "dense-network"
SNAPSHOT_VERSION = 1


@dataclass
class DenseLayer:
    """One affine layer followed by an elementwise activation.

    weights has shape (out, in), biases shape (out,).
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.ndim != 1:
            raise ShapeError("weights must be 2-d and biases 1-d")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ShapeError(
                f"bias length {self.biases.shape[0]} does not match "
                f"output size {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise NumericError("layer parameters must be finite")

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DropoutSpec:
    """Seeded dropout configuration.

    rate is the drop probability; placement lists the layer indices whose
    activations the mask is applied after. The mask for a given
    (seed, pass_index) pair is always the same, which is what makes the
    Monte-Carlo ensemble reproducible.
    """

    rate: float = 0.0
    placement: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ShapeError(f"dropout rate must be in [0, 1), got {self.rate}")
        object.__setattr__(self, "placement", tuple(int(i) for i in self.placement))
        if self.seed < 0:
            raise ShapeError("dropout seed must be non-negative")


@dataclass
class NetworkParams:
    """An ordered stack of dense layers plus the dropout spec."""

    layers: list[DenseLayer]
    dropout: DropoutSpec = field(default_factory=DropoutSpec)

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_size != nxt.in_size:
                raise ShapeError(
                    f"layer output size {prev.out_size} does not chain into "
                    f"next input size {nxt.in_size}"
                )
        for idx in self.dropout.placement:
            if not 0 <= idx < len(self.layers):
                raise ShapeError(f"dropout placement {idx} outside layer range")

    @property
    def in_size(self) -> int:
        return self.layers[0].in_size

    @property
    def out_size(self) -> int:
        return self.layers[-1].out_size

    def clone(self) -> "NetworkParams":
        return copy.deepcopy(self)


@dataclass
class LossSpec:
    """Loss selection: plain binary cross-entropy or the focal variant.

    alpha is a flat positive-class weight (negative-class terms keep
    weight 1), gamma the focusing exponent. gamma=0, alpha=1 reduces to
    binary cross-entropy pointwise. sample_weights, when present,
    multiply per-sample losses before the mean over the batch.
    """

    kind: str = "binary_cross_entropy"
    gamma: float = 0.0
    alpha: float = 1.0
    sample_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ShapeError(f"unknown loss kind {self.kind!r}")
        if self.gamma < 0:
            raise ShapeError("gamma must be >= 0")
        if self.alpha <= 0:
            raise ShapeError("alpha must be > 0")
        if self.sample_weights is not None:
            self.sample_weights = np.asarray(self.sample_weights, dtype=np.float64)
            if (self.sample_weights < 0).any():
                raise ShapeError("sample weights must be non-negative")


@dataclass
class ForwardCache:
    """Activation record from one forward pass; consumed by backward."""

    inputs: np.ndarray                # (N, F) batch as seen by layer 0
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]     # post-activation, pre-dropout
    masks: dict[int, np.ndarray]      # layer index -> unit mask actually applied
    keep: float
    single_sample: bool
    layer_shapes: tuple[tuple[int, int], ...]


def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, activation):
    if activation == "relu":
        return _relu(z)
    if activation == "sigmoid":
        return _sigmoid(z)
    return z


def _activation_grad(z, a, activation):
    if activation == "relu":
        return (z > 0).astype(np.float64)
    if activation == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def sample_masks(params: NetworkParams, pass_index: int) -> dict[int, np.ndarray]:
    """Draw the unit dropout masks for one stochastic pass.

    The mask set is a pure function of (dropout.seed, pass_index), so a
    given pass index always denotes the same thinned network no matter
    how samples are batched.
    """
    spec = params.dropout
    keep = 1.0 - spec.rate
    rng = np.random.default_rng([spec.seed, int(pass_index)])
    masks = {}
    for idx in spec.placement:
        size = params.layers[idx].out_size
        masks[idx] = (rng.random(size) < keep).astype(np.float64)
    return masks


def forward(
    params: NetworkParams,
    inputs: np.ndarray,
    masks: dict[int, np.ndarray] | None = None,
    pass_index: int | None = None,
) -> tuple[np.ndarray | float, ForwardCache]:
    """Run the network on a sample or batch.

    Mask modes: masks=None and pass_index=None runs with dropout off;
    pass_index=k samples the seeded mask set for pass k; an explicit
    masks dict applies a fixed mask set. Returns (output, cache) where
    the cache is sufficient for an exact backward pass.
    """
    if masks is not None and pass_index is not None:
        raise ContractError("pass either masks or pass_index, not both")
    if pass_index is not None:
        masks = sample_masks(params, pass_index)
    applied = masks or {}

    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_size:
        raise ShapeError(
            f"input width {x.shape[-1] if x.ndim else 0} does not match "
            f"network input size {params.in_size}"
        )

    keep = 1.0 - params.dropout.rate
    pre, post = [], []
    h = x
    for i, layer in enumerate(params.layers):
        z = h @ layer.weights.T + layer.biases
        a = _activate(z, layer.activation)
        pre.append(z)
        post.append(a)
        h = a
        if i in applied:
            mask = np.asarray(applied[i], dtype=np.float64)
            if mask.shape != (layer.out_size,):
                raise ShapeError(
                    f"mask for layer {i} has shape {mask.shape}, "
                    f"expected ({layer.out_size},)"
                )
            h = h * mask / keep
    if not np.isfinite(h).all():
        raise NumericError("non-finite activation in forward pass")

    cache = ForwardCache(
        inputs=x,
        pre_activations=pre,
        activations=post,
        masks={i: np.asarray(m, dtype=np.float64) for i, m in applied.items()},
        keep=keep,
        single_sample=single,
        layer_shapes=tuple(l.weights.shape for l in params.layers),
    )
    out = h
    if out.shape[1] == 1:
        out = out[:, 0]
    if single:
        out = float(out[0]) if np.ndim(out) == 1 else out[0]
    return out, cache


def predict(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Deterministic forward with dropout off, output only."""
    out, _ = forward(params, inputs)
    return out


def _clamped(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def per_sample_loss(spec: LossSpec, predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    p = _clamped(np.asarray(predictions, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"predictions shape {p.shape} != targets shape {y.shape}")
    if spec.kind == "binary_cross_entropy":
        return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    # Focal: modulate by the miss probability and weight the positive class.
    pt = np.where(y == 1.0, p, 1.0 - p)
    alpha_t = np.where(y == 1.0, spec.alpha, 1.0)
    return -alpha_t * (1.0 - pt) ** spec.gamma * np.log(pt)


def loss(spec: LossSpec, predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean of per-sample (optionally weighted) losses."""
    values = per_sample_loss(spec, predictions, targets)
    if spec.sample_weights is not None:
        if spec.sample_weights.shape != values.shape:
            raise ShapeError("sample_weights length does not match batch")
        values = values * spec.sample_weights
    return float(np.mean(values))


def loss_grad(spec: LossSpec, predictions: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d(mean loss)/d(prediction), one entry per sample.

    The numerator keeps the raw prediction so an exact fit yields an
    exactly zero gradient; only denominators and logs use the clamped
    value.
    """
    p_raw = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p_raw.shape != y.shape:
        raise ShapeError(f"predictions shape {p_raw.shape} != targets shape {y.shape}")
    p = _clamped(p_raw)
    n = p.shape[0]
    if spec.kind == "binary_cross_entropy":
        g = (p_raw - y) / (p * (1.0 - p))
    else:
        gamma, alpha = spec.gamma, spec.alpha
        one_m_p = 1.0 - p_raw
        # Guard 0**negative when gamma < 1; the factor multiplies log(p)
        # which is 0 exactly where the base vanishes.
        pow_pos = np.where(one_m_p > 0, one_m_p, 1.0) ** (gamma - 1.0) if gamma != 0 else 0.0
        pow_neg = np.where(p_raw > 0, p_raw, 1.0) ** (gamma - 1.0) if gamma != 0 else 0.0
        g_pos = alpha * (gamma * np.where(one_m_p > 0, pow_pos, 0.0) * np.log(p)
                         - one_m_p ** gamma / p)
        g_neg = -gamma * np.where(p_raw > 0, pow_neg, 0.0) * np.log(1.0 - p) \
            + p_raw ** gamma / (1.0 - p)
        g = np.where(y == 1.0, g_pos, g_neg)
    if spec.sample_weights is not None:
        g = g * spec.sample_weights
    return g / n


def _check_cache(params: NetworkParams, cache: ForwardCache):
    shapes = tuple(l.weights.shape for l in params.layers)
    if shapes != cache.layer_shapes:
        raise ContractError("forward cache does not match these parameters")


def backward_from(
    params: NetworkParams,
    cache: ForwardCache,
    output_grad: np.ndarray,
    output_stage: str = "activation",
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backpropagate an arbitrary upstream gradient.

    output_grad is d(scalar)/d(network output), shaped like the batched
    output. With output_stage="preactivation" the upstream gradient is
    taken with respect to the final pre-activation instead (used for
    saliency on the raw class score). Returns per-layer (dW, db) plus
    the gradient with respect to the inputs.
    """
    _check_cache(params, cache)
    g = np.asarray(output_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    n_layers = len(params.layers)
    param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * n_layers  # type: ignore

    for i in range(n_layers - 1, -1, -1):
        layer = params.layers[i]
        z, a = cache.pre_activations[i], cache.activations[i]
        if i in cache.masks:
            g = g * cache.masks[i] / cache.keep
        if i == n_layers - 1 and output_stage == "preactivation":
            dz = g
        else:
            dz = g * _activation_grad(z, a, layer.activation)
        h_in = cache.inputs if i == 0 else cache.activations[i - 1]
        if (i - 1) in cache.masks:
            h_in = h_in * cache.masks[i - 1] / cache.keep
        dw = dz.T @ h_in
        db = dz.sum(axis=0)
        param_grads[i] = (dw, db)
        g = dz @ layer.weights
    input_grads = g
    if cache.single_sample:
        input_grads = input_grads[0]
    return param_grads, input_grads


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    loss_spec: LossSpec,
    targets: np.ndarray,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Gradients of the scalar loss w.r.t. every parameter and input."""
    _check_cache(params, cache)
    if params.out_size != 1:
        raise ContractError("loss backward expects a single-output network")
    if len(params.layers) - 1 in cache.masks:
        raise ContractError("dropout after the output layer is not supported")
    preds = cache.activations[-1][:, 0]
    y = np.asarray(targets, dtype=np.float64)
    dLdp = loss_grad(loss_spec, preds, y)
    return backward_from(params, cache, dLdp)


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for a flat list of arrays."""

    step_count: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(arrays: list[np.ndarray], learning_rate: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        step_count=0,
        first_moment=[np.zeros_like(a) for a in arrays],
        second_moment=[np.zeros_like(a) for a in arrays],
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(
    state: AdamState,
    arrays: list[np.ndarray],
    grads: list[np.ndarray],
) -> tuple[list[np.ndarray], AdamState]:
    """One standard bias-corrected Adam update.

    Returns fresh parameter arrays and the advanced state; on a
    non-finite gradient the parameters are left untouched.
    """
    if len(arrays) != len(grads) or len(arrays) != len(state.first_moment):
        raise ShapeError("parameter/gradient/state length mismatch")
    for a, g in zip(arrays, grads):
        if a.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {a.shape}")
    if any(not np.isfinite(g).all() for g in grads):
        raise NumericError("non-finite gradient; parameters untouched")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_params = [], [], []
    for a, g, m, v in zip(arrays, grads, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params.append(a - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    new_state = replace(state, step_count=t, first_moment=new_m, second_moment=new_v)
    return new_params, new_state


def network_arrays(params: NetworkParams) -> list[np.ndarray]:
    """Flat [W0, b0, W1, b1, ...] view used by the optimizer."""
    out = []
    for layer in params.layers:
        out.append(layer.weights)
        out.append(layer.biases)
    return out


def set_network_arrays(params: NetworkParams, arrays: list[np.ndarray]):
    if len(arrays) != 2 * len(params.layers):
        raise ShapeError("array list does not match layer count")
    for i, layer in enumerate(params.layers):
        w, b = arrays[2 * i], arrays[2 * i + 1]
        if w.shape != layer.weights.shape or b.shape != layer.biases.shape:
            raise ShapeError("array shapes do not match layer shapes")
        layer.weights = w
        layer.biases = b


def grads_arrays(param_grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    out = []
    for dw, db in param_grads:
        out.append(dw)
        out.append(db)
    return out


def init_network(
    layer_sizes: list[int],
    activations: list[str],
    dropout: DropoutSpec | None = None,
    seed: int = 0,
) -> NetworkParams:
    """Glorot-uniform initialized network, zero biases.

    layer_sizes is [in, h1, ..., out]; activations has one entry per
    layer (len(layer_sizes) - 1).
    """
    if len(activations) != len(layer_sizes) - 1:
        raise ShapeError("need one activation per layer")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(layer_sizes, layer_sizes[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(DenseLayer(weights=w, biases=np.zeros(fan_out), activation=act))
    return NetworkParams(layers=layers, dropout=dropout or DropoutSpec())


# --- snapshot serialization -------------------------------------------------
#
# Self-describing JSON container; float64 payloads are base64-encoded
# little-endian bytes so the round trip is bit-identical.


def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape) -> np.ndarray:
    raw = base64.b64decode(s.encode("ascii"))
    return np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)


def network_to_doc(params: NetworkParams) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "layers": [
            {
                "activation": l.activation,
                "in": l.in_size,
                "out": l.out_size,
                "weights": _encode(l.weights),
                "biases": _encode(l.biases),
            }
            for l in params.layers
        ],
        "dropout": {
            "rate": params.dropout.rate,
            "placement": list(params.dropout.placement),
            "seed": params.dropout.seed,
        },
    }


def network_from_doc(doc: dict) -> NetworkParams:
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ContractError(f"not a network snapshot: format={doc.get('format')!r}")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ContractError(f"unsupported snapshot version {doc.get('version')!r}")
    layers = [
        DenseLayer(
            weights=_decode(l["weights"], (l["out"], l["in"])),
            biases=_decode(l["biases"], (l["out"],)),
            activation=l["activation"],
        )
        for l in doc["layers"]
    ]
    d = doc["dropout"]
    return NetworkParams(
        layers=layers,
        dropout=DropoutSpec(rate=d["rate"], placement=tuple(d["placement"]), seed=d["seed"]),
    )


def dumps_canonical(doc: dict) -> str:
    """Canonical JSON text: key-sorted, minimal separators, newline-terminated."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_network(params: NetworkParams, path: str | Path):
    Path(path).write_text(dumps_canonical(network_to_doc(params)))


def load_network(path: str | Path) -> NetworkParams:
    return network_from_doc(json.loads(Path(path).read_text()))
