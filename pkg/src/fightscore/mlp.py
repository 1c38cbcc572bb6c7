"""Score generator: a small MLP with hand-derived backprop and Adam.

The default architecture maps a D-dimensional clip feature through hidden
layers of 512 and 32 ReLU units to a single sigmoid output, so every score
lands in (0, 1). Hidden layers use inverted dropout in training mode only;
inference is a pure function of (params, features). All arithmetic is
float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import struct

import numpy as np

from .errors import CorruptionError, FormatError, TrainingError

DEFAULT_HIDDEN_DIMS = (512, 32)
DEFAULT_DROPOUT = 0.6

MODEL_MAGIC = b"MDL1"
MODEL_VERSION = 1


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class MlpParams:
    """Weights and biases per layer; weights[l] has shape (dims[l], dims[l+1])."""

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    dropout_rate: float = DEFAULT_DROPOUT

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims must chain at least two positive sizes, got {dims}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise ValueError("need exactly one weight matrix and bias vector per layer")
        for l, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise ValueError(
                    f"layer {l}: weight shape {w.shape} / bias shape {b.shape} "
                    f"do not chain {dims[l]} -> {dims[l + 1]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {l}: non-finite parameters")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def d_in(self) -> int:
        return self.layer_dims[0]


@dataclass(frozen=True)
class Gradients:
    """d(loss)/d(params), shaped exactly like MlpParams tensors."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            weights=tuple(w * factor for w in self.weights),
            biases=tuple(b * factor for b in self.biases),
        )

    def added(self, other: "Gradients") -> "Gradients":
        return Gradients(
            weights=tuple(a + b for a, b in zip(self.weights, other.weights)),
            biases=tuple(a + b for a, b in zip(self.biases, other.biases)),
        )


@dataclass(frozen=True)
class AdamState:
    """Optimizer accumulators; zero-initialized at step_count 0."""

    step_count: int
    lr: float
    beta1: float
    beta2: float
    eps_hat: float
    m_weights: tuple[np.ndarray, ...]
    v_weights: tuple[np.ndarray, ...]
    m_biases: tuple[np.ndarray, ...]
    v_biases: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class ForwardTrace:
    """Caches from one training-mode forward pass, consumed by backward()."""

    layer_inputs: tuple[np.ndarray, ...]  # input to each layer; [0] is the feature matrix
    pre_acts: tuple[np.ndarray, ...]  # z per layer, output layer last
    masks: tuple[np.ndarray | None, ...]  # dropout mask per hidden layer (None if disabled)
    scores: np.ndarray


@dataclass(frozen=True)
class GeneratorModel:
    """Parameters plus optimizer state, the unit the trainers pass around."""

    params: MlpParams
    state: AdamState


def init_params(
    d_in: int,
    seed: int,
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN_DIMS,
    dropout_rate: float = DEFAULT_DROPOUT,
) -> MlpParams:
    """Glorot-uniform weights, zero biases; deterministic for a fixed seed."""
    if d_in < 1:
        raise ValueError(f"d_in must be >= 1, got {d_in}")
    dims = (int(d_in), *(int(h) for h in hidden_dims), 1)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(
        layer_dims=dims,
        weights=tuple(weights),
        biases=tuple(biases),
        dropout_rate=dropout_rate,
    )


def init_adam_state(
    params: MlpParams,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_hat: float = 1e-8,
) -> AdamState:
    return AdamState(
        step_count=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps_hat=eps_hat,
        m_weights=tuple(np.zeros_like(w) for w in params.weights),
        v_weights=tuple(np.zeros_like(w) for w in params.weights),
        m_biases=tuple(np.zeros_like(b) for b in params.biases),
        v_biases=tuple(np.zeros_like(b) for b in params.biases),
    )


def forward(
    params: MlpParams,
    feats: np.ndarray,
    mode: str = "infer",
    rng: int | np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace | None]:
    """Score a (K, D) feature matrix; returns (scores, trace).

    Training mode applies inverted dropout after every hidden ReLU and
    returns the trace backward() needs; inference mode is deterministic and
    returns no trace. Dropout draws come from `rng`, which is required
    whenever it would actually fire.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.d_in:
        raise ValueError(
            f"feature matrix shape {feats.shape} does not match input dim {params.d_in}"
        )
    if not np.isfinite(feats).all():
        raise ValueError("feature matrix contains non-finite values")
    training = mode == "train"
    use_dropout = training and params.dropout_rate > 0.0
    if use_dropout:
        if rng is None:
            raise TrainingError("training-mode forward with dropout requires an explicit rng")
        rng = np.random.default_rng(rng)

    keep = 1.0 - params.dropout_rate
    h = feats
    layer_inputs = [feats]
    pre_acts = []
    masks: list[np.ndarray | None] = []
    for l in range(params.n_layers - 1):
        z = h @ params.weights[l] + params.biases[l]
        a = np.maximum(z, 0.0)
        if use_dropout:
            mask = rng.random(a.shape) >= params.dropout_rate
            a = a * mask / keep
            masks.append(mask)
        else:
            masks.append(None)
        pre_acts.append(z)
        layer_inputs.append(a)
        h = a
    z_out = h @ params.weights[-1] + params.biases[-1]
    pre_acts.append(z_out)
    scores = sigmoid(z_out[:, 0])
    if not training:
        return scores, None
    trace = ForwardTrace(
        layer_inputs=tuple(layer_inputs),
        pre_acts=tuple(pre_acts),
        masks=tuple(masks),
        scores=scores,
    )
    return scores, trace


def backward(
    params: MlpParams,
    trace: ForwardTrace,
    feats: np.ndarray,
    score_grads: np.ndarray,
) -> Gradients:
    """Backprop d(loss)/d(scores) into parameter gradients, reusing the trace."""
    feats = np.asarray(feats, dtype=np.float64)
    score_grads = np.asarray(score_grads, dtype=np.float64)
    k = feats.shape[0]
    if (
        len(trace.layer_inputs) != params.n_layers
        or trace.layer_inputs[0].shape != feats.shape
        or score_grads.shape != (k,)
        or any(
            trace.layer_inputs[l].shape[1] != params.layer_dims[l]
            for l in range(params.n_layers)
        )
    ):
        raise ValueError("trace does not match this forward call (stale trace?)")

    keep = 1.0 - params.dropout_rate
    s = trace.scores
    dz = (score_grads * s * (1.0 - s))[:, None]
    d_weights: list[np.ndarray] = [None] * params.n_layers  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * params.n_layers  # type: ignore[list-item]
    for l in range(params.n_layers - 1, -1, -1):
        d_weights[l] = trace.layer_inputs[l].T @ dz
        d_biases[l] = dz.sum(axis=0)
        if l == 0:
            break
        da = dz @ params.weights[l].T
        mask = trace.masks[l - 1]
        if mask is not None:
            da = da * mask / keep
        dz = da * (trace.pre_acts[l - 1] > 0.0)
    return Gradients(weights=tuple(d_weights), biases=tuple(d_biases))


def adam_step(params: MlpParams, state: AdamState, grads: Gradients) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    for l, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not np.isfinite(gw).all():
            raise TrainingError(f"non-finite gradient in layer {l} weights")
        if not np.isfinite(gb).all():
            raise TrainingError(f"non-finite gradient in layer {l} biases")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t

    def update(p, m, v, g):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        m_hat = m_new / bc1
        v_hat = v_new / bc2
        p_new = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)
        return p_new, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for p, m, v, g in zip(params.weights, state.m_weights, state.v_weights, grads.weights):
        pn, mn, vn = update(p, m, v, g)
        new_w.append(pn)
        new_mw.append(mn)
        new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for p, m, v, g in zip(params.biases, state.m_biases, state.v_biases, grads.biases):
        pn, mn, vn = update(p, m, v, g)
        new_b.append(pn)
        new_mb.append(mn)
        new_vb.append(vn)

    new_params = MlpParams(
        layer_dims=params.layer_dims,
        weights=tuple(new_w),
        biases=tuple(new_b),
        dropout_rate=params.dropout_rate,
    )
    new_state = AdamState(
        step_count=t,
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps_hat=state.eps_hat,
        m_weights=tuple(new_mw),
        v_weights=tuple(new_vw),
        m_biases=tuple(new_mb),
        v_biases=tuple(new_vb),
    )
    return new_params, new_state


# ---------------------------------------------------------------------------
# Model file: magic, version, dims, then f64 LE tensors in declaration order.

_MODEL_HEAD = struct.Struct("<4sII")  # magic, version, n_dims
_MODEL_HYPER = struct.Struct("<dQdddd")  # dropout_rate, step_count, lr, beta1, beta2, eps_hat


def save_model(params: MlpParams, state: AdamState, path: str | Path) -> None:
    """Serialize params and optimizer state; round-trips byte-exactly."""
    chunks = [
        _MODEL_HEAD.pack(MODEL_MAGIC, MODEL_VERSION, len(params.layer_dims)),
        struct.pack(f"<{len(params.layer_dims)}I", *params.layer_dims),
        _MODEL_HYPER.pack(
            params.dropout_rate, state.step_count, state.lr, state.beta1, state.beta2, state.eps_hat
        ),
    ]
    for group in (
        params.weights,
        params.biases,
        state.m_weights,
        state.m_biases,
        state.v_weights,
        state.v_biases,
    ):
        for tensor in group:
            chunks.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_model(path: str | Path) -> tuple[MlpParams, AdamState]:
    """Load a model file written by save_model; strict about length and version."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _MODEL_HEAD.size:
        raise CorruptionError(f"{path}: truncated model file")
    magic, version, n_dims = _MODEL_HEAD.unpack_from(blob, 0)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model format version {version}")
    offset = _MODEL_HEAD.size
    if n_dims < 2 or len(blob) < offset + 4 * n_dims + _MODEL_HYPER.size:
        raise CorruptionError(f"{path}: truncated model file")
    dims = struct.unpack_from(f"<{n_dims}I", blob, offset)
    offset += 4 * n_dims
    dropout_rate, step_count, lr, beta1, beta2, eps_hat = _MODEL_HYPER.unpack_from(blob, offset)
    offset += _MODEL_HYPER.size

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise CorruptionError(f"{path}: truncated model file")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
        return arr

    w_shapes = [(dims[l], dims[l + 1]) for l in range(n_dims - 1)]
    b_shapes = [(dims[l + 1],) for l in range(n_dims - 1)]
    weights = tuple(take(s) for s in w_shapes)
    biases = tuple(take(s) for s in b_shapes)
    m_weights = tuple(take(s) for s in w_shapes)
    m_biases = tuple(take(s) for s in b_shapes)
    v_weights = tuple(take(s) for s in w_shapes)
    v_biases = tuple(take(s) for s in b_shapes)
    if offset != len(blob):
        raise CorruptionError(f"{path}: {len(blob) - offset} unexpected trailing bytes")

    params = MlpParams(
        layer_dims=dims, weights=weights, biases=biases, dropout_rate=dropout_rate
    )
    state = AdamState(
        step_count=step_count,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps_hat=eps_hat,
        m_weights=m_weights,
        v_weights=v_weights,
        m_biases=m_biases,
        v_biases=v_biases,
    )
    return params, state
