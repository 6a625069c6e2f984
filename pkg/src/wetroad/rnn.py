"""LSTM / bidirectional LSTM sequence classifiers trained by BPTT.

Cell equations per step (sigma = logistic, peephole terms optional):

    i_t = sigma(W_i x_t + R_i h_{t-1} + p_i * c_{t-1} + b_i)
    f_t = sigma(W_f x_t + R_f h_{t-1} + p_f * c_{t-1} + b_f)
    z_t = tanh (W_z x_t + R_z h_{t-1} + b_z)
    c_t = f_t * c_{t-1} + i_t * z_t
    o_t = sigma(W_o x_t + R_o h_{t-1} + p_o * c_t + b_o)
    h_t = o_t * tanh(c_t)

The output layer applies independent logistic units per frame (no
cross-class normalization); the training objective is the plain sum of
squared errors against one-hot targets, minimized by online gradient
descent over fixed-length subsequences. All gradients are exact
reverse-mode derivatives through the unrolled recurrence, peephole
paths included.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import expit

from .errors import NumericError, ValidationError

MODEL_FORMAT_VERSION = 1
GATE_NAMES = ("i", "f", "z", "o")  # stacking order in fused tensors


@dataclass
class NetworkSpec:
    """Architecture and training hyperparameters."""

    input_dim: int
    hidden_layout: tuple[int, ...] = (54, 54, 54)
    bidirectional: bool = False
    output_dim: int = 2
    learning_rate: float = 1e-5
    seed: int = 0
    max_epochs: int = 100
    patience: int = 10
    subsequence_len: int = 100
    peepholes: bool = True

    def __post_init__(self):
        self.hidden_layout = tuple(int(h) for h in self.hidden_layout)
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_layout):
            raise ValidationError("all layer sizes must be >= 1")
        if not self.hidden_layout:
            raise ValidationError("need at least one hidden layer")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.subsequence_len < 1:
            raise ValidationError("subsequence_len must be >= 1")


@dataclass
class LstmLayerParams:
    """One direction of one LSTM layer.

    W_* map the layer input, R_* the previous hidden state, b_* are
    biases and p_* elementwise (diagonal) peephole weights.
    """

    W_i: np.ndarray
    W_f: np.ndarray
    W_z: np.ndarray
    W_o: np.ndarray
    R_i: np.ndarray
    R_f: np.ndarray
    R_z: np.ndarray
    R_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_z: np.ndarray
    b_o: np.ndarray
    p_i: np.ndarray
    p_f: np.ndarray
    p_o: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1]

    def stacked(self):
        # fused views used by the forward/backward loops
        W4 = np.vstack([self.W_i, self.W_f, self.W_z, self.W_o])
        R4 = np.vstack([self.R_i, self.R_f, self.R_z, self.R_o])
        b4 = np.concatenate([self.b_i, self.b_f, self.b_z, self.b_o])
        return W4, R4, b4


@dataclass
class LstmLayer:
    fwd: LstmLayerParams
    bwd: LstmLayerParams | None = None  # present iff bidirectional

    @property
    def output_size(self) -> int:
        return self.fwd.hidden_size * (2 if self.bwd is not None else 1)


@dataclass
class OutputLayer:
    V: np.ndarray
    b: np.ndarray


@dataclass
class RnnModel:
    spec: NetworkSpec
    layers: list[LstmLayer]
    output: OutputLayer


def _init_direction(rng, hidden: int, inputs: int, peepholes: bool) -> LstmLayerParams:
    def u(*shape):
        return rng.uniform(-0.1, 0.1, size=shape)

    W = {g: u(hidden, inputs) for g in GATE_NAMES}
    R = {g: u(hidden, hidden) for g in GATE_NAMES}
    b = {g: np.zeros(hidden) for g in GATE_NAMES}
    if peepholes:
        p_i, p_f, p_o = u(hidden), u(hidden), u(hidden)
    else:
        p_i = p_f = p_o = np.zeros(hidden)
    return LstmLayerParams(
        W_i=W["i"], W_f=W["f"], W_z=W["z"], W_o=W["o"],
        R_i=R["i"], R_f=R["f"], R_z=R["z"], R_o=R["o"],
        b_i=b["i"], b_f=b["f"], b_z=b["z"], b_o=b["o"],
        p_i=p_i, p_f=p_f, p_o=p_o,
    )


def init_model(spec: NetworkSpec) -> RnnModel:
    """Seeded uniform [-0.1, 0.1] weights, zero biases.

    Draw order is fixed (layer by layer, forward direction before
    backward, W then R then peepholes) so equal seeds give bit-identical
    models.
    """
    rng = np.random.default_rng(spec.seed)
    layers = []
    in_dim = spec.input_dim
    for hidden in spec.hidden_layout:
        fwd = _init_direction(rng, hidden, in_dim, spec.peepholes)
        bwd = _init_direction(rng, hidden, in_dim, spec.peepholes) if spec.bidirectional else None
        layers.append(LstmLayer(fwd=fwd, bwd=bwd))
        in_dim = hidden * (2 if spec.bidirectional else 1)
    V = rng.uniform(-0.1, 0.1, size=(spec.output_dim, in_dim))
    b = np.zeros(spec.output_dim)
    return RnnModel(spec=spec, layers=layers, output=OutputLayer(V=V, b=b))


def param_arrays(model: RnnModel) -> list[tuple[str, np.ndarray]]:
    """All trainable tensors with stable names, in a fixed order."""
    tensors = ["W_i", "W_f", "W_z", "W_o", "R_i", "R_f", "R_z", "R_o",
               "b_i", "b_f", "b_z", "b_o"]
    if model.spec.peepholes:
        tensors += ["p_i", "p_f", "p_o"]
    out = []
    for li, layer in enumerate(model.layers):
        for direction, params in (("fwd", layer.fwd), ("bwd", layer.bwd)):
            if params is None:
                continue
            for name in tensors:
                out.append((f"layer{li}.{direction}.{name}", getattr(params, name)))
    out.append(("output.V", model.output.V))
    out.append(("output.b", model.output.b))
    return out


def num_params(model: RnnModel) -> int:
    return sum(arr.size for _, arr in param_arrays(model))


def _direction_forward(params: LstmLayerParams, X: np.ndarray, reverse: bool,
                       peepholes: bool, want_cache: bool):
    T = X.shape[0]
    h = params.hidden_size
    W4, R4, b4 = params.stacked()
    Xp = X[::-1] if reverse else X
    H = np.zeros((T, h))
    if want_cache:
        I = np.zeros((T, h)); F = np.zeros((T, h))
        Z = np.zeros((T, h)); O = np.zeros((T, h))
        C = np.zeros((T, h)); TC = np.zeros((T, h))
    A = Xp @ W4.T + b4  # input contributions for every step at once
    h_t = np.zeros(h)
    c_t = np.zeros(h)
    p_i, p_f, p_o = params.p_i, params.p_f, params.p_o
    for t in range(T):
        a = A[t] + R4 @ h_t
        if peepholes:
            i_t = expit(a[:h] + p_i * c_t)
            f_t = expit(a[h:2 * h] + p_f * c_t)
        else:
            i_t = expit(a[:h])
            f_t = expit(a[h:2 * h])
        z_t = np.tanh(a[2 * h:3 * h])
        c_t = f_t * c_t + i_t * z_t
        if peepholes:
            o_t = expit(a[3 * h:] + p_o * c_t)
        else:
            o_t = expit(a[3 * h:])
        tc = np.tanh(c_t)
        h_t = o_t * tc
        H[t] = h_t
        if want_cache:
            I[t] = i_t; F[t] = f_t; Z[t] = z_t; O[t] = o_t
            C[t] = c_t; TC[t] = tc
    cache = None
    if want_cache:
        cache = {"Xp": Xp, "I": I, "F": F, "Z": Z, "O": O, "C": C, "TC": TC,
                 "H": H, "W4": W4, "R4": R4}
    outputs = H[::-1] if reverse else H
    return outputs, cache


def _direction_backward(params: LstmLayerParams, cache: dict, dH_proc: np.ndarray,
                        peepholes: bool):
    """Reverse-mode pass for one direction.

    dH_proc is dLoss/dH in processing order; returns (grads dict keyed by
    tensor name, dX in processing order).
    """
    I, F, Z, O = cache["I"], cache["F"], cache["Z"], cache["O"]
    C, TC, H, Xp = cache["C"], cache["TC"], cache["H"], cache["Xp"]
    W4, R4 = cache["W4"], cache["R4"]
    T, h = dH_proc.shape
    R4T = np.ascontiguousarray(R4.T)
    p_i, p_f, p_o = params.p_i, params.p_f, params.p_o
    DA = np.zeros((T, 4 * h))
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in range(T - 1, -1, -1):
        dh = dH_proc[t] + dh_next
        do = dh * TC[t]
        dao = do * O[t] * (1.0 - O[t])
        dc = dh * O[t] * (1.0 - TC[t] ** 2) + dc_next
        if peepholes:
            dc = dc + p_o * dao
        c_prev = C[t - 1] if t > 0 else 0.0
        di = dc * Z[t]
        dai = di * I[t] * (1.0 - I[t])
        df = dc * c_prev
        daf = df * F[t] * (1.0 - F[t])
        dz = dc * I[t]
        daz = dz * (1.0 - Z[t] ** 2)
        da = DA[t]
        da[:h] = dai; da[h:2 * h] = daf; da[2 * h:3 * h] = daz; da[3 * h:] = dao
        dh_next = R4T @ da
        dc_next = dc * F[t]
        if peepholes:
            dc_next = dc_next + p_i * dai + p_f * daf
    Hprev = np.vstack([np.zeros((1, h)), H[:-1]])
    Cprev = np.vstack([np.zeros((1, h)), C[:-1]])
    dW4 = DA.T @ Xp
    dR4 = DA.T @ Hprev
    db4 = DA.sum(axis=0)
    grads = {}
    for gi, g in enumerate(GATE_NAMES):
        grads[f"W_{g}"] = dW4[gi * h:(gi + 1) * h]
        grads[f"R_{g}"] = dR4[gi * h:(gi + 1) * h]
        grads[f"b_{g}"] = db4[gi * h:(gi + 1) * h]
    if peepholes:
        grads["p_i"] = (DA[:, :h] * Cprev).sum(axis=0)
        grads["p_f"] = (DA[:, h:2 * h] * Cprev).sum(axis=0)
        grads["p_o"] = (DA[:, 3 * h:] * C).sum(axis=0)
    dXp = DA @ W4
    return grads, dXp


def lstm_forward(params: LstmLayerParams, inputs, reverse: bool = False,
                 peepholes: bool = True) -> np.ndarray:
    """Hidden-state sequence of a single LSTM direction.

    With reverse=True the sequence is processed back to front and the
    outputs are re-reversed to input order.
    """
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("inputs must be (time, features)")
    if X.shape[1] != params.input_size:
        raise ValidationError(
            f"input dim {X.shape[1]} does not match layer input size {params.input_size}"
        )
    if X.shape[0] == 0:
        return np.zeros((0, params.hidden_size))
    outputs, _ = _direction_forward(params, X, reverse, peepholes, want_cache=False)
    return outputs


def blstm_forward(fwd: LstmLayerParams, bwd: LstmLayerParams, inputs,
                  peepholes: bool = True) -> np.ndarray:
    """Concatenate forward-time and backward-time passes per position."""
    return np.hstack([
        lstm_forward(fwd, inputs, reverse=False, peepholes=peepholes),
        lstm_forward(bwd, inputs, reverse=True, peepholes=peepholes),
    ])


def _model_forward(model: RnnModel, X: np.ndarray, want_cache: bool):
    spec = model.spec
    caches = []
    current = X
    for layer in model.layers:
        out_f, cache_f = _direction_forward(layer.fwd, current, False, spec.peepholes, want_cache)
        if layer.bwd is not None:
            out_b, cache_b = _direction_forward(layer.bwd, current, True, spec.peepholes, want_cache)
            current = np.hstack([out_f, out_b])
        else:
            out_b, cache_b = None, None
            current = out_f
        caches.append((cache_f, cache_b))
    Y = expit(current @ model.output.V.T + model.output.b)
    return Y, current, caches


def model_forward(model: RnnModel, inputs) -> np.ndarray:
    """Per-frame class posteriors: independent logistic units in (0, 1)."""
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.spec.input_dim:
        raise ValidationError("inputs must be (time, input_dim)")
    if X.shape[0] == 0:
        return np.zeros((0, model.spec.output_dim))
    Y, _, _ = _model_forward(model, X, want_cache=False)
    return Y


def sse_loss(posteriors, targets) -> float:
    """Sum of squared errors over every frame and output unit."""
    y = np.asarray(posteriors, dtype=np.float64)
    d = np.asarray(targets, dtype=np.float64)
    if y.shape != d.shape:
        raise ValidationError(f"shape mismatch {y.shape} vs {d.shape}")
    return float(((y - d) ** 2).sum())


def _backward(model: RnnModel, X, targets, Y, Hlast, caches):
    spec = model.spec
    dY = 2.0 * (Y - targets)
    dAout = dY * Y * (1.0 - Y)
    grads = {
        "output.V": dAout.T @ Hlast,
        "output.b": dAout.sum(axis=0),
    }
    dH = dAout @ model.output.V
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        cache_f, cache_b = caches[li]
        h = layer.fwd.hidden_size
        if layer.bwd is not None:
            g_f, dX_f = _direction_backward(layer.fwd, cache_f, dH[:, :h], spec.peepholes)
            g_b, dX_b = _direction_backward(layer.bwd, cache_b, dH[:, h:][::-1], spec.peepholes)
            dH = dX_f + dX_b[::-1]
            for name, g in g_f.items():
                grads[f"layer{li}.fwd.{name}"] = g
            for name, g in g_b.items():
                grads[f"layer{li}.bwd.{name}"] = g
        else:
            g_f, dX_f = _direction_backward(layer.fwd, cache_f, dH, spec.peepholes)
            dH = dX_f
            for name, g in g_f.items():
                grads[f"layer{li}.fwd.{name}"] = g
    return grads


def _forward_backward(model: RnnModel, X, targets):
    Y, Hlast, caches = _model_forward(model, X, want_cache=True)
    loss = sse_loss(Y, targets)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss in forward pass")
    grads = _backward(model, X, targets, Y, Hlast, caches)
    return grads, loss


def bptt_gradients(model: RnnModel, inputs, targets) -> dict[str, np.ndarray]:
    """Exact SSE gradients for every parameter, keyed like param_arrays.

    Raises NumericError when non-finite values appear.
    """
    X = np.asarray(inputs, dtype=np.float64)
    D = np.asarray(targets, dtype=np.float64)
    if X.shape[0] == 0:
        return {name: np.zeros_like(arr) for name, arr in param_arrays(model)}
    if X.ndim != 2 or X.shape[1] != model.spec.input_dim:
        raise ValidationError("inputs must be (time, input_dim)")
    if D.shape != (X.shape[0], model.spec.output_dim):
        raise ValidationError("targets must be (time, output_dim)")
    grads, _ = _forward_backward(model, X, D)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    return grads


def _one_hot(labels: np.ndarray, output_dim: int) -> np.ndarray:
    return np.eye(output_dim)[np.asarray(labels, dtype=np.int64)]


def _split_subsequences(sequences, subsequence_len: int):
    """(features, targets) chunks of at most subsequence_len frames."""
    chunks = []
    for X, D in sequences:
        T = X.shape[0]
        for start in range(0, T, subsequence_len):
            chunks.append((X[start:start + subsequence_len], D[start:start + subsequence_len]))
    return chunks


@dataclass
class TrainHistory:
    """Per-epoch training SSE, validation SSE/UAR and wall time."""

    train_sse: list[float] = field(default_factory=list)
    val_sse: list[float] = field(default_factory=list)
    val_uar: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.train_sse)


def _sequences_from(dataset) -> list[tuple[np.ndarray, np.ndarray]]:
    # dataset entries: LabeledSequence with features, or (X, labels) pairs
    out = []
    for item in dataset:
        if hasattr(item, "features"):
            X = item.features.values
            labels = item.labels
        else:
            X, labels = item
            X = np.asarray(X, dtype=np.float64)
        out.append((X, np.asarray(labels, dtype=np.int64)))
    return out


def _validation_scores(model: RnnModel, val_sequences):
    total_sse = 0.0
    recall_hits = np.zeros(model.spec.output_dim)
    recall_totals = np.zeros(model.spec.output_dim)
    for X, labels in val_sequences:
        Y = model_forward(model, X)
        D = _one_hot(labels, model.spec.output_dim)
        total_sse += sse_loss(Y, D)
        pred = (Y[:, 1] > Y[:, 0]).astype(np.int64)
        for c in range(model.spec.output_dim):
            mask = labels == c
            recall_totals[c] += mask.sum()
            recall_hits[c] += (pred[mask] == c).sum()
    if np.any(recall_totals == 0):
        raise ValidationError("validation set must contain every class")
    return total_sse, float(np.mean(recall_hits / recall_totals))


def train(model: RnnModel, train_set, val_set, spec: NetworkSpec | None = None):
    """Online gradient descent over shuffled subsequences with early stop.

    Sequences are cut into spec.subsequence_len chunks (shorter tails
    kept); parameters are updated once per chunk with a plain learning-
    rate step. Epoch order is shuffled by a generator seeded from
    spec.seed, so runs are repeatable. Training stops when validation
    UAR has not improved for spec.patience consecutive epochs, and the
    best-validation-UAR parameters are returned.
    """
    spec = spec or model.spec
    train_sequences = _sequences_from(train_set)
    if not train_sequences:
        raise ValidationError("training set is empty")
    val_sequences = _sequences_from(val_set)
    if not val_sequences:
        raise ValidationError("validation set is empty")
    for X, _ in train_sequences + val_sequences:
        if X.shape[1] != spec.input_dim:
            raise ValidationError("sequence feature dim does not match spec.input_dim")
    chunks = _split_subsequences(
        [(X, _one_hot(lab, spec.output_dim)) for X, lab in train_sequences],
        spec.subsequence_len,
    )
    rng = np.random.default_rng(spec.seed)
    params = param_arrays(model)
    history = TrainHistory()
    best_uar = -np.inf
    best_state = None
    stale = 0
    for _epoch in range(spec.max_epochs):
        started = time.perf_counter()
        epoch_sse = 0.0
        for idx in rng.permutation(len(chunks)):
            X, D = chunks[idx]
            grads, loss = _forward_backward(model, X, D)
            epoch_sse += loss
            for name, arr in params:
                arr -= spec.learning_rate * grads[name]
        val_sse, val_uar = _validation_scores(model, val_sequences)
        history.train_sse.append(epoch_sse)
        history.val_sse.append(val_sse)
        history.val_uar.append(val_uar)
        history.epoch_seconds.append(time.perf_counter() - started)
        if val_uar > best_uar:
            best_uar = val_uar
            best_state = [arr.copy() for _, arr in params]
            stale = 0
        else:
            stale += 1
        if stale > spec.patience:
            break
    if best_state is not None:
        for (_, arr), saved in zip(params, best_state):
            arr[...] = saved
    return model, history


def predict_frames(model: RnnModel, features):
    """Per-frame class decisions (ties resolved toward class 0) and posteriors."""
    X = features.values if hasattr(features, "values") else np.asarray(features)
    posteriors = model_forward(model, X)
    classes = (posteriors[:, 1] > posteriors[:, 0]).astype(np.int64)
    return classes, posteriors


def save_model(path, model: RnnModel) -> None:
    """JSON container: spec, every tensor as nested (row-major) lists."""
    doc = {
        "kind": "rnn",
        "format_version": MODEL_FORMAT_VERSION,
        "spec": asdict(model.spec),
        "params": {name: arr.tolist() for name, arr in param_arrays(model)},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> RnnModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "rnn":
        raise ValidationError(f"{path}: not an RNN model file")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {doc.get('format_version')}")
    spec_doc = dict(doc["spec"])
    spec_doc["hidden_layout"] = tuple(spec_doc["hidden_layout"])
    spec = NetworkSpec(**spec_doc)
    model = init_model(spec)
    stored = doc["params"]
    for name, arr in param_arrays(model):
        if name not in stored:
            raise ValidationError(f"model file missing tensor {name}")
        loaded = np.asarray(stored[name], dtype=np.float64)
        if loaded.shape != arr.shape:
            raise ValidationError(f"tensor {name} has shape {loaded.shape}, expected {arr.shape}")
        arr[...] = loaded
    return model
