"""Independent reference implementations used as test oracles.

Everything here recomputes results through a different route than the
package: explicit DFT sums instead of FFT, dict counting instead of
vectorized entropy, batched central finite differences instead of
reverse-mode BPTT.
"""

import math

import numpy as np

from wetroad import rnn


# ---------------------------------------------------------------- DSP oracle

def hann_oracle(length):
    if length == 1:
        return np.ones(1)
    return np.array([0.5 - 0.5 * math.cos(2.0 * math.pi * n / (length - 1))
                     for n in range(length)])


def dft_power_oracle(frame, fft_size):
    """Power spectrum via the explicit DFT sum (no FFT)."""
    padded = np.zeros(fft_size)
    windowed = np.asarray(frame, dtype=np.float64) * hann_oracle(len(frame))
    padded[: len(frame)] = windowed
    n = np.arange(fft_size)
    out = np.zeros(fft_size // 2 + 1)
    for k in range(fft_size // 2 + 1):
        basis = np.exp(-2j * np.pi * k * n / fft_size)
        out[k] = abs(np.dot(padded, basis)) ** 2
    return out


def asf_oracle(clip, frame_spec, bank):
    """Frame-by-frame ASF recomputation on top of dft_power_oracle."""
    L = int(round(frame_spec.frame_ms * clip.sample_rate / 1000.0))
    H = int(round(frame_spec.step_ms * clip.sample_rate / 1000.0))
    n = len(clip.samples)
    count = (n - L) // H + 1 if n >= L else 0
    rows = []
    prev_mel = None
    prev_energy = None
    for i in range(count):
        frame = clip.samples[i * H : i * H + L]
        power = dft_power_oracle(frame, bank.fft_size)
        mel_log = np.log(bank.weights @ power + 1.0)
        energy = math.log(1.0 + float(np.sum(frame**2)))
        if prev_mel is None:
            deltas = np.zeros_like(mel_log)
            denergy = 0.0
        else:
            deltas = np.maximum(0.0, mel_log - prev_mel)
            denergy = max(0.0, energy - prev_energy)
        rows.append(np.concatenate([mel_log, deltas, [energy, denergy]]))
        prev_mel, prev_energy = mel_log, energy
    return np.array(rows) if rows else np.zeros((0, 2 * bank.num_filters + 2))


# ---------------------------------------------------- entropy and IG oracles

def entropy_oracle(labels):
    counts = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    total = len(labels)
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


def info_gain_oracle(values, labels, cuts):
    bins = [sum(1 for c in cuts if v > c) for v in values]
    total = len(labels)
    h = entropy_oracle(labels)
    for b in set(bins):
        members = [lab for lab, bb in zip(labels, bins) if bb == b]
        h -= len(members) / total * entropy_oracle(members)
    return h


def cfs_merit_oracle(subset, su_fc, su_ff):
    k = len(subset)
    r_cf = sum(su_fc[i] for i in subset) / k
    if k == 1:
        return r_cf
    pairs = [(a, b) for ai, a in enumerate(subset) for b in subset[ai + 1:]]
    r_ff = sum(su_ff[a][b] for a, b in pairs) / len(pairs)
    return k * r_cf / math.sqrt(k + k * (k - 1) * r_ff)


# ------------------------------------------------- batched finite differences

def _flatten_params(model):
    arrays = rnn.param_arrays(model)
    theta = np.concatenate([arr.ravel() for _, arr in arrays])
    layout = []
    offset = 0
    for name, arr in arrays:
        layout.append((name, arr.shape, offset, offset + arr.size))
        offset += arr.size
    return theta, layout


def _batched_model_loss(spec, layout, thetas, X_batch, target_batch):
    """SSE losses for P parameter vectors on S sequences at once -> (P, S).

    A second, einsum-based forward implementation: shares nothing with the
    package's sequential forward beyond the cell equations themselves.
    """
    P = thetas.shape[0]
    tensors = {}
    for name, shape, a, b in layout:
        tensors[name] = thetas[:, a:b].reshape((P,) + shape)
    S, T, _ = X_batch.shape
    current = np.broadcast_to(X_batch, (P, S, T, X_batch.shape[2]))
    num_layers = len(spec.hidden_layout)
    for li in range(num_layers):
        outs = []
        directions = ("fwd", "bwd") if spec.bidirectional else ("fwd",)
        for direction in directions:
            prefix = f"layer{li}.{direction}"
            W4 = np.concatenate([tensors[f"{prefix}.W_{g}"] for g in "ifzo"], axis=1)
            R4 = np.concatenate([tensors[f"{prefix}.R_{g}"] for g in "ifzo"], axis=1)
            b4 = np.concatenate([tensors[f"{prefix}.b_{g}"] for g in "ifzo"], axis=1)
            h = spec.hidden_layout[li]
            Xd = current[:, :, ::-1] if direction == "bwd" else current
            A = np.einsum("pij,pstj->psti", W4, Xd) + b4[:, None, None, :]
            h_t = np.zeros((P, S, h))
            c_t = np.zeros((P, S, h))
            H = np.zeros((P, S, T, h))
            if spec.peepholes:
                p_i = tensors[f"{prefix}.p_i"][:, None, :]
                p_f = tensors[f"{prefix}.p_f"][:, None, :]
                p_o = tensors[f"{prefix}.p_o"][:, None, :]
            for t in range(T):
                a = A[:, :, t] + np.einsum("pij,psj->psi", R4, h_t)
                if spec.peepholes:
                    i_t = 1.0 / (1.0 + np.exp(-(a[:, :, :h] + p_i * c_t)))
                    f_t = 1.0 / (1.0 + np.exp(-(a[:, :, h:2 * h] + p_f * c_t)))
                else:
                    i_t = 1.0 / (1.0 + np.exp(-a[:, :, :h]))
                    f_t = 1.0 / (1.0 + np.exp(-a[:, :, h:2 * h]))
                z_t = np.tanh(a[:, :, 2 * h:3 * h])
                c_t = f_t * c_t + i_t * z_t
                if spec.peepholes:
                    o_t = 1.0 / (1.0 + np.exp(-(a[:, :, 3 * h:] + p_o * c_t)))
                else:
                    o_t = 1.0 / (1.0 + np.exp(-a[:, :, 3 * h:]))
                h_t = o_t * np.tanh(c_t)
                H[:, :, t] = h_t
            outs.append(H[:, :, ::-1] if direction == "bwd" else H)
        current = np.concatenate(outs, axis=3)
    V = tensors["output.V"]
    b = tensors["output.b"]
    Y = 1.0 / (1.0 + np.exp(-(np.einsum("pkj,pstj->pstk", V, current)
                              + b[:, None, None, :])))
    return ((Y - target_batch) ** 2).sum(axis=(2, 3))


def finite_difference_gradients(model, sequences, step=1e-5, chunk=128):
    """Central finite differences for every parameter on S sequences.

    sequences: list of (X, targets) with a common length. Returns a
    (num_params, S) gradient matrix plus the parameter layout.
    """
    theta, layout = _flatten_params(model)
    X_batch = np.stack([X for X, _ in sequences])
    target_batch = np.stack([D for _, D in sequences])
    D = theta.size
    S = len(sequences)
    grad = np.zeros((D, S))
    for start in range(0, D, chunk):
        idx = np.arange(start, min(start + chunk, D))
        m = idx.size
        thetas = np.tile(theta, (2 * m, 1))
        thetas[np.arange(m), idx] += step
        thetas[m + np.arange(m), idx] -= step
        losses = _batched_model_loss(model.spec, layout, thetas, X_batch, target_batch)
        grad[idx] = (losses[:m] - losses[m:]) / (2.0 * step)
    return grad, layout


def bptt_vs_fd_max_rel_error(model, sequences, step=1e-5):
    """Max relative disagreement between BPTT and finite differences
    across every parameter of every sequence."""
    fd, layout = finite_difference_gradients(model, sequences, step=step)
    worst = 0.0
    for s, (X, targets) in enumerate(sequences):
        grads = rnn.bptt_gradients(model, X, targets)
        bptt_flat = np.concatenate([grads[name].ravel() for name, _, _, _ in layout])
        denom = np.maximum(np.maximum(np.abs(bptt_flat), np.abs(fd[:, s])), 1e-4)
        worst = max(worst, float(np.max(np.abs(bptt_flat - fd[:, s]) / denom)))
    return worst
