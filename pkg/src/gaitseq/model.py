"""Stacked bidirectional LSTM classifier with analytic backpropagation.

The network maps a T x 18 trajectory to one logit.  Each of the L layers runs
two independent LSTM cells over the sequence, one per time direction, and
emits the concatenation ``[h_fwd[t], h_bwd[t]]`` (T x 2h).  The classifier
head takes the two terminal hidden states, ``z = [h_fwd[T-1], h_bwd[0]]``,
through a two-layer fully connected network ``relu(W1 z + b1) -> W2 a + b2``.

Cell equations, with gate order [input, forget, candidate, output]::

    i = sigmoid(Wi x + Ui h + bi)      f = sigmoid(Wf x + Uf h + bf)
    g = tanh   (Wg x + Ug h + bg)      o = sigmoid(Wo x + Uo h + bo)
    c_t = f * c_prev + i * g           h_t = o * tanh(c_t)

All forward functions accept either a single sequence ``(T, features)`` or a
batch ``(T, B, features)``.  The forward pass records every activation needed
for exact gradients in a tape; :func:`model_backward` replays it, dropout
masks included, and accumulates in a fixed order so results are deterministic.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .data import DataError, Label

MODEL_MAGIC = b"GSEQ1"
MODEL_FORMAT_VERSION = 1


class NumericalDivergenceError(RuntimeError):
    """A forward pass or training step produced non-finite values."""


class ModelFileError(DataError):
    """A model file is corrupt, truncated, or incompatible."""


@dataclass(frozen=True)
class ModelArchitecture:
    """Layer count, hidden width, input width, and dropout rate."""

    num_layers: int
    hidden: int
    input_dim: int = 18
    dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def layer_input(self, layer_index: int) -> int:
        """Input width of a layer: raw features for layer 0, 2h above."""
        return self.input_dim if layer_index == 0 else 2 * self.hidden


@dataclass
class LstmDirectionParams:
    """One direction of one layer: input weights, recurrent weights, bias.

    Shapes are ``w_in (4h, i)``, ``w_rec (4h, h)``, ``bias (4h,)`` with the
    four gate blocks stacked in the fixed order [input, forget, candidate,
    output].
    """

    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray


@dataclass
class LayerParams:
    forward: LstmDirectionParams
    backward: LstmDirectionParams


@dataclass
class FcnParams:
    """Two-layer classifier head: (h, 2h) -> relu -> (1, h) -> logit."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ModelParams:
    """All trainable tensors, also used as the container for gradients."""

    layers: list[LayerParams]
    fcn: FcnParams

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray, bool]]:
        """Yield (name, array, is_bias) in canonical serialization order.

        Order: layers ascending, forward then backward direction, w_in,
        w_rec, bias within a direction; then fcn w1, b1, w2, b2.
        """
        for li, layer in enumerate(self.layers):
            for dname, direction in (("fwd", layer.forward), ("bwd", layer.backward)):
                yield f"layer{li}.{dname}.w_in", direction.w_in, False
                yield f"layer{li}.{dname}.w_rec", direction.w_rec, False
                yield f"layer{li}.{dname}.bias", direction.bias, True
        yield "fcn.w1", self.fcn.w1, False
        yield "fcn.b1", self.fcn.b1, True
        yield "fcn.w2", self.fcn.w2, False
        yield "fcn.b2", self.fcn.b2, True

    @property
    def dtype(self) -> np.dtype:
        return self.fcn.b2.dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            layers=[
                LayerParams(
                    forward=LstmDirectionParams(
                        layer.forward.w_in.astype(dtype),
                        layer.forward.w_rec.astype(dtype),
                        layer.forward.bias.astype(dtype),
                    ),
                    backward=LstmDirectionParams(
                        layer.backward.w_in.astype(dtype),
                        layer.backward.w_rec.astype(dtype),
                        layer.backward.bias.astype(dtype),
                    ),
                )
                for layer in self.layers
            ],
            fcn=FcnParams(
                self.fcn.w1.astype(dtype),
                self.fcn.b1.astype(dtype),
                self.fcn.w2.astype(dtype),
                self.fcn.b2.astype(dtype),
            ),
        )


def param_count(arch: ModelArchitecture) -> int:
    """Number of trainable scalars for an architecture.

    Per layer, both directions: 4h * (i + h) weights + 4h biases.
    Head: h * 2h + h, then h + 1.
    """
    h = arch.hidden
    total = 0
    for li in range(arch.num_layers):
        i = arch.layer_input(li)
        total += 2 * (4 * h * (i + h) + 4 * h)
    total += 2 * h * h + h  # first fc layer
    total += h + 1  # logit layer
    return total


def init_params(
    arch: ModelArchitecture, rng: np.random.Generator, dtype=np.float32
) -> ModelParams:
    """Draw every weight and bias i.i.d. from Uniform(-1/sqrt(h), +1/sqrt(h)).

    Draw order matches :meth:`ModelParams.named_arrays`, so a seed fully
    determines the parameter values.
    """
    bound = 1.0 / np.sqrt(arch.hidden)

    def draw(*shape: int) -> np.ndarray:
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    h = arch.hidden
    layers = []
    for li in range(arch.num_layers):
        i = arch.layer_input(li)
        layers.append(
            LayerParams(
                forward=LstmDirectionParams(draw(4 * h, i), draw(4 * h, h), draw(4 * h)),
                backward=LstmDirectionParams(draw(4 * h, i), draw(4 * h, h), draw(4 * h)),
            )
        )
    fcn = FcnParams(draw(h, 2 * h), draw(h), draw(1, h), draw(1))
    return ModelParams(layers=layers, fcn=fcn)


def zeros_like_params(params: ModelParams) -> ModelParams:
    zero = lambda a: np.zeros_like(a)
    return ModelParams(
        layers=[
            LayerParams(
                forward=LstmDirectionParams(
                    zero(l.forward.w_in), zero(l.forward.w_rec), zero(l.forward.bias)
                ),
                backward=LstmDirectionParams(
                    zero(l.backward.w_in), zero(l.backward.w_rec), zero(l.backward.bias)
                ),
            )
            for l in params.layers
        ],
        fcn=FcnParams(
            zero(params.fcn.w1), zero(params.fcn.b1), zero(params.fcn.w2), zero(params.fcn.b2)
        ),
    )


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, exact at 0."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def lstm_cell_forward(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    params: LstmDirectionParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step; inputs may carry a leading batch axis."""
    h = params.w_rec.shape[1]
    pre = x_t @ params.w_in.T + h_prev @ params.w_rec.T + params.bias
    gi = sigmoid(pre[..., 0 * h : 1 * h])
    gf = sigmoid(pre[..., 1 * h : 2 * h])
    gg = np.tanh(pre[..., 2 * h : 3 * h])
    go = sigmoid(pre[..., 3 * h : 4 * h])
    c_t = gf * c_prev + gi * gg
    h_t = go * np.tanh(c_t)
    return h_t, c_t


@dataclass
class DirectionTape:
    """Per-timestep activations of one direction, in processing order."""

    x: np.ndarray  # (T, B, i)
    gates: np.ndarray  # (T, B, 4h) post-activation, gate order [i, f, g, o]
    cell: np.ndarray  # (T, B, h)
    cell_tanh: np.ndarray
    hidden: np.ndarray  # (T, B, h)


@dataclass
class LayerTape:
    forward: DirectionTape
    backward: DirectionTape
    dropout_mask: np.ndarray | None  # (T, B, 2h), pre-scaled, or None


@dataclass
class ModelTape:
    """Everything the backward pass needs, including the parameters used."""

    params: ModelParams
    arch: ModelArchitecture
    layers: list[LayerTape]
    features: np.ndarray  # (B, 2h) terminal-state concat fed to the head
    fc1_pre: np.ndarray  # (B, h) before relu
    fc1_act: np.ndarray  # (B, h) after relu
    squeezed: bool  # True when the caller passed a single sequence


def _run_direction(x: np.ndarray, p: LstmDirectionParams) -> DirectionTape:
    """Run the forward recursion over x (T, B, i) with zero initial state."""
    T, B, _ = x.shape
    h = p.w_rec.shape[1]
    dtype = x.dtype
    gates = np.empty((T, B, 4 * h), dtype)
    cell = np.empty((T, B, h), dtype)
    cell_tanh = np.empty((T, B, h), dtype)
    hidden = np.empty((T, B, h), dtype)

    # Input projections for all timesteps in one matmul.
    pre_x = (x.reshape(T * B, -1) @ p.w_in.T).reshape(T, B, 4 * h) + p.bias
    w_rec_t = np.ascontiguousarray(p.w_rec.T)
    # One tanh evaluates all four gates: sigmoid(v) = 0.5 * (1 + tanh(v / 2)).
    col_scale = np.full(4 * h, 0.5, dtype)
    col_scale[2 * h : 3 * h] = 1.0

    h_prev = np.zeros((B, h), dtype)
    c_prev = np.zeros((B, h), dtype)
    for t in range(T):
        g = gates[t]
        np.matmul(h_prev, w_rec_t, out=g)
        g += pre_x[t]
        g *= col_scale
        np.tanh(g, out=g)
        g_sig = g[:, : 2 * h]
        g_sig += 1.0
        g_sig *= 0.5
        g_out = g[:, 3 * h :]
        g_out += 1.0
        g_out *= 0.5
        c_t = cell[t]
        np.multiply(g[:, :h], g[:, 2 * h : 3 * h], out=c_t)
        c_t += g[:, h : 2 * h] * c_prev
        tc = cell_tanh[t]
        np.tanh(c_t, out=tc)
        h_t = hidden[t]
        np.multiply(g_out, tc, out=h_t)
        h_prev, c_prev = h_t, c_t
    return DirectionTape(x, gates, cell, cell_tanh, hidden)


def _promote(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 2:
        return x[:, None, :], True
    if x.ndim == 3:
        return x, False
    raise ValueError(f"expected (T, features) or (T, B, features), got shape {x.shape}")


def blstm_layer_forward(
    x: np.ndarray,
    layer: LayerParams,
    dropout_mask: np.ndarray | None = None,
    mode: str = "eval",
) -> tuple[np.ndarray, LayerTape]:
    """Run one bidirectional layer.

    Row t of the output is ``[h_fwd[t], h_bwd[t]]`` where the backward half
    comes from running the backward-direction cell from the last frame down
    to the first.  Both directions start from zero states.  In train mode a
    pre-scaled dropout mask is multiplied into the output.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x)
    x, squeezed = _promote(x)
    if x.shape[2] != layer.forward.w_in.shape[1]:
        raise ValueError(
            f"layer expects input width {layer.forward.w_in.shape[1]}, got {x.shape[2]}"
        )
    fwd = _run_direction(x, layer.forward)
    bwd = _run_direction(x[::-1], layer.backward)
    out = np.concatenate([fwd.hidden, bwd.hidden[::-1]], axis=2)
    if mode == "train" and dropout_mask is not None:
        out = out * dropout_mask
        mask = dropout_mask
    else:
        mask = None
    tape = LayerTape(forward=fwd, backward=bwd, dropout_mask=mask)
    if squeezed:
        out = out[:, 0, :]
    return out, tape


def model_forward(
    x: np.ndarray,
    params: ModelParams,
    arch: ModelArchitecture,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[float | np.ndarray, ModelTape]:
    """Full forward pass; returns the logit(s) and the tape for BPTT.

    A 2-D input (one sequence) yields a scalar logit; a 3-D batch yields a
    (B,) array.  Train mode with a positive dropout rate requires `rng` to
    draw the per-layer masks.

    Raises:
        NumericalDivergenceError: a layer output or the logit went non-finite,
            reported with the layer and first offending timestep.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=params.dtype)
    x, squeezed = _promote(x)
    T, B, width = x.shape
    if width != arch.input_dim:
        raise ValueError(f"expected input width {arch.input_dim}, got {width}")
    if not np.isfinite(x).all():
        raise NumericalDivergenceError("non-finite values in model input")
    use_dropout = mode == "train" and arch.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("train mode with dropout requires an rng")

    h = arch.hidden
    dtype = params.dtype
    layer_tapes: list[LayerTape] = []
    cur = x
    for li, layer in enumerate(params.layers):
        mask = None
        if use_dropout:
            # Inverted dropout: surviving units pre-scaled by 1/(1-rate),
            # so eval mode needs no rescaling.
            mask = (
                (rng.random((T, B, 2 * h)) >= arch.dropout) / (1.0 - arch.dropout)
            ).astype(dtype)
        cur, tape = blstm_layer_forward(cur, layer, mask, mode)
        layer_tapes.append(tape)
        if not np.isfinite(cur).all():
            bad_t = int(np.nonzero(~np.isfinite(cur).all(axis=(1, 2)))[0][0])
            raise NumericalDivergenceError(
                f"numerical divergence in layer {li} at timestep {bad_t}"
            )

    # Head input: forward terminal state at t = T-1, backward terminal at t = 0.
    z = np.concatenate([cur[T - 1, :, :h], cur[0, :, h:]], axis=1)
    fcn = params.fcn
    fc1_pre = z @ fcn.w1.T + fcn.b1
    fc1_act = np.maximum(fc1_pre, 0)
    logits = (fc1_act @ fcn.w2.T + fcn.b2)[:, 0]
    if not np.isfinite(logits).all():
        raise NumericalDivergenceError("numerical divergence in classifier head")

    tape = ModelTape(
        params=params,
        arch=arch,
        layers=layer_tapes,
        features=z,
        fc1_pre=fc1_pre,
        fc1_act=fc1_act,
        squeezed=squeezed,
    )
    if squeezed:
        return float(logits[0]), tape
    return logits, tape


_PROB_LO = np.nextafter(0.0, 1.0)
_PROB_HI = np.nextafter(1.0, 0.0)


def predict(logit: float) -> tuple[float, Label]:
    """Probability and decision for one logit.

    The probability is the sigmoid clamped into the open interval (0, 1);
    the decision is LAME iff the probability is >= 0.5, i.e. iff the logit
    is >= 0 (boundary inclusive).
    """
    if not np.isfinite(logit):
        raise ValueError(f"logit must be finite, got {logit}")
    prob = float(min(max(sigmoid(float(logit)), _PROB_LO), _PROB_HI))
    label = Label.LAME if logit >= 0 else Label.NORMAL
    return prob, label


def _direction_backward(
    tape: DirectionTape,
    p: LstmDirectionParams,
    grads: LstmDirectionParams,
    dh_up: np.ndarray,
) -> np.ndarray:
    """BPTT through one direction; returns dLoss/dx in processing order."""
    T, B, _ = tape.x.shape
    h = p.w_rec.shape[1]
    dtype = tape.x.dtype
    dpre_all = np.empty((T, B, 4 * h), dtype)
    dh_next = np.zeros((B, h), dtype)
    dc_next = np.zeros((B, h), dtype)
    zeros_bh = np.zeros((B, h), dtype)
    for t in range(T - 1, -1, -1):
        g = tape.gates[t]
        gi, gf = g[:, :h], g[:, h : 2 * h]
        gg, go = g[:, 2 * h : 3 * h], g[:, 3 * h :]
        tc = tape.cell_tanh[t]
        dh = dh_up[t] + dh_next
        dc = dc_next + dh * go * (1.0 - tc * tc)
        c_prev = tape.cell[t - 1] if t > 0 else zeros_bh
        dc_next = dc * gf
        # Raw gate gradients, then through each gate nonlinearity to the
        # pre-activations: s' = s (1 - s) for the sigmoids, 1 - g^2 for tanh.
        dpre = dpre_all[t]
        np.multiply(dc, gg, out=dpre[:, :h])
        np.multiply(dc, c_prev, out=dpre[:, h : 2 * h])
        np.multiply(dc, gi, out=dpre[:, 2 * h : 3 * h])
        np.multiply(dh, tc, out=dpre[:, 3 * h :])
        deriv = g * g
        dsig = deriv[:, : 2 * h]
        np.subtract(g[:, : 2 * h], dsig, out=dsig)
        dout_cols = deriv[:, 3 * h :]
        np.subtract(go, dout_cols, out=dout_cols)
        dtanh = deriv[:, 2 * h : 3 * h]
        np.subtract(1.0, dtanh, out=dtanh)
        dpre *= deriv
        dh_next = dpre @ p.w_rec
    # Weight gradients batched over all timesteps in single matmuls; the
    # fixed contraction order keeps results bit-reproducible.
    flat = dpre_all.reshape(T * B, 4 * h)
    grads.w_in += flat.T @ tape.x.reshape(T * B, -1)
    h_prev_all = np.concatenate([zeros_bh[None], tape.hidden[:-1]], axis=0)
    grads.w_rec += flat.T @ h_prev_all.reshape(T * B, h)
    grads.bias += flat.sum(axis=0)
    return (flat @ p.w_in).reshape(tape.x.shape)


def model_backward(tape: ModelTape, dlogit: float | np.ndarray) -> ModelParams:
    """Exact gradients of the loss w.r.t. every parameter.

    `dlogit` is dLoss/dlogit: a scalar when the forward pass saw a single
    sequence, else a (B,) array.  Batch means are the caller's concern
    (pre-scale `dlogit` by 1/B).
    """
    params = tape.params
    arch = tape.arch
    h = arch.hidden
    B = tape.features.shape[0]
    dtype = params.dtype
    up = np.asarray(dlogit, dtype=dtype).reshape(-1)
    if tape.squeezed and up.size != 1:
        raise ValueError("tape came from a single sequence; dlogit must be scalar")
    if up.size != B:
        raise ValueError(f"dlogit has {up.size} entries for a batch of {B}")

    grads = zeros_like_params(params)
    fcn = params.fcn

    # Classifier head.
    grads.fcn.w2 += (up @ tape.fc1_act)[None, :]
    grads.fcn.b2 += up.sum(keepdims=True)
    da = np.outer(up, fcn.w2[0])
    dpre1 = da * (tape.fc1_pre > 0)
    grads.fcn.w1 += dpre1.T @ tape.features
    grads.fcn.b1 += dpre1.sum(axis=0)
    dz = dpre1 @ fcn.w1

    # Scatter the head gradient back onto the terminal rows of the top layer.
    top_T = tape.layers[-1].forward.x.shape[0]
    d_out = np.zeros((top_T, B, 2 * h), dtype)
    d_out[top_T - 1, :, :h] += dz[:, :h]
    d_out[0, :, h:] += dz[:, h:]

    for li in range(arch.num_layers - 1, -1, -1):
        ltape = tape.layers[li]
        lparams = params.layers[li]
        lgrads = grads.layers[li]
        if ltape.dropout_mask is not None:
            d_out = d_out * ltape.dropout_mask
        dx_f = _direction_backward(ltape.forward, lparams.forward, lgrads.forward, d_out[:, :, :h])
        # The backward direction consumed the input reversed; flip the
        # upstream gradient into processing order and the result back.
        dx_b = _direction_backward(
            ltape.backward, lparams.backward, lgrads.backward, d_out[::-1, :, h:]
        )[::-1]
        d_out = dx_f + dx_b
    return grads


def params_to_vector(params: ModelParams) -> np.ndarray:
    """Flatten all parameters in canonical order."""
    return np.concatenate([a.ravel() for _, a, _ in params.named_arrays()])


def vector_to_params(vec: np.ndarray, arch: ModelArchitecture, dtype=np.float32) -> ModelParams:
    """Rebuild a parameter container from a flat canonical-order vector."""
    expected = param_count(arch)
    if vec.size != expected:
        raise ValueError(f"expected {expected} scalars for {arch}, got {vec.size}")
    h = arch.hidden
    pos = 0

    def take(*shape: int) -> np.ndarray:
        nonlocal pos
        n = int(np.prod(shape))
        out = vec[pos : pos + n].reshape(shape).astype(dtype)
        pos += n
        return out

    layers = []
    for li in range(arch.num_layers):
        i = arch.layer_input(li)
        layers.append(
            LayerParams(
                forward=LstmDirectionParams(take(4 * h, i), take(4 * h, h), take(4 * h)),
                backward=LstmDirectionParams(take(4 * h, i), take(4 * h, h), take(4 * h)),
            )
        )
    fcn = FcnParams(take(h, 2 * h), take(h), take(1, h), take(1))
    return ModelParams(layers=layers, fcn=fcn)


def save_model(
    params: ModelParams,
    arch: ModelArchitecture,
    path: str | Path,
    metadata: dict | None = None,
) -> None:
    """Write a model file: magic, JSON header, float32 blob, trailing CRC-32.

    The blob stores the flat canonical-order parameters as little-endian
    32-bit floats; the CRC covers every preceding byte.
    """
    header = {
        "format": MODEL_FORMAT_VERSION,
        "arch": {
            "num_layers": arch.num_layers,
            "hidden": arch.hidden,
            "input_dim": arch.input_dim,
            "dropout": arch.dropout,
        },
        "dtype": "float32",
        "param_count": param_count(arch),
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = params_to_vector(params).astype("<f4").tobytes()
    body = MODEL_MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + blob
    payload = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    Path(path).write_bytes(payload)


def load_model(
    path: str | Path, expected_arch: ModelArchitecture | None = None
) -> tuple[ModelParams, ModelArchitecture, dict]:
    """Read a model file back; returns (params, arch, metadata).

    Raises:
        ModelFileError: bad magic, unsupported version, truncated blob,
            checksum failure, or an architecture that does not match
            `expected_arch`.
    """
    raw = Path(path).read_bytes()
    if len(raw) < len(MODEL_MAGIC) + 8:
        raise ModelFileError(f"model file too short: {path}")
    if raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFileError(f"not a model file (bad magic): {path}")
    body, crc_bytes = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc_bytes)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise ModelFileError(f"checksum mismatch (corrupt or truncated file): {path}")
    offset = len(MODEL_MAGIC)
    (header_len,) = struct.unpack_from("<I", body, offset)
    offset += 4
    try:
        header = json.loads(body[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"unreadable model header: {path}") from exc
    offset += header_len
    if header.get("format") != MODEL_FORMAT_VERSION:
        raise ModelFileError(
            f"unsupported model format version {header.get('format')!r}: {path}"
        )
    arch_info = header["arch"]
    arch = ModelArchitecture(
        num_layers=arch_info["num_layers"],
        hidden=arch_info["hidden"],
        input_dim=arch_info["input_dim"],
        dropout=arch_info.get("dropout", 0.0),
    )
    if expected_arch is not None and (
        arch.num_layers != expected_arch.num_layers
        or arch.hidden != expected_arch.hidden
        or arch.input_dim != expected_arch.input_dim
    ):
        raise ModelFileError(
            f"architecture mismatch: file holds {arch.num_layers}x{arch.hidden} "
            f"(input {arch.input_dim}), requested {expected_arch.num_layers}x"
            f"{expected_arch.hidden} (input {expected_arch.input_dim})"
        )
    n = param_count(arch)
    blob = body[offset:]
    if len(blob) != 4 * n:
        raise ModelFileError(
            f"parameter blob has {len(blob)} bytes, expected {4 * n}: {path}"
        )
    vec = np.frombuffer(blob, dtype="<f4").astype(np.float32)
    return vector_to_params(vec, arch, np.float32), arch, header.get("metadata", {})
