"""The chord-and-note GRU model: embeddings, 3-layer GRU, Z re-injection.

Data flow per input token (x index 0..97, z repetition count 0..79):

    x_emb(256) ++ z_emb(32) -> variational dropout 0.1
    -> GRU layer 1 -> dropout 0.3 (fresh mask per step)
    -> GRU layer 2 -> dropout 0.3 (fresh mask per step)
    -> GRU layer 3
    -> ++ z_emb -> variational dropout 0.3 -> affine -> 98 logits

"Variational" sites sample one mask per sequence and reuse it at every
time-step; the inter-layer sites resample per step. In eval mode all
dropout is the identity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .vocab import VOCAB_LAYOUT_VERSION, VOCAB_SIZE, Z_SIZE

EMBED_DROPOUT = 0.1
INTER_DROPOUT = 0.3
OUT_DROPOUT = 0.3

_CKPT_MAGIC = b"TNETCKPT"
_CKPT_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """Non-finite values appeared in the hidden state or loss."""


@dataclass(frozen=True)
class ModelArch:
    x_vocab: int = VOCAB_SIZE
    z_vocab: int = Z_SIZE
    x_emb_dim: int = 256
    z_emb_dim: int = 32
    hidden: int = 256
    layers: int = 3

    @property
    def embed_width(self) -> int:
        return self.x_emb_dim + self.z_emb_dim

    @property
    def out_width(self) -> int:
        return self.hidden + self.z_emb_dim

    def layer_input(self, layer: int) -> int:
        return self.embed_width if layer == 0 else self.hidden


TOY_ARCH = ModelArch(x_emb_dim=10, z_emb_dim=4, hidden=8)


@dataclass
class ModelParams:
    arch: ModelArch
    tensors: dict  # name -> Tensor
    streams: str = "CSBAT"  # stream subset the checkpoint was trained on

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def named(self):
        return sorted(self.tensors.items())

    def trainable(self):
        return [t for _, t in self.named()]

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


def tensor_shapes(arch: ModelArch) -> dict:
    shapes = {
        "x_embedding": (arch.x_vocab, arch.x_emb_dim),
        "z_embedding": (arch.z_vocab, arch.z_emb_dim),
        "out.w": (arch.out_width, arch.x_vocab),
        "out.b": (arch.x_vocab,),
    }
    for layer in range(arch.layers):
        width = arch.layer_input(layer)
        for gate in ("u", "r", "c"):
            shapes[f"gru{layer + 1}.w_{gate}"] = (width, arch.hidden)
            shapes[f"gru{layer + 1}.u_{gate}"] = (arch.hidden, arch.hidden)
            shapes[f"gru{layer + 1}.b_{gate}"] = (arch.hidden,)
    return shapes


def param_count(arch: ModelArch) -> int:
    return sum(int(np.prod(s)) for s in tensor_shapes(arch).values())


def init_params(seed: int, arch: ModelArch = ModelArch(), streams: str = "CSBAT") -> ModelParams:
    """Deterministic init: weights uniform(-a, a) with a = 1/sqrt(fan-in),
    biases zero, embedding rows normal(0, 0.1)."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in sorted(tensor_shapes(arch).items()):
        if name.endswith("embedding"):
            data = rng.normal(0.0, 0.1, size=shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            a = 1.0 / np.sqrt(shape[0])
            data = rng.uniform(-a, a, size=shape)
        tensors[name] = Tensor(data.astype(np.float32), requires_grad=True, name=name)
    return ModelParams(arch=arch, tensors=tensors, streams=streams)


# ---------------------------------------------------------------------------
# Dropout plans
# ---------------------------------------------------------------------------

@dataclass
class DropoutPlan:
    train: bool
    embed_mask: np.ndarray | None = None        # (embed_width,), variational
    inter_masks: tuple = ()                     # per layer gap: (T, hidden)
    out_mask: np.ndarray | None = None          # (out_width,), variational


EVAL_PLAN = DropoutPlan(train=False)


def make_dropout_plan(rng: np.random.Generator, n_steps: int, arch: ModelArch) -> DropoutPlan:
    def bernoulli(shape, rate):
        return (rng.random(shape) >= rate).astype(np.float32)

    return DropoutPlan(
        train=True,
        embed_mask=bernoulli((arch.embed_width,), EMBED_DROPOUT),
        inter_masks=tuple(
            bernoulli((n_steps, arch.hidden), INTER_DROPOUT)
            for _ in range(arch.layers - 1)
        ),
        out_mask=bernoulli((arch.out_width,), OUT_DROPOUT),
    )


# ---------------------------------------------------------------------------
# Fused GRU layer op (kernels do the time loop; this wires it to the tape)
# ---------------------------------------------------------------------------

def _layer_tensors(params: ModelParams, layer: int):
    p = params.tensors
    tag = f"gru{layer + 1}"
    return tuple(p[f"{tag}.{kind}_{gate}"] for kind in ("w", "u", "b") for gate in ("u", "r", "c"))


def gru_layer(params: ModelParams, layer: int, inputs: Tensor, h0: np.ndarray) -> Tensor:
    w_u, w_r, w_c, u_u, u_r, u_c, b_u, b_r, b_c = _layer_tensors(params, layer)
    hidden = params.arch.hidden
    wx = np.concatenate([w_u.data, w_r.data, w_c.data], axis=1)
    b = np.concatenate([b_u.data, b_r.data, b_c.data])
    w_ur = np.ascontiguousarray(np.concatenate([u_u.data, u_r.data], axis=1))
    w_cand = np.ascontiguousarray(u_c.data)
    xp = inputs.data @ wx + b
    h_out, u_all, r_all, c_all, rh_all = kernels.gru_forward(xp, h0, w_ur, w_cand)

    def back(grad):
        d_xp, _d_h0, d_rh = kernels.gru_backward(
            np.ascontiguousarray(grad),
            h_out,
            h0,
            u_all,
            r_all,
            c_all,
            np.ascontiguousarray(w_ur.T),
            np.ascontiguousarray(w_cand.T),
        )
        h_prev = np.vstack([h0[None, :], h_out[:-1]])
        d_ur = h_prev.T @ d_xp[:, : 2 * hidden]
        d_wx = inputs.data.T @ d_xp
        d_b = d_xp.sum(axis=0)
        return (
            d_xp @ wx.T,
            d_wx[:, :hidden],
            d_wx[:, hidden : 2 * hidden],
            d_wx[:, 2 * hidden :],
            d_ur[:, :hidden],
            d_ur[:, hidden:],
            rh_all.T @ d_rh,
            d_b[:hidden],
            d_b[hidden : 2 * hidden],
            d_b[2 * hidden :],
        )

    parents = (inputs, w_u, w_r, w_c, u_u, u_r, u_c, b_u, b_r, b_c)
    return Tensor.from_op(h_out, parents, back)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _sequence_logits(params: ModelParams, x_in, z_in, plan: DropoutPlan, h0=None):
    """Tape-recorded logits for a whole input sequence. Returns (logits
    Tensor of shape (T, 98), final hidden states (layers, hidden))."""
    arch = params.arch
    x_in = np.asarray(x_in)
    z_in = np.asarray(z_in)
    if h0 is None:
        h0 = np.zeros((arch.layers, arch.hidden), dtype=params["x_embedding"].dtype)
    if not np.isfinite(h0).all():
        raise DivergenceError("non-finite hidden state")
    xe = ad.embedding_lookup(params["x_embedding"], x_in)
    ze = ad.embedding_lookup(params["z_embedding"], z_in)
    h = ad.concat(xe, ze)
    if plan.train:
        h = ad.dropout_apply(h, plan.embed_mask, EMBED_DROPOUT)
    finals = []
    for layer in range(arch.layers):
        h = gru_layer(params, layer, h, h0[layer])
        finals.append(h.data[-1])
        if plan.train and layer < arch.layers - 1:
            h = ad.dropout_apply(h, plan.inter_masks[layer], INTER_DROPOUT)
    out = ad.concat(h, ze)
    if plan.train:
        out = ad.dropout_apply(out, plan.out_mask, OUT_DROPOUT)
    logits = ad.add(ad.matmul(out, params["out.w"]), params["out.b"])
    return logits, np.stack(finals)


def sequence_nll(params: ModelParams, seq, plan: DropoutPlan = EVAL_PLAN):
    """Teacher-forced mean NLL over a sequence (position 0 is input-only).

    `seq` is an EncodedSequence or an (x, z) pair of index arrays. Returns
    (scalar loss Tensor, per-position losses for positions 1..L-1).
    """
    x, z = (seq.x, seq.z) if hasattr(seq, "x") else seq
    if len(x) < 2:
        raise ValueError(f"sequence of length {len(x)} has nothing to predict")
    logits, _ = _sequence_logits(params, x[:-1], z[:-1], plan)
    loss, per_position = ad.softmax_cross_entropy_each(logits, np.asarray(x[1:]))
    if not np.isfinite(loss.data):
        raise DivergenceError("non-finite loss")
    return loss, per_position


def forward_sequence(params: ModelParams, x_in, z_in) -> np.ndarray:
    """Eval-mode logits (T, 98) without recording a graph."""
    logits, _ = _sequence_logits(params, x_in, z_in, EVAL_PLAN)
    return logits.data


def step(params: ModelParams, x_index: int, z_index: int, hidden: np.ndarray,
         plan: DropoutPlan = EVAL_PLAN, t: int = 0):
    """One time-step. `hidden` is (layers, hidden); returns (logits, hidden')."""
    arch = params.arch
    if not np.isfinite(hidden).all():
        raise DivergenceError("non-finite hidden state")
    dtype = params["x_embedding"].dtype
    xe = params["x_embedding"].data[x_index]
    ze = params["z_embedding"].data[z_index]
    h = np.concatenate([xe, ze])
    if plan.train:
        h = h * plan.embed_mask / (1.0 - EMBED_DROPOUT)
    new_hidden = np.empty_like(hidden)
    for layer in range(arch.layers):
        w_u, w_r, w_c, u_u, u_r, u_c, b_u, b_r, b_c = (
            p.data for p in _layer_tensors(params, layer)
        )
        wx = np.concatenate([w_u, w_r, w_c], axis=1)
        b = np.concatenate([b_u, b_r, b_c])
        w_ur = np.ascontiguousarray(np.concatenate([u_u, u_r], axis=1))
        xp = (h @ wx + b)[None, :].astype(dtype)
        h_out, *_ = kernels.gru_forward(xp, hidden[layer], w_ur, np.ascontiguousarray(u_c))
        h = h_out[0]
        new_hidden[layer] = h
        if plan.train and layer < arch.layers - 1:
            h = h * plan.inter_masks[layer][t] / (1.0 - INTER_DROPOUT)
    out = np.concatenate([h, ze])
    if plan.train:
        out = out * plan.out_mask / (1.0 - OUT_DROPOUT)
    logits = out @ params["out.w"].data + params["out.b"].data
    return logits, new_hidden


def init_hidden(params: ModelParams) -> np.ndarray:
    return np.zeros((params.arch.layers, params.arch.hidden), dtype=np.float32)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    entries = []
    offset = 0
    payload = []
    for name, tensor in params.named():
        data = np.ascontiguousarray(tensor.data, dtype="<f4")
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        payload.append(data.tobytes())
        offset += data.nbytes
    manifest = json.dumps(
        {
            "arch": vars(params.arch),
            "streams": params.streams,
            "tensors": entries,
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<III", _CKPT_FORMAT_VERSION, VOCAB_LAYOUT_VERSION, len(manifest)))
        fh.write(manifest)
        for chunk in payload:
            fh.write(chunk)


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    head = len(_CKPT_MAGIC)
    fmt, vocab_version, manifest_len = struct.unpack_from("<III", blob, head)
    if fmt != _CKPT_FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {fmt}, expected {_CKPT_FORMAT_VERSION}")
    if vocab_version != VOCAB_LAYOUT_VERSION:
        raise CheckpointError(
            f"{path}: vocabulary layout version {vocab_version}, expected {VOCAB_LAYOUT_VERSION}"
        )
    head += 12
    manifest = json.loads(blob[head : head + manifest_len].decode())
    head += manifest_len
    arch = ModelArch(**manifest["arch"])
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape))
        start = head + entry["offset"]
        raw = blob[start : start + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        data = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        tensors[entry["name"]] = Tensor(data, requires_grad=True, name=entry["name"])
    expected = set(tensor_shapes(arch))
    if set(tensors) != expected:
        raise CheckpointError(f"{path}: tensor set mismatch")
    return ModelParams(arch=arch, tensors=tensors, streams=manifest["streams"])
