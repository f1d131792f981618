"""Attention decoder: alignment scoring, glimpses, LSTM target generation, decoding."""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass

import numpy as np

from .adcore import ops
from .adcore.tensor import ShapeError, Tensor, no_grad
from .encoder import FeatureSequence, lstm_params

log = logging.getLogger(__name__)


class Alphabet:
    """Caseless character classes plus a trailing EOS class."""

    def __init__(self, chars: str = string.ascii_lowercase + string.digits):
        if len(set(chars)) != len(chars):
            raise ValueError("alphabet characters must be unique")
        self.chars = chars
        self.eos = len(chars)
        self._index = {ch: i for i, ch in enumerate(chars)}

    @property
    def size(self) -> int:
        return len(self.chars) + 1

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and other.chars == self.chars

    def __contains__(self, text: str) -> bool:
        return all(ch in self._index for ch in text.lower())

    def encode(self, text: str) -> list[int]:
        try:
            return [self._index[ch] for ch in text.lower()]
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in alphabet") from None

    def decode(self, ids) -> str:
        return "".join(self.chars[i] for i in ids if i != self.eos)


@dataclass
class AttnConfig:
    state_size: int = 256   # decoder LSTM memory blocks
    attn_size: int = 256    # dimension of v
    max_len: int = 32


@dataclass
class StepTrace:
    alpha: Tensor    # (..., T)
    glimpse: Tensor  # (..., D)
    logits: Tensor   # (..., K)


class AttnParams(dict):
    """Named tensors: att.W, att.V, att.b, att.v, dec.{w_x,w_h,b}, gen.W, gen.b."""

    @property
    def num_classes(self) -> int:
        return self["gen.W"].shape[0]

    @property
    def state_size(self) -> int:
        return self["dec.w_h"].shape[1]

    def lstm(self) -> dict[str, Tensor]:
        return {"w_x": self["dec.w_x"], "w_h": self["dec.w_h"], "b": self["dec.b"]}


def build_attn(feature_dim: int, num_classes: int, config: AttnConfig | None = None,
               rng_seed: int = 1) -> AttnParams:
    cfg = config or AttnConfig()
    rng = np.random.default_rng(rng_seed)
    s, a, k, d = cfg.state_size, cfg.attn_size, num_classes, feature_dim

    def glorot(shape):
        lim = np.sqrt(6.0 / (shape[0] + shape[-1]))
        return Tensor(rng.uniform(-lim, lim, size=shape), requires_grad=True)

    p = AttnParams()
    p["att.W"] = glorot((a, s))
    p["att.V"] = glorot((a, d))
    p["att.b"] = Tensor(np.zeros(a), requires_grad=True)
    p["att.v"] = glorot((a, 1))
    for key, val in lstm_params(rng, k + d, s).items():
        p[f"dec.{key}"] = val
    p["gen.W"] = glorot((k, s + d))
    p["gen.b"] = Tensor(np.zeros(k), requires_grad=True)
    for key, val in p.items():
        val.name = key
    return p


def _features(H) -> Tensor:
    return H.vectors if isinstance(H, FeatureSequence) else H


def project_features(H: Tensor, params: AttnParams) -> Tensor:
    """V h_j + b for every j; independent of the decoding step."""
    return ops.affine(H, params["att.V"], params["att.b"])


def attend(s_prev: Tensor, H, params: AttnParams, projected: Tensor | None = None):
    """Alignment weights over the T features and the glimpse they induce.

    ``s_prev`` is (S,) or (N, S); ``H`` is (T, D) or (N, T, D).
    """
    H = _features(H)
    if H.shape[-2] == 0:
        raise ShapeError("attend: empty feature sequence")
    if projected is None:
        projected = project_features(H, params)
    ws = ops.matmul_vec(s_prev, params["att.W"])             # (..., A)
    pre = ops.tanh(projected + ops.reshape(ws, ws.shape[:-1] + (1, ws.shape[-1])))
    e = ops.reshape(ops.matmul(pre, params["att.v"]), pre.shape[:-1])   # (..., T)
    alpha = ops.softmax(e, axis=-1)
    a_row = ops.reshape(alpha, alpha.shape[:-1] + (1, alpha.shape[-1]))
    g = ops.matmul(a_row, H)
    g = ops.reshape(g, g.shape[:-2] + (g.shape[-1],))
    return alpha, g


def _one_hot(ids, k: int) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    return Tensor(np.eye(k)[ids])


def decode_step(y_prev, g: Tensor, s_prev: tuple[Tensor, Tensor], params: AttnParams):
    """Advance the decoder one step.

    ``s_prev`` is the LSTM (h, c) pair.  Returns (logits, (h, c)).
    """
    k = params.num_classes
    y = np.asarray(y_prev, dtype=np.int64)
    if np.any(y < 0) or np.any(y >= k):
        raise ValueError(f"previous class out of range [0, {k})")
    x = ops.concat([_one_hot(y, k), g], axis=-1)
    h, c = ops.lstm_cell(x, s_prev[0], s_prev[1], params.lstm())
    logits = ops.affine(ops.concat([h, g], axis=-1), params["gen.W"], params["gen.b"])
    return logits, (h, c)


def zero_state(params: AttnParams, lead: tuple[int, ...] = ()) -> tuple[Tensor, Tensor]:
    s = params.state_size
    return Tensor(np.zeros(lead + (s,))), Tensor(np.zeros(lead + (s,)))


def pad_targets(targets, eos: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length EOS-terminated id sequences into (N, M) plus a 0/1 mask."""
    m = max(len(t) for t in targets)
    ids = np.full((len(targets), m), eos, dtype=np.int64)
    mask = np.zeros((len(targets), m))
    for i, t in enumerate(targets):
        ids[i, : len(t)] = t
        mask[i, : len(t)] = 1.0
    return ids, mask


def _check_target(t, eos):
    if len(t) == 0 or t[-1] != eos:
        raise ValueError("target must be non-empty and end with EOS")
    if eos in list(t[:-1]):
        raise ValueError("EOS appears before the final position of the target")


def attention_loss(H, target, params: AttnParams, eos: int | None = None):
    """Teacher-forced negative log-likelihood of the target (EOS appended).

    For a single (T, D) sequence ``target`` is one id list and the loss is a
    scalar.  For an (N, T, D) batch ``target`` is a list of N id lists and
    the loss has shape (N,).  Returns (loss, traces).
    """
    Hv = _features(H)
    eos = params.num_classes - 1 if eos is None else eos
    single = Hv.ndim == 2
    targets = [target] if single else list(target)
    if single:
        Hv = ops.reshape(Hv, (1,) + Hv.shape)
    if len(targets) != Hv.shape[0]:
        raise ShapeError(f"{len(targets)} targets for a batch of {Hv.shape[0]}")
    for t in targets:
        _check_target(t, eos)
    ids, mask = pad_targets(targets, eos)
    n, m = ids.shape
    projected = project_features(Hv, params)
    state = zero_state(params, (n,))
    y_prev = np.full(n, eos, dtype=np.int64)
    traces = []
    total = None
    for t in range(m):
        alpha, g = attend(state[0], Hv, params, projected)
        logits, state = decode_step(y_prev, g, state, params)
        step_loss = ops.cross_entropy(logits, ids[:, t])
        if not mask[:, t].all():
            step_loss = step_loss * Tensor(mask[:, t])
        total = step_loss if total is None else total + step_loss
        traces.append(StepTrace(alpha, g, logits))
        y_prev = ids[:, t]
    if single:
        total = ops.reshape(total, ())
        traces = [StepTrace(ops.reshape(tr.alpha, tr.alpha.shape[1:]),
                            ops.reshape(tr.glimpse, tr.glimpse.shape[1:]),
                            ops.reshape(tr.logits, tr.logits.shape[1:])) for tr in traces]
    return total, traces


def greedy_decode(H, params: AttnParams, max_len: int = 32, return_alphas: bool = False):
    """Argmax decoding until EOS or ``max_len`` characters.

    Returns the id list (EOS excluded) for a single sequence or a list of id
    lists for a batch; with ``return_alphas`` also the per-step alpha arrays
    (one (N, T) array per emitted step).
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    Hv = _features(H)
    eos = params.num_classes - 1
    single = Hv.ndim == 2
    with no_grad():
        if single:
            Hv = ops.reshape(Hv, (1,) + Hv.shape)
        n = Hv.shape[0]
        projected = project_features(Hv, params)
        state = zero_state(params, (n,))
        y_prev = np.full(n, eos, dtype=np.int64)
        done = np.zeros(n, dtype=bool)
        out = [[] for _ in range(n)]
        alphas = []
        for _ in range(max_len):
            alpha, g = attend(state[0], Hv, params, projected)
            logits, state = decode_step(y_prev, g, state, params)
            y = logits.data.argmax(axis=-1)
            alphas.append(alpha.data)
            for i in np.flatnonzero(~done):
                if y[i] == eos:
                    done[i] = True
                else:
                    out[i].append(int(y[i]))
            if done.all():
                break
            y_prev = y
    result = out[0] if single else out
    if return_alphas:
        al = [a[0] for a in alphas] if single else alphas
        return result, al
    return result


def score_words(H, params: AttnParams, words: list[list[int]]) -> np.ndarray:
    """Teacher-forced log-probability of each id sequence (EOS appended) given one sequence H."""
    Hv = _features(H)
    if Hv.ndim != 2:
        raise ShapeError("score_words expects a single (T, D) feature sequence")
    eos = params.num_classes - 1
    if not words:
        return np.zeros(0)
    with no_grad():
        batch = Tensor(np.broadcast_to(Hv.data, (len(words),) + Hv.shape))
        loss, _ = attention_loss(batch, [list(w) + [eos] for w in words], params)
    return -loss.data


def lexicon_decode(H, params: AttnParams, lexicon: list[str], alphabet: Alphabet) -> str:
    """Return the lexicon word with the highest teacher-forced probability.

    Words with characters outside the alphabet are skipped; ties go to the
    earlier entry.
    """
    if not lexicon:
        raise ValueError("lexicon is empty")
    kept, ids = [], []
    for w in lexicon:
        if w and w in alphabet:
            kept.append(w)
            ids.append(alphabet.encode(w))
        else:
            log.warning("skipping lexicon word %r: characters outside the alphabet", w)
    if not kept:
        raise ValueError("no lexicon word is expressible in the alphabet")
    scores = score_words(H, params, ids)
    return kept[int(np.argmax(scores))]
