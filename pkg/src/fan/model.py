"""The assembled network: encoder, attention decoder, focusing network."""

from __future__ import annotations

import numpy as np

from .adcore import ops
from .adcore.tensor import Tensor, no_grad
from .attn import Alphabet, AttnConfig, AttnParams, build_attn, greedy_decode, lexicon_decode
from .encoder import Encoder, EncoderConfig, build_encoder
from .focus import FocusConfig, FocusParams, build_focus, fan_loss


class FANModel:
    def __init__(self, encoder: Encoder, attn: AttnParams, focus: FocusParams,
                 alphabet: Alphabet, attn_config: AttnConfig):
        self.encoder = encoder
        self.attn = attn
        self.focus = focus
        self.alphabet = alphabet
        self.attn_config = attn_config

    @classmethod
    def build(cls, enc_cfg: EncoderConfig, attn_cfg: AttnConfig, focus_cfg: FocusConfig,
              alphabet: Alphabet | None = None, seed: int = 0) -> "FANModel":
        alphabet = alphabet or Alphabet()
        enc = build_encoder(enc_cfg, rng_seed=seed)
        k = alphabet.size
        attn = build_attn(enc_cfg.feature_dim, k, attn_cfg, rng_seed=seed + 1)
        if focus_cfg.source == "image":
            channels = enc_cfg.input_channels
        else:
            if focus_cfg.source not in enc.tap_names():
                raise ValueError(f"focus source {focus_cfg.source!r} is not a full-resolution "
                                 f"conv output; choose from {['image'] + enc.tap_names()}")
            channels = enc.params[focus_cfg.source + ".w"].shape[0]
        focus = build_focus(enc_cfg.feature_dim, channels, k, focus_cfg, rng_seed=seed + 2)
        return cls(enc, attn, focus, alphabet, attn_cfg)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.encoder.params)
        out.update(self.attn)
        out.update(self.focus)
        return out

    def targets(self, texts) -> list[list[int]]:
        eos = self.alphabet.eos
        return [self.alphabet.encode(t) + [eos] for t in texts]

    def loss(self, images: np.ndarray, texts, boxes, lam: float):
        """Batch-mean joint loss plus the two unweighted batch-mean parts (floats)."""
        imgs = Tensor(images)
        src_name = self.focus.source
        keep = frozenset() if src_name == "image" or lam == 0 else frozenset([src_name])
        H = self.encoder(imgs, keep=keep)
        source = imgs if src_name == "image" else H.taps.get(src_name)
        combined, l_att, l_focus = fan_loss(H, self.targets(texts), self.attn, self.focus, lam,
                                            boxes=list(boxes), source=source)
        n = images.shape[0]
        total = ops.sum(combined) * (1.0 / n)
        att = float(l_att.data.sum()) / n
        foc = 0.0 if l_focus is None else float(l_focus.data.sum()) / n
        return total, att, foc

    def predict(self, images: np.ndarray, max_len: int | None = None):
        """Greedy texts and per-sample lists of per-step alpha arrays."""
        max_len = max_len or self.attn_config.max_len
        with no_grad():
            H = self.encoder(Tensor(images))
            ids, alphas = greedy_decode(H, self.attn, max_len, return_alphas=True)
        texts = [self.alphabet.decode(x) for x in ids]
        per_sample = [[a[i] for a in alphas[: len(x)]] for i, x in enumerate(ids)]
        return texts, per_sample

    def lexicon_predict(self, image: np.ndarray, lexicon: list[str]) -> str:
        with no_grad():
            H = self.encoder(Tensor(image))
            return lexicon_decode(H, self.attn, lexicon, self.alphabet)

    def forward_logits(self, images: np.ndarray, texts) -> np.ndarray:
        """Teacher-forced logits (N, M, K); used for round-trip checks."""
        from .attn import attention_loss
        with no_grad():
            H = self.encoder(Tensor(images))
            _, traces = attention_loss(H, self.targets(texts), self.attn)
        return np.stack([t.logits.data for t in traces], axis=1)
