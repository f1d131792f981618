"""Run configuration: ``section.key = value`` text files with typed defaults."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .attn import AttnConfig
from .corpus import CorpusConfig, corpus_preset
from .encoder import EncoderConfig, preset
from .focus import DEFAULT_LAMBDA, FocusConfig


class ConfigError(ValueError):
    """Bad configuration: unknown key, unparsable value, malformed line."""


@dataclass
class CorpusSection:
    preset: str = "toy"
    count: int = 1000
    seed: int = 0
    ratio: float = 0.3
    image_height: int = 16
    image_width: int = 64
    text_min: int = 3
    text_max: int = 5
    glyph_height: int = 12
    scale_min: float = -1.0  # negative: keep the preset's value
    scale_max: float = -1.0
    jitter: int = -1
    position: str = ""
    blur: float = -1.0
    noise: float = -1.0
    occlusion: float = -1.0
    contrast: float = -1.0
    corrupt_prob: float = -1.0


@dataclass
class EncoderSection:
    preset: str = "toy"
    hidden: int = 0  # 0: the preset's own width


@dataclass
class AttnSection:
    state_size: int = 64
    attn_size: int = 64
    max_len: int = 32


@dataclass
class FocusSection:
    # "lambda" is a Python keyword; the file key is focus.lambda
    lam: float = DEFAULT_LAMBDA
    crop_height: int = 0  # 0: take from the training set manifest
    crop_width: int = 0
    source: str = "image"


@dataclass
class TrainSection:
    batch_size: int = 32
    steps: int = 1000
    seed: int = 0
    init_seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 500
    time_limit: float = 0.0  # seconds; 0 disables
    augment: int = 1  # 1: label-preserving shifts, polarity and gray-level jitter per batch
    average: float = 0.999  # decay of the weight average used for evaluation; 0 disables


@dataclass
class EvalSection:
    batch_size: int = 64
    max_len: int = 0  # 0: use attn.max_len


SECTIONS = {
    "corpus": CorpusSection,
    "encoder": EncoderSection,
    "attn": AttnSection,
    "focus": FocusSection,
    "train": TrainSection,
    "eval": EvalSection,
}
_KEY_ALIASES = {("focus", "lambda"): "lam"}
_FILE_KEYS = {("focus", "lam"): "lambda"}


@dataclass
class RunConfig:
    corpus: CorpusSection = field(default_factory=CorpusSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    attn: AttnSection = field(default_factory=AttnSection)
    focus: FocusSection = field(default_factory=FocusSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def set(self, dotted: str, value: str) -> None:
        """Assign ``section.key`` from its text form, with type checking."""
        if "." not in dotted:
            raise ConfigError(f"key {dotted!r} must look like section.key")
        sec, key = dotted.split(".", 1)
        if sec not in SECTIONS:
            raise ConfigError(f"unknown config key {dotted!r} (unknown section {sec!r})")
        attr = _KEY_ALIASES.get((sec, key), key)
        section = getattr(self, sec)
        types = {f.name: f.type for f in fields(section)}
        if attr not in types or (sec, attr) in _FILE_KEYS and key == attr:
            raise ConfigError(f"unknown config key {dotted!r}")
        current = getattr(section, attr)
        try:
            if isinstance(current, bool):
                parsed = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                parsed = int(value)
            elif isinstance(current, float):
                parsed = float(value)
            else:
                parsed = value
        except ValueError:
            raise ConfigError(f"bad value {value!r} for {dotted}") from None
        setattr(section, attr, parsed)

    def items(self):
        """(dotted key, value) pairs in a stable order."""
        for sec in SECTIONS:
            section = getattr(self, sec)
            for f in fields(section):
                yield f"{sec}.{_FILE_KEYS.get((sec, f.name), f.name)}", getattr(section, f.name)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    # --- builders -------------------------------------------------------------

    def corpus_config(self) -> CorpusConfig:
        c = self.corpus
        over = dict(count=c.count, seed=c.seed, ratio=c.ratio,
                    image_size=(c.image_height, c.image_width),
                    text_len=(c.text_min, c.text_max), glyph_height=c.glyph_height)
        try:
            base = corpus_preset(c.preset)
        except KeyError as exc:
            raise ConfigError(f"corpus.preset: {exc.args[0]}") from None
        if c.scale_min >= 0 or c.scale_max >= 0:
            lo = c.scale_min if c.scale_min >= 0 else base.scale[0]
            hi = c.scale_max if c.scale_max >= 0 else base.scale[1]
            over["scale"] = (lo, hi)
        if c.jitter >= 0:
            over["jitter"] = c.jitter
        if c.position:
            over["position"] = c.position
        if c.corrupt_prob >= 0:
            over["corrupt_prob"] = c.corrupt_prob
        corr = dict(base.corruptions)
        for kind in ("blur", "noise", "occlusion", "contrast"):
            v = getattr(c, kind)
            if v >= 0:
                corr[kind] = v
        over["corruptions"] = {k: v for k, v in corr.items() if v > 0}
        try:
            return corpus_preset(c.preset, **over)
        except ValueError as exc:
            raise ConfigError(f"corpus: {exc}") from None

    def encoder_config(self) -> EncoderConfig:
        e = self.encoder
        try:
            if e.preset == "toy":
                cfg = preset("toy", input_size=(self.corpus.image_height, self.corpus.image_width))
            else:
                cfg = preset(e.preset)
        except KeyError as exc:
            raise ConfigError(f"encoder.preset: {exc.args[0]}") from None
        if e.hidden:
            cfg.hidden = e.hidden
        return cfg

    def attn_config(self) -> AttnConfig:
        a = self.attn
        return AttnConfig(state_size=a.state_size, attn_size=a.attn_size, max_len=a.max_len)

    def focus_config(self) -> FocusConfig:
        f = self.focus
        return FocusConfig(crop=(f.crop_height, f.crop_width), source=f.source)


def loads(text: str, origin: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            cfg.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    return cfg


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return loads(text, str(p))
