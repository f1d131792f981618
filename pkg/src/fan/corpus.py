"""Procedural word-image corpus with per-character boxes."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import pnm
from .glyphs import GLYPH_W, glyph

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"
CORRUPTIONS = ("blur", "noise", "occlusion", "contrast")
MAX_BLUR_RADIUS = 2


@dataclass
class CorpusConfig:
    count: int = 1000
    seed: int = 0
    image_size: tuple[int, int] = (16, 64)   # (H, W)
    text_len: tuple[int, int] = (3, 5)
    glyph_height: int = 12
    scale: tuple[float, float] = (1.0, 1.6)  # per-character width scale
    gap: int = 1
    jitter: int = 1
    position: str = "random"                 # or "center"
    corruptions: dict[str, float] = field(default_factory=dict)
    corrupt_prob: float = 0.5
    ratio: float = 0.3

    def __post_init__(self):
        self.image_size = tuple(self.image_size)
        self.text_len = tuple(self.text_len)
        self.scale = tuple(self.scale)
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"annotation ratio must lie in [0, 1], got {self.ratio}")
        if self.glyph_height > self.image_size[0]:
            raise ValueError("glyph height exceeds image height")
        for kind, s in self.corruptions.items():
            if kind not in CORRUPTIONS:
                raise ValueError(f"unknown corruption kind {kind!r}")
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"corruption strength must lie in [0, 1], got {s}")


@dataclass
class Sample:
    image: np.ndarray              # H x W in [0, 1]
    text: str
    boxes: list[tuple[int, int, int, int]] | None = None  # 0-indexed inclusive (x0, y0, x1, y1)
    annotated: bool = False


def _quantize(img: np.ndarray) -> np.ndarray:
    return pnm.to_uint8(img).astype(np.float64) / 255.0


def _widths(n: int, config: CorpusConfig, rng: np.random.Generator, text: str) -> list[int]:
    lo, hi = config.scale
    wmin = max(1, round(GLYPH_W * lo))
    avail = config.image_size[1] - config.gap * (n - 1)
    if n * wmin > avail:
        raise ValueError(f"text {text!r} does not fit in width {config.image_size[1]} at minimum scale")
    w = [max(1, round(GLYPH_W * s)) for s in rng.uniform(lo, hi, size=n)]
    while sum(w) > avail:
        k = int(np.argmax(w))
        w[k] -= 1
    return w


def render(text: str, config: CorpusConfig, rng: np.random.Generator) -> Sample:
    """Draw ``text`` left to right; boxes are the placed glyph cells."""
    n = len(text)
    lo, hi = config.text_len
    if not lo <= n <= hi:
        raise ValueError(f"text length {n} outside configured range {config.text_len}")
    h, w = config.image_size
    gh = config.glyph_height
    widths = _widths(n, config, rng, text)
    total = sum(widths) + config.gap * (n - 1)
    slack = w - total
    if config.position == "center":
        x = slack // 2
    else:
        x = int(rng.integers(0, slack + 1))
    bg = rng.uniform(0.0, 0.3)
    fg = rng.uniform(0.7, 1.0)
    if rng.random() < 0.5:
        bg, fg = 1.0 - bg, 1.0 - fg
    img = np.full((h, w), bg)
    boxes = []
    j = config.jitter
    for ch, gw in zip(text, widths):
        dx = int(rng.integers(-j, j + 1)) if j else 0
        dy = int(rng.integers(-j, j + 1)) if j else 0
        gx = min(max(x + dx, 0), w - gw)
        gy = min(max((h - gh) // 2 + dy, 0), h - gh)
        mask = glyph(ch, gh, gw)
        img[gy : gy + gh, gx : gx + gw][mask] = fg
        boxes.append((gx, gy, gx + gw - 1, gy + gh - 1))
        x += gw + config.gap
    return Sample(_quantize(img), text, boxes, annotated=True)


def _box_blur(img: np.ndarray, r: int) -> np.ndarray:
    if r == 0:
        return img.copy()
    k = 2 * r + 1
    p = np.pad(img, r, mode="symmetric")
    c = np.cumsum(np.pad(p, ((0, 0), (1, 0))), axis=1)
    rows = (c[:, k:] - c[:, :-k]) / k
    c = np.cumsum(np.pad(rows, ((1, 0), (0, 0))), axis=0)
    return (c[k:] - c[:-k]) / k


def corrupt(image: np.ndarray, kind: str, strength: float, rng: np.random.Generator) -> np.ndarray:
    """Apply one corruption; strength 0 is the identity for every kind."""
    if kind not in CORRUPTIONS:
        raise ValueError(f"unknown corruption kind {kind!r}")
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must lie in [0, 1], got {strength}")
    img = np.asarray(image, dtype=float)
    if strength == 0.0:
        return img.copy()
    if kind == "blur":
        out = _box_blur(img, int(round(strength * MAX_BLUR_RADIUS)))
    elif kind == "noise":
        out = img + rng.uniform(-strength / 2, strength / 2, size=img.shape)
    elif kind == "occlusion":
        h, w = img.shape
        rh = max(1, math.ceil(strength * h))
        rw = max(1, math.ceil(strength * w / 2))
        y0 = int(rng.integers(0, h - rh + 1))
        x0 = int(rng.integers(0, w - rw + 1))
        out = img.copy()
        out[y0 : y0 + rh, x0 : x0 + rw] = np.median(img)
    else:
        m = img.mean()
        out = m + (img - m) * (1.0 - 0.8 * strength)
    return np.clip(out, 0.0, 1.0)


def corpus_preset(name: str, **overrides) -> CorpusConfig:
    """Named corpus settings.

    ``toy``: 16 x 64 images, 3-5 characters, mild width variation.
    ``drift``: character widths vary 1x-2.5x and every image gets a 0.3
    occlusion, so fixed-stride feature positions drift away from characters.
    """
    base = {
        "toy": dict(),
        "drift": dict(scale=(1.0, 2.5), corruptions={"occlusion": 0.3}, corrupt_prob=1.0, jitter=0),
    }
    if name not in base:
        raise KeyError(f"unknown corpus preset {name!r}; known: {sorted(base)}")
    return CorpusConfig(**{**base[name], **overrides})


def random_text(config: CorpusConfig, rng: np.random.Generator) -> str:
    lo, hi = config.text_len
    n = int(rng.integers(lo, hi + 1))
    return "".join(ALPHABET[i] for i in rng.integers(0, len(ALPHABET), size=n))


def make_sample(i: int, config: CorpusConfig) -> Sample:
    """Sample ``i`` of a dataset; draws from its own (seed, i) stream."""
    rng = np.random.default_rng([config.seed, i])
    s = render(random_text(config, rng), config, rng)
    img = s.image
    for kind in CORRUPTIONS:
        strength = config.corruptions.get(kind, 0.0)
        if strength > 0 and rng.random() < config.corrupt_prob:
            img = corrupt(img, kind, strength, rng)
    s.image = _quantize(img)
    return s


def annotated_indices(config: CorpusConfig) -> np.ndarray:
    k = int(math.floor(config.ratio * config.count + 1e-9))
    rng = np.random.default_rng([config.seed, 0x5EED])
    return np.sort(rng.permutation(config.count)[:k])


def max_box_size(samples) -> tuple[int, int]:
    """(P_H, P_W): largest character-box height and width over annotated samples."""
    ph = pw = 0
    for s in samples:
        if s.annotated and s.boxes:
            for x0, y0, x1, y1 in s.boxes:
                ph = max(ph, y1 - y0 + 1)
                pw = max(pw, x1 - x0 + 1)
    return ph, pw


@dataclass
class Dataset:
    samples: list[Sample]
    manifest: dict

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def crop_size(self) -> tuple[int, int]:
        return tuple(self.manifest["crop"])

    @property
    def alphabet(self) -> str:
        return self.manifest.get("alphabet", ALPHABET)

    def images(self) -> np.ndarray:
        return np.stack([s.image for s in self.samples])[:, None]

    def with_ratio(self, ratio: float, seed: int = 0) -> "Dataset":
        """Copy keeping boxes on floor(ratio * N) of the currently annotated samples.

        Used by the annotation-ratio sweep; the crop size is left unchanged so
        every run of a sweep uses the same patch geometry.
        """
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"annotation ratio must lie in [0, 1], got {ratio}")
        k = int(math.floor(ratio * len(self) + 1e-9))
        pool = [i for i, s in enumerate(self.samples) if s.annotated]
        if k > len(pool):
            raise ValueError(f"ratio {ratio} needs {k} annotated samples, dataset has {len(pool)}")
        rng = np.random.default_rng([seed, 0xA77])
        keep = set(rng.permutation(pool)[:k].tolist())
        samples = [Sample(s.image, s.text, s.boxes if i in keep else None, i in keep)
                   for i, s in enumerate(self.samples)]
        return Dataset(samples, {**self.manifest, "annotated": k})


def make_dataset(config: CorpusConfig) -> Dataset:
    """Generate ``config.count`` samples; exactly floor(ratio * count) keep their boxes."""
    chosen = set(annotated_indices(config).tolist())
    samples = []
    for i in range(config.count):
        s = make_sample(i, config)
        if i not in chosen:
            s.boxes, s.annotated = None, False
        samples.append(s)
    crop = max_box_size(samples)
    if crop == (0, 0):
        # no annotated samples: fall back to the geometry of the glyphs that were drawn
        crop = max_box_size(make_sample(i, config) for i in range(config.count))
    manifest = {"config": asdict(config), "crop": crop, "annotated": len(chosen), "alphabet": ALPHABET}
    return Dataset(samples, manifest)


# --- on-disk format ----------------------------------------------------------

def _fmt_value(v) -> str:
    if isinstance(v, dict):
        return ",".join(f"{k}:{x}" for k, x in sorted(v.items()))
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def write_dataset(ds: Dataset, out_dir: str | os.PathLike) -> Path:
    """Write one PGM per sample plus ``manifest.tsv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"#{k}={_fmt_value(v)}" for k, v in ds.manifest["config"].items()]
    lines.append(f"#crop={ds.manifest['crop'][0]},{ds.manifest['crop'][1]}")
    lines.append(f"#alphabet={ds.alphabet}")
    width = max(5, len(str(len(ds) - 1)))
    for i, s in enumerate(ds.samples):
        name = f"img_{i:0{width}d}.pgm"
        pnm.write_pgm(out / name, s.image)
        rec = [name, s.text, "1" if s.annotated else "0"]
        if s.annotated and s.boxes:
            rec.append(";".join(f"{a},{b},{c},{d}" for a, b, c, d in s.boxes))
        lines.append("\t".join(rec))
    path = out / "manifest.tsv"
    path.write_text("\n".join(lines) + "\n")
    return path


class ManifestError(ValueError):
    pass


def read_dataset(path: str | os.PathLike) -> Dataset:
    """Load a dataset directory (or its manifest file)."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.tsv"
    if not p.exists():
        raise ManifestError(f"no manifest at {p}")
    header: dict[str, str] = {}
    samples = []
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            k, _, v = line[1:].partition("=")
            header[k.strip()] = v.strip()
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4) or parts[2] not in ("0", "1"):
            raise ManifestError(f"{p}:{lineno}: malformed record")
        boxes = None
        if len(parts) == 4 and parts[3]:
            try:
                boxes = [tuple(int(v) for v in b.split(",")) for b in parts[3].split(";")]
            except ValueError:
                raise ManifestError(f"{p}:{lineno}: malformed boxes") from None
            if any(len(b) != 4 for b in boxes) or len(boxes) != len(parts[1]):
                raise ManifestError(f"{p}:{lineno}: box count does not match text")
        img_path = Path(parts[0])
        if not img_path.is_absolute():
            img_path = p.parent / img_path
        annotated = parts[2] == "1" and boxes is not None
        samples.append(Sample(pnm.read_pgm(img_path), parts[1], boxes, annotated))
    if "crop" in header:
        crop = tuple(int(v) for v in header["crop"].split(","))
    else:
        crop = max_box_size(samples)
    manifest = {"config": header, "crop": crop, "annotated": sum(s.annotated for s in samples)}
    if "alphabet" in header:
        manifest["alphabet"] = header["alphabet"]
    else:
        manifest["alphabet"] = "".join(sorted({ch for s in samples for ch in s.text.lower()}))
    return Dataset(samples, manifest)
