"""Bars-and-stripes data, grayscale image I/O and sliding-window detection."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ansatz import make_layout
from .training import LabeledDataset, SPSAConfig, TrainedModel, TrainingConfig, split_indices, train


class ImageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bars and stripes


def bas_images(n: int) -> tuple[np.ndarray, np.ndarray]:
    """All non-uniform ``n x n`` bars (label 0) and stripes (label 1)."""
    if n < 2:
        raise ImageError("bars and stripes need n >= 2")
    patterns = [
        np.array(bits, dtype=float)
        for bits in itertools.product((0, 1), repeat=n)
        if 0 < sum(bits) < n
    ]
    bars = [np.tile(p, (n, 1)) for p in patterns]  # constant columns
    stripes = [np.tile(p[:, None], (1, n)) for p in patterns]  # constant rows
    images = np.stack(bars + stripes)
    labels = np.array([0] * len(bars) + [1] * len(stripes))
    return images, labels


MAX_ENUMERATED_BAS = 12


def _random_patterns(n: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    if count > 2**n - 2:
        raise ImageError(f"only {2**n - 2} non-uniform patterns exist for n={n}")
    seen: set[bytes] = set()
    out = []
    while len(out) < count:
        bits = rng.integers(0, 2, size=n).astype(np.uint8)
        key = bits.tobytes()
        if 0 < bits.sum() < n and key not in seen:
            seen.add(key)
            out.append(bits.astype(float))
    return out


def generate_bas(n: int, seed: int = 0, n_images: int | None = None) -> LabeledDataset:
    """Bars and stripes with a seeded half/half split, stratified by label.

    By default every non-uniform image is included. ``n_images`` instead
    draws that many distinct images (half bars, half stripes), which is the
    only option for large ``n``.
    """
    if n < 2:
        raise ImageError("bars and stripes need n >= 2")
    if n_images is None:
        if n > MAX_ENUMERATED_BAS:
            raise ImageError(f"n={n} is too large to enumerate; pass n_images")
        images, labels = bas_images(n)
    else:
        if n_images < 2 or n_images % 2:
            raise ImageError("n_images must be a positive even number")
        rng = np.random.default_rng([seed, n])
        per_class = n_images // 2
        bars = [np.tile(p, (n, 1)) for p in _random_patterns(n, per_class, rng)]
        stripes = [np.tile(p[:, None], (1, n)) for p in _random_patterns(n, per_class, rng)]
        images = np.stack(bars + stripes)
        labels = np.array([0] * per_class + [1] * per_class)
    train, test = split_indices(len(labels), seed, labels=labels)
    return LabeledDataset(images, labels, train, test)


# ---------------------------------------------------------------------------
# images


@dataclass
class GrayImage:
    pixels: np.ndarray  # (height, width), values in [0, 1]

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2:
            raise ImageError("a gray image is a 2-D array")
        self.pixels = np.clip(px, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated integers, skipping comments."""
    tokens: list[int] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ImageError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise ImageError(f"bad PGM header token {data[start:pos]!r}") from None
    return tokens, pos


def load_pgm(path) -> GrayImage:
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ImageError(f"{path}: not a P2/P5 PGM file")
    (width, height, maxval), pos = _pgm_tokens(data[2:], 3)
    pos += 2
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise ImageError(f"{path}: invalid PGM header")
    n = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + n * dtype.itemsize]
        if len(raw) < n * dtype.itemsize:
            raise ImageError(f"{path}: truncated PGM data")
        values = np.frombuffer(raw, dtype=dtype).astype(float)
    else:
        parts = data[pos:].split()
        if len(parts) < n:
            raise ImageError(f"{path}: truncated PGM data")
        try:
            values = np.array([int(v) for v in parts[:n]], dtype=float)
        except ValueError:
            raise ImageError(f"{path}: non-integer PGM sample") from None
    if np.any(values > maxval):
        raise ImageError(f"{path}: sample exceeds maxval")
    return GrayImage(values.reshape(height, width) / maxval)


def quantize(img: GrayImage, maxval: int = 255) -> np.ndarray:
    return np.rint(img.pixels * maxval).astype(np.uint16 if maxval > 255 else np.uint8)


def save_pgm(img: GrayImage, path, binary: bool = True) -> None:
    """Write 8-bit PGM (P5 by default, P2 when ``binary`` is false)."""
    q = quantize(img)
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n255\n".encode()
    if binary:
        body = q.tobytes()
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in q).encode() + b"\n"
    Path(path).write_bytes(header + body)


def center_crop_resize(img: GrayImage, side: int) -> GrayImage:
    """Largest centred square, bilinearly resampled to ``side x side``."""
    h, w = img.height, img.width
    if h < 2 or w < 2:
        raise ImageError("image must be at least 2x2")
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    crop = img.pixels[top : top + s, left : left + s]
    if s == side:
        return GrayImage(crop.copy())
    # pixel-centre aligned sampling grid
    coords = (np.arange(side) + 0.5) * (s / side) - 0.5
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    out = ndimage.map_coordinates(crop, [yy, xx], order=1, mode="nearest")
    return GrayImage(out)


def sliding_windows(img: GrayImage, window: int, stride: int | None = None):
    """``(x, y, sub_image)`` for every fully contained window, row-major."""
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ImageError("window and stride must be positive")
    if window > img.height or window > img.width:
        raise ImageError(f"window {window} exceeds image {img.width}x{img.height}")
    out = []
    for y in range(0, img.height - window + 1, stride):
        for x in range(0, img.width - window + 1, stride):
            out.append((x, y, GrayImage(img.pixels[y : y + window, x : x + window])))
    return out


# ---------------------------------------------------------------------------
# detection


@dataclass
class Box:
    x: int
    y: int
    w: int
    h: int

    def contains(self, other: "Box") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x + other.w <= self.x + self.w
            and other.y + other.h <= self.y + self.h
        )

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


@dataclass
class DetectionReport:
    stage1_defect: bool
    stage2_boxes: list[Box] = field(default_factory=list)
    stage3_boxes: list[Box] = field(default_factory=list)
    image: GrayImage | None = None
    highlight_mask: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stage1": "defect" if self.stage1_defect else "no-defect",
            "stage2_boxes": [b.as_dict() for b in self.stage2_boxes],
            "stage3_boxes": [b.as_dict() for b in self.stage3_boxes],
            "params": self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def highlight_rgb(self) -> np.ndarray:
        """8-bit RGB rendering; highlighted pixels are pure red."""
        gray = quantize(self.image).astype(np.uint8)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
        rgb[self.highlight_mask] = (255, 0, 0)
        return rgb


def model_side(model: TrainedModel) -> int:
    if model.n_pixels is None:
        raise ImageError("model does not record its input size")
    side = int(round(np.sqrt(model.n_pixels)))
    if side * side != model.n_pixels:
        raise ImageError(f"model input of {model.n_pixels} pixels is not square")
    return side


def _classify_windows(model: TrainedModel, windows) -> np.ndarray:
    if not windows:
        return np.zeros(0, dtype=int)
    batch = np.stack([w.pixels for _, _, w in windows])
    return model.predict(batch)


def detect(
    img: GrayImage,
    model_full: TrainedModel,
    model_coarse: TrainedModel,
    model_fine: TrainedModel,
    black_threshold: float = 0.25,
    stride_coarse: int | None = None,
    stride_fine: int | None = None,
    sizes: tuple[int, int, int] | None = None,
) -> DetectionReport:
    """Three-stage defect search.

    1. classify the centred ``S x S`` crop (``S`` from ``model_full``);
    2. if it is a defect, classify coarse windows of that crop;
    3. inside every flagged coarse window classify fine windows.

    Label 1 means defect. Pixels darker than ``black_threshold`` inside
    fine boxes are highlighted. Boxes are in crop coordinates.
    """
    expected = sizes
    side_full, side_coarse, side_fine = (
        model_side(model_full),
        model_side(model_coarse),
        model_side(model_fine),
    )
    if expected is not None and (side_full, side_coarse, side_fine) != tuple(expected):
        raise ImageError(
            f"model input sizes {(side_full, side_coarse, side_fine)} do not match {expected}"
        )
    if not side_fine <= side_coarse <= side_full:
        raise ImageError("model input sizes must shrink from stage to stage")
    work = center_crop_resize(img, side_full)
    params = {
        "black_threshold": black_threshold,
        "sizes": [side_full, side_coarse, side_fine],
        "stride_coarse": stride_coarse or side_coarse,
        "stride_fine": stride_fine or side_fine,
    }
    report = DetectionReport(False, image=work, params=params)
    report.highlight_mask = np.zeros(work.pixels.shape, dtype=bool)
    report.stage1_defect = bool(model_full.predict(work.pixels[None])[0] == 1)
    if not report.stage1_defect:
        return report

    coarse = sliding_windows(work, side_coarse, stride_coarse)
    flags = _classify_windows(model_coarse, coarse)
    report.stage2_boxes = [
        Box(x, y, side_coarse, side_coarse) for (x, y, _), f in zip(coarse, flags) if f == 1
    ]
    for box in report.stage2_boxes:
        region = GrayImage(work.pixels[box.y : box.y + box.h, box.x : box.x + box.w])
        fine = sliding_windows(region, side_fine, stride_fine)
        fflags = _classify_windows(model_fine, fine)
        for (x, y, _), f in zip(fine, fflags):
            if f == 1:
                report.stage3_boxes.append(Box(box.x + x, box.y + y, side_fine, side_fine))
    for b in report.stage3_boxes:
        sl = (slice(b.y, b.y + b.h), slice(b.x, b.x + b.w))
        report.highlight_mask[sl] |= work.pixels[sl] < black_threshold
    return report


def highlight_to_ppm(report: DetectionReport, path) -> None:
    if report.image is None or report.highlight_mask is None:
        raise ImageError("report carries no image to render")
    rgb = report.highlight_rgb()
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def load_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise ImageError(f"{path}: not a P6 PPM file")
    (w, h, maxval), pos = _pgm_tokens(data[2:], 3)
    pos += 3
    raw = data[pos : pos + w * h * 3]
    if len(raw) < w * h * 3 or maxval != 255:
        raise ImageError(f"{path}: unsupported or truncated PPM")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)


# ---------------------------------------------------------------------------
# synthetic defect data


def synthetic_image(
    side: int,
    rng: np.random.Generator,
    n_blobs: int = 1,
    blob_size: tuple[int, int] = (8, 8),
    background: tuple[float, float] = (0.75, 1.0),
    blob_level: tuple[float, float] = (0.0, 0.15),
    margin: int | None = None,
) -> tuple[GrayImage, np.ndarray]:
    """Noisy bright background with dark rectangular blobs and their mask."""
    px = rng.uniform(*background, size=(side, side))
    mask = np.zeros((side, side), dtype=bool)
    margin = side // 8 if margin is None else margin
    for _ in range(n_blobs):
        bh = int(rng.integers(blob_size[0], blob_size[1] + 1))
        bw = int(rng.integers(blob_size[0], blob_size[1] + 1))
        y = int(rng.integers(margin, side - margin - bh + 1))
        x = int(rng.integers(margin, side - margin - bw + 1))
        mask[y : y + bh, x : x + bw] = True
    px[mask] = rng.uniform(*blob_level, size=int(mask.sum()))
    return GrayImage(px), mask


def window_dataset(images, masks, window: int, n_per_class: int, rng, stride: int | None = None) -> LabeledDataset:
    """Balanced windows cut from masked images; label 1 when a window touches a blob."""
    pos, neg = [], []
    for img, mask in zip(images, masks):
        for x, y, sub in sliding_windows(img, window, stride):
            hit = mask[y : y + window, x : x + window].any()
            (pos if hit else neg).append(sub.pixels)
    if len(pos) < n_per_class or len(neg) < n_per_class:
        raise ImageError("not enough windows of each class")
    pick_p = rng.choice(len(pos), n_per_class, replace=False)
    pick_n = rng.choice(len(neg), n_per_class, replace=False)
    images_out = np.stack([pos[i] for i in pick_p] + [neg[i] for i in pick_n])
    labels = np.array([1] * n_per_class + [0] * n_per_class)
    train, test = split_indices(len(labels), int(rng.integers(2**31)), labels=labels)
    return LabeledDataset(images_out, labels, train, test)


def _log2_side(side: int) -> int:
    bits = int(side * side).bit_length() - 1
    if side < 2 or 1 << bits != side * side:
        raise ImageError(f"window side {side} must be a power of two")
    return bits


@dataclass
class DetectorConfig:
    """Synthetic training recipe for the three detection stages.

    Each stage is an MPS of two-qubit blocks on ``log2(side^2) + 1`` qubits
    with the dark-reference encoding.
    """

    sizes: tuple[int, int, int] = (256, 16, 4)
    n_source_images: int = 10
    n_full_images: int = 12
    windows_per_class: int = 40
    iters: tuple[int, int, int] = (25, 100, 100)
    spsa_a: float = 1.0
    spsa_c: float = 0.2
    blobs: tuple[int, int] = (1, 3)
    blob_size: tuple[int, int] = (6, 14)
    seed: int = 0


def synthetic_batch(cfg: DetectorConfig, count: int, rng) -> tuple[list[GrayImage], list[np.ndarray]]:
    images, masks = [], []
    for _ in range(count):
        n_blobs = int(rng.integers(cfg.blobs[0], cfg.blobs[1] + 1))
        img, mask = synthetic_image(cfg.sizes[0], rng, n_blobs, cfg.blob_size)
        images.append(img)
        masks.append(mask)
    return images, masks


def train_detectors(cfg: DetectorConfig | None = None) -> tuple[TrainedModel, TrainedModel, TrainedModel]:
    """Train the full, coarse and fine stage models on synthetic data."""
    cfg = cfg or DetectorConfig()
    rng = np.random.default_rng(cfg.seed)
    images, masks = synthetic_batch(cfg, cfg.n_source_images, rng)
    spsa = SPSAConfig(a=cfg.spsa_a, c=cfg.spsa_c)

    def fit(ds: LabeledDataset, side: int, iters: int) -> TrainedModel:
        layout = make_layout("mps", _log2_side(side) + 1, 1, 2)
        tcfg = TrainingConfig(max_iters=iters, spsa=spsa, seed=cfg.seed, encoding="dark-reference")
        return train(layout, ds, tcfg)

    half = cfg.n_full_images // 2
    defect, _ = synthetic_batch(cfg, half, rng)
    clean = [GrayImage(rng.uniform(0.75, 1.0, size=(cfg.sizes[0],) * 2)) for _ in range(half)]
    full_px = np.stack([im.pixels for im in defect + clean])
    full_labels = np.array([1] * half + [0] * half)
    tr, te = split_indices(len(full_labels), cfg.seed, labels=full_labels)
    full = fit(LabeledDataset(full_px, full_labels, tr, te), cfg.sizes[0], cfg.iters[0])
    coarse = fit(
        window_dataset(images, masks, cfg.sizes[1], cfg.windows_per_class, rng),
        cfg.sizes[1],
        cfg.iters[1],
    )
    fine = fit(
        window_dataset(images, masks, cfg.sizes[2], cfg.windows_per_class, rng),
        cfg.sizes[2],
        cfg.iters[2],
    )
    return full, coarse, fine


def highlight_rates(report: DetectionReport, mask: np.ndarray) -> tuple[float, float]:
    """Fraction of blob pixels and of background pixels that were highlighted."""
    hl = report.highlight_mask
    blob = float(hl[mask].mean()) if mask.any() else 1.0
    background = float(hl[~mask].mean()) if (~mask).any() else 0.0
    return blob, background
