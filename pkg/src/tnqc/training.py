"""Variational classifier training with SPSA.

The classifier encodes an image into amplitudes, runs an MPS/TTN meta-ansatz
and reads ``<Z>`` on the measured wire: ``<Z> > 0`` means label 0,
``<Z> < 0`` label 1 (a tie goes to label 0).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .ansatz import AnsatzLayout, build_circuit, make_layout, random_params
from .circuit import expval_z, run

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
ENCODINGS = ("amplitude", "dark-reference")


class TrainingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# encodings


def amplitude_encode(pixels, n_qubits: int) -> np.ndarray:
    """``sum_i x_i |i>`` for the L2-normalised pixel vector, zero padded."""
    x = np.asarray(pixels, dtype=float).ravel()
    if x.size > 2**n_qubits:
        raise TrainingError(f"{x.size} values do not fit into {n_qubits} qubits")
    norm = np.linalg.norm(x)
    if norm == 0:
        raise TrainingError("cannot amplitude-encode an all-zero vector")
    state = np.zeros(2**n_qubits, dtype=complex)
    state[: x.size] = x / norm
    return state


def dark_reference_vector(pixels, ref_mass: float = 0.25, dark_cutoff: float = 0.5) -> np.ndarray:
    """Interleave a constant reference with per-pixel darkness.

    Slot ``2i`` holds ``sqrt(ref_mass / P)``, slot ``2i+1`` the darkness
    ``clip((dark_cutoff - p_i) / dark_cutoff, 0, 1)``. After normalisation
    the lowest qubit reads ``<Z> = (ref_mass - S) / (ref_mass + S)`` with
    ``S`` the summed squared darkness, so overall brightness survives the
    normalisation that plain amplitude encoding applies.
    """
    p = np.asarray(pixels, dtype=float).ravel()
    dark = np.clip((dark_cutoff - p) / dark_cutoff, 0.0, 1.0)
    out = np.empty(2 * p.size)
    out[0::2] = np.sqrt(ref_mass / p.size)
    out[1::2] = dark
    return out


def encode_images(images, n_qubits: int, encoding: str = "amplitude", **opts) -> np.ndarray:
    """Batch of encoded states, shape ``(N, 2**n_qubits)``."""
    images = np.asarray(images, dtype=float)
    flat = images.reshape(len(images), -1)
    if encoding == "amplitude":
        return np.stack([amplitude_encode(x, n_qubits) for x in flat])
    if encoding == "dark-reference":
        return np.stack([amplitude_encode(dark_reference_vector(x, **opts), n_qubits) for x in flat])
    raise TrainingError(f"unknown encoding {encoding!r}")


def input_capacity(n_qubits: int, encoding: str) -> int:
    """Largest pixel count a model of ``n_qubits`` accepts."""
    return 2**n_qubits if encoding == "amplitude" else 2 ** (n_qubits - 1)


# ---------------------------------------------------------------------------
# decision rule and loss


def prob_correct(expval, label):
    """Probability of sampling ``label`` given ``<Z>`` (vectorised)."""
    e = np.asarray(expval, dtype=float)
    lab = np.asarray(label)
    if np.any(np.abs(e) > 1 + 1e-9):
        raise TrainingError("expectation values must lie in [-1, 1]")
    if np.any((lab != 0) & (lab != 1)):
        raise TrainingError("labels must be 0 or 1")
    p = 1.0 - np.abs((1.0 - e) / 2.0 - lab)
    return float(p) if p.ndim == 0 else p


def loss(p_list) -> float:
    """``sum_i (1 + 10 exp(7 p_i))^-1``."""
    p = np.asarray(p_list, dtype=float)
    return float(np.sum(1.0 / (1.0 + 10.0 * np.exp(7.0 * p))))


def cross_entropy_loss(p_list) -> float:
    p = np.clip(np.asarray(p_list, dtype=float), 1e-12, 1.0)
    return float(-np.sum(np.log(p)))


LOSSES: dict[str, Callable] = {"logistic": loss, "cross-entropy": cross_entropy_loss}


def labels_from_expvals(expvals) -> np.ndarray:
    return np.where(np.asarray(expvals) >= 0, 0, 1)


def labels_from_samples(samples) -> int:
    """Majority vote over ``+1``/``-1`` outcomes; ties go to label 0."""
    return 0 if np.sum(samples) >= 0 else 1


# ---------------------------------------------------------------------------
# SPSA


@dataclass
class SPSAConfig:
    a: float = 0.2
    c: float = 0.2
    A: float | None = None  # None -> 0.1 * max_iters
    alpha: float = 0.602
    gamma: float = 0.101

    def __post_init__(self) -> None:
        if self.a <= 0 or self.c <= 0 or (self.A is not None and self.A < 0):
            raise TrainingError("SPSA gains a, c must be positive and A non-negative")

    def gains(self, k: int, max_iters: int | None = None) -> tuple[float, float]:
        A = self.A if self.A is not None else 0.1 * (max_iters or 0)
        a_k = self.a / (k + 1 + A) ** self.alpha
        c_k = self.c / (k + 1) ** self.gamma
        return a_k, c_k


# The summed per-image loss is small (about 0.1 at the start for 14 images),
# so bars-and-stripes runs need a much larger step gain than the default.
BAS_SPSA = SPSAConfig(a=10.0, c=0.2)


def spsa_step(
    params: np.ndarray,
    objective: Callable[[np.ndarray], float],
    k: int,
    cfg: SPSAConfig,
    rng: np.random.Generator,
    max_iters: int | None = None,
) -> np.ndarray:
    """One SPSA update; calls ``objective`` exactly twice."""
    if k < 0:
        raise TrainingError("iteration index must be non-negative")
    a_k, c_k = cfg.gains(k, max_iters)
    delta = rng.choice((-1.0, 1.0), size=np.shape(params))
    f_plus = objective(params + c_k * delta)
    f_minus = objective(params - c_k * delta)
    grad = (f_plus - f_minus) / (2.0 * c_k) * delta  # 1/delta == delta for +-1
    return params - a_k * grad


# ---------------------------------------------------------------------------
# datasets and models


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, h, w) in [0, 1]
    labels: np.ndarray  # (N,) in {0, 1}
    train: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    test: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self) -> None:
        self.images = np.asarray(self.images, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.images) != len(self.labels):
            raise TrainingError("images and labels differ in length")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise TrainingError("labels must be 0 or 1")
        self.train = np.asarray(self.train, dtype=int)
        self.test = np.asarray(self.test, dtype=int)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_pixels(self) -> int:
        return int(np.prod(self.images.shape[1:]))

    def split(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train, "test": self.test}[which]
        return self.images[idx], self.labels[idx]


def split_indices(
    n: int, seed: int, train_fraction: float = 0.5, labels=None
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded train/test index split.

    With ``labels`` the split is stratified: each class is shuffled and cut
    separately, so both halves keep the class balance.
    """
    rng = np.random.default_rng(seed)
    if labels is None:
        perm = rng.permutation(n)
        cut = int(round(n * train_fraction))
        return np.sort(perm[:cut]), np.sort(perm[cut:])
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise TrainingError(f"expected {n} labels, got shape {labels.shape}")
    train, test = [], []
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        cut = int(round(idx.size * train_fraction))
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass
class TrainingConfig:
    max_iters: int = 400
    spsa: SPSAConfig = field(default_factory=SPSAConfig)
    seed: int = 0
    shots: int | None = None
    loss: str = "logistic"
    encoding: str = "amplitude"
    encoding_opts: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if isinstance(self.spsa, dict):
            self.spsa = SPSAConfig(**self.spsa)
        if self.max_iters < 0:
            raise TrainingError("max_iters must be non-negative")
        if self.loss not in LOSSES:
            raise TrainingError(f"unknown loss {self.loss!r}")
        if self.encoding not in ENCODINGS:
            raise TrainingError(f"unknown encoding {self.encoding!r}")
        if self.shots is not None and self.shots < 1:
            raise TrainingError("shots must be positive")


@dataclass
class TrainedModel:
    layout: AnsatzLayout
    params: np.ndarray
    config: TrainingConfig = field(default_factory=TrainingConfig)
    history: list[dict] = field(default_factory=list)
    n_pixels: int | None = None

    def expvals(self, images, params=None) -> np.ndarray:
        states = encode_images(
            images, self.layout.n_qubits, self.config.encoding, **self.config.encoding_opts
        )
        return circuit_expvals(self.layout, self.params if params is None else params, states)

    def predict(self, images) -> np.ndarray:
        return labels_from_expvals(self.expvals(images))

    # checkpoint ---------------------------------------------------------

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        return {
            "format_version": FORMAT_VERSION,
            "layout": self.layout.describe(),
            "params": [float(x) for x in np.ravel(self.params)],
            "seed": self.config.seed,
            "n_pixels": self.n_pixels,
            "config": cfg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise TrainingError(f"unsupported checkpoint version {d.get('format_version')!r}")
        lay = d["layout"]
        layout = make_layout(lay["kind"], lay["n"], lay["n_V"], lay["b"], lay["L"])
        cfg = TrainingConfig(**d["config"])
        params = np.asarray(d["params"], dtype=float)
        if params.size != layout.n_params:
            raise TrainingError("checkpoint parameter count does not match its layout")
        return cls(layout, params, cfg, [], d.get("n_pixels"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def circuit_expvals(layout: AnsatzLayout, params, states: np.ndarray) -> np.ndarray:
    """``<Z>`` on the measured wire for a batch of input states."""
    circ = build_circuit(layout, params, cut=False)
    out = run(circ, initial_state=states)
    return np.atleast_1d(expval_z(out, circ.measured_wire))


def _shot_probs(expvals: np.ndarray, labels: np.ndarray, shots: int, seed_seq) -> np.ndarray:
    """Fraction of ``shots`` samples matching each label."""
    p = prob_correct(expvals, labels)
    out = np.empty_like(p)
    for i, (pi, child) in enumerate(zip(p, seed_seq.spawn(len(p)))):
        out[i] = np.random.default_rng(child).binomial(shots, pi) / shots
    return out


def predict_label(model: TrainedModel, pixels, shots: int | None = None, seed: int | None = None) -> int:
    """Label for one image: sign of ``<Z>``, or majority of ``shots`` samples."""
    e = float(model.expvals(np.asarray(pixels)[None])[0])
    if shots is None:
        return int(labels_from_expvals(e))
    if shots < 1:
        raise TrainingError("shots must be positive")
    p_plus = min(max((1.0 + e) / 2.0, 0.0), 1.0)
    n_plus = np.random.default_rng(seed).binomial(shots, p_plus)
    return 0 if 2 * n_plus >= shots else 1


def evaluate_accuracy(model: TrainedModel, images, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        raise TrainingError("cannot score an empty split")
    return float(np.mean(model.predict(images) == labels))


def train(
    layout: AnsatzLayout,
    dataset: LabeledDataset,
    cfg: TrainingConfig | None = None,
    on_iteration: Callable[[dict], None] | None = None,
) -> TrainedModel:
    """Minimise the configured loss over the training split with SPSA.

    Parameters start uniform in ``[0, 2 pi)``. After every step the loss
    and the train/test accuracies at the new parameters are recorded; the
    returned model holds the parameters with the lowest recorded training
    loss (the initial point counts too).
    """
    cfg = cfg or TrainingConfig()
    if len(dataset) == 0 or dataset.train.size == 0:
        raise TrainingError("training split is empty")
    if dataset.n_pixels > input_capacity(layout.n_qubits, cfg.encoding):
        raise TrainingError(
            f"{dataset.n_pixels} pixels do not fit a {layout.n_qubits}-qubit "
            f"{cfg.encoding} encoding"
        )
    rng = np.random.default_rng(cfg.seed)
    params = random_params(layout, rng)
    states = encode_images(dataset.images, layout.n_qubits, cfg.encoding, **cfg.encoding_opts)
    tr, te = dataset.train, dataset.test
    y = dataset.labels
    loss_fn = LOSSES[cfg.loss]

    def probs(theta, idx, k):
        e = circuit_expvals(layout, theta, states[idx])
        if cfg.shots is None:
            return prob_correct(e, y[idx])
        return _shot_probs(e, y[idx], cfg.shots, np.random.SeedSequence([cfg.seed, k]))

    counter = {"k": 0}

    def objective(theta):
        counter["k"] += 1
        return loss_fn(probs(theta, tr, counter["k"]))

    def snapshot(theta, it):
        e = circuit_expvals(layout, theta, states)
        pred = labels_from_expvals(e)
        rec = {
            "iter": it,
            "loss": loss_fn(prob_correct(e[tr], y[tr])),
            "train_acc": float(np.mean(pred[tr] == y[tr])),
            "test_acc": float(np.mean(pred[te] == y[te])) if te.size else None,
        }
        return rec

    model = TrainedModel(layout, params.copy(), cfg, [], dataset.n_pixels)
    best = snapshot(params, 0)
    best_params = params.copy()
    for k in range(cfg.max_iters):
        params = spsa_step(params, objective, k, cfg.spsa, rng, cfg.max_iters)
        rec = snapshot(params, k + 1)
        model.history.append(rec)
        if on_iteration is not None:
            on_iteration(rec)
        if rec["loss"] < best["loss"]:
            best, best_params = rec, params.copy()
    model.params = best_params
    log.debug("best loss %.6g at iteration %d", best["loss"], best["iter"])
    return model
