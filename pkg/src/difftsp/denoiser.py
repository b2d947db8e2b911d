"""Edge-scoring denoiser network, training loop and checkpoint format.

The network maps (instance, noisy edge field x_t, timestep t) to a soft
edge field: the per-edge probability that the edge belongs to the clean
tour.  It works on dense ``(n, n, H)`` edge tensors:

    h0_ij = relu(W0 f_ij + b0)
    m_i   = mean_{j != i} h_ij
    h1_ij = relu(W1 h0_ij + U1 (m0_i + m0_j) + b1)
    h2_ij = relu(W2 h1_ij + U2 (m1_i + m1_j) + b2)
    p_ij  = sigmoid(w . h2_ij + c)

Every term is symmetric in (i, j), so the output is symmetric and the
whole map is equivariant to relabelling the cities.  Gradients are
derived by hand.
"""

from __future__ import annotations

import io
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .core import Instance, as_tour, is_hamiltonian_adjacency, tour_to_adjacency
from .diffusion import forward_sample, make_schedule
from .exceptions import CheckpointFormatError, ConfigError, DataError, DimensionError
from .local_search import sample_equivalence_target

PARAM_ORDER = ("W0", "b0", "W1", "U1", "b1", "W2", "U2", "b2", "w_out", "b_out")
N_TIME_FREQS = 2
N_STATIC = 3
N_FEATURES = N_STATIC + 1 + 2 * N_TIME_FREQS
KNN = 5


class TargetMode(str, Enum):
    DIRAC = "dirac"
    EQUIVALENCE = "equivalence"


def _param_shapes(hidden: int) -> dict:
    F, H = N_FEATURES, hidden
    return {
        "W0": (F, H), "b0": (H,),
        "W1": (H, H), "U1": (H, H), "b1": (H,),
        "W2": (H, H), "U2": (H, H), "b2": (H,),
        "w_out": (H,), "b_out": (),
    }


@dataclass(eq=False)
class DenoiserParams:
    """Network weights in declared layer order plus the time scale T."""

    arrays: dict
    T: int

    @property
    def hidden(self) -> int:
        return self.arrays["b0"].shape[0]

    @classmethod
    def zeros(cls, hidden: int, T: int) -> "DenoiserParams":
        return cls({k: np.zeros(s) for k, s in _param_shapes(hidden).items()}, T)

    @classmethod
    def init(cls, hidden: int, T: int, seed: int = 0) -> "DenoiserParams":
        rng = np.random.default_rng(seed)
        arrays = {}
        for k, s in _param_shapes(hidden).items():
            if k.startswith("b"):
                arrays[k] = np.zeros(s)
            elif k == "w_out":
                arrays[k] = rng.normal(0.0, 0.1 / np.sqrt(hidden), s)
            else:
                fan_in = s[0]
                scale = np.sqrt(2.0 / fan_in) * (0.5 if k.startswith("U") else 1.0)
                arrays[k] = rng.normal(0.0, scale, s)
        return cls(arrays, T)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.arrays[k]) for k in PARAM_ORDER])

    @classmethod
    def from_flat(cls, flat: np.ndarray, hidden: int, T: int) -> "DenoiserParams":
        shapes = _param_shapes(hidden)
        arrays, pos = {}, 0
        for k in PARAM_ORDER:
            size = int(np.prod(shapes[k], dtype=np.int64))
            arrays[k] = np.array(flat[pos:pos + size], dtype=np.float64).reshape(shapes[k])
            pos += size
        if pos != len(flat):
            raise CheckpointFormatError(f"expected {pos} parameters, got {len(flat)}")
        return cls(arrays, T)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams({k: np.array(v) for k, v in self.arrays.items()}, self.T)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def static_features(instance: Instance) -> np.ndarray:
    """Instance-only edge features: scaled distance, inverse rank, k-NN flag.

    Ranks are taken per row and symmetrised by averaging both directions.
    """
    n = instance.n
    dist = instance.dist
    ranked = np.argsort(np.where(np.eye(n, dtype=bool), np.inf, dist), axis=1, kind="stable")
    rank = np.empty((n, n))
    rank[np.arange(n)[:, None], ranked] = np.arange(1, n + 1)
    inv = 1.0 / rank
    knn = (rank <= KNN).astype(np.float64)
    feats = np.stack([
        dist * np.sqrt(n),
        0.5 * (inv + inv.T),
        0.5 * (knn + knn.T),
    ], axis=-1)
    return feats


def time_embedding(t: float, T: int) -> np.ndarray:
    phase = np.pi * (float(t) / T) * 2.0 ** np.arange(N_TIME_FREQS) / 2.0
    return np.concatenate([np.sin(phase), np.cos(phase)])


def edge_features(static: np.ndarray, x_t: np.ndarray, t: float, T: int) -> np.ndarray:
    n = x_t.shape[0]
    temb = np.broadcast_to(time_embedding(t, T), (n, n, 2 * N_TIME_FREQS))
    return np.concatenate([static, (2.0 * x_t - 1.0)[..., None], temb], axis=-1)


def _forward(params: DenoiserParams, feats: np.ndarray):
    P = params.arrays
    n = feats.shape[0]
    off = (1.0 - np.eye(n))[..., None]
    scale = 1.0 / (n - 1)

    A0 = feats @ P["W0"] + P["b0"]
    H0 = np.maximum(A0, 0.0)
    M0 = (H0 * off).sum(axis=1) * scale
    S0 = M0[:, None, :] + M0[None, :, :]
    A1 = H0 @ P["W1"] + S0 @ P["U1"] + P["b1"]
    H1 = np.maximum(A1, 0.0)
    M1 = (H1 * off).sum(axis=1) * scale
    S1 = M1[:, None, :] + M1[None, :, :]
    A2 = H1 @ P["W2"] + S1 @ P["U2"] + P["b2"]
    H2 = np.maximum(A2, 0.0)
    logits = H2 @ P["w_out"] + P["b_out"]
    cache = (feats, off, scale, A0, H0, S0, A1, H1, S1, A2, H2)
    return logits, cache


def _backward(params: DenoiserParams, dlogits: np.ndarray, cache) -> dict:
    P = params.arrays
    feats, off, scale, A0, H0, S0, A1, H1, S1, A2, H2 = cache
    H = H2.shape[-1]
    g = {}

    g["w_out"] = np.einsum("ij,ijh->h", dlogits, H2)
    g["b_out"] = np.array(dlogits.sum())
    dA2 = dlogits[..., None] * P["w_out"] * (A2 > 0)
    g["W2"] = H1.reshape(-1, H).T @ dA2.reshape(-1, H)
    g["U2"] = S1.reshape(-1, H).T @ dA2.reshape(-1, H)
    g["b2"] = dA2.sum(axis=(0, 1))
    dS1 = dA2 @ P["U2"].T
    dM1 = dS1.sum(axis=1) + dS1.sum(axis=0)
    dH1 = dA2 @ P["W2"].T + off * (dM1 * scale)[:, None, :]

    dA1 = dH1 * (A1 > 0)
    g["W1"] = H0.reshape(-1, H).T @ dA1.reshape(-1, H)
    g["U1"] = S0.reshape(-1, H).T @ dA1.reshape(-1, H)
    g["b1"] = dA1.sum(axis=(0, 1))
    dS0 = dA1 @ P["U1"].T
    dM0 = dS0.sum(axis=1) + dS0.sum(axis=0)
    dH0 = dA1 @ P["W1"].T + off * (dM0 * scale)[:, None, :]

    dA0 = dH0 * (A0 > 0)
    g["W0"] = feats.reshape(-1, feats.shape[-1]).T @ dA0.reshape(-1, H)
    g["b0"] = dA0.sum(axis=(0, 1))
    return g


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check_inputs(instance: Instance, x_t: np.ndarray) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (instance.n, instance.n):
        raise DimensionError(f"x_t has shape {x_t.shape}, instance has n={instance.n}")
    return x_t


def denoise(params: DenoiserParams, instance: Instance, x_t: np.ndarray, t: int,
            static: np.ndarray | None = None) -> np.ndarray:
    """Soft estimate of the clean edge field; symmetric, zero diagonal."""
    x_t = _check_inputs(instance, x_t)
    if static is None:
        static = static_features(instance)
    logits, _ = _forward(params, edge_features(static, x_t, t, params.T))
    probs = _sigmoid(0.5 * (logits + logits.T))
    np.fill_diagonal(probs, 0.0)
    return probs


def sample_loss_and_grad(params: DenoiserParams, instance: Instance, x_t: np.ndarray, t: int,
                         target: np.ndarray, pos_weight: float | None = None,
                         static: np.ndarray | None = None):
    """Weighted per-edge binary cross-entropy over unordered pairs, and its gradient.

    Targets may be soft; positive-class weighting applies only to 0/1
    targets and ``pos_weight=1.0`` disables it.
    """
    x_t = _check_inputs(instance, x_t)
    target = np.asarray(target, dtype=np.float64)
    n = instance.n
    if static is None:
        static = static_features(instance)
    raw, cache = _forward(params, edge_features(static, x_t, t, params.T))
    logits = 0.5 * (raw + raw.T)
    if pos_weight is None:
        pos_weight = max(1.0, (n - 2) / 2.0)
    w = 1.0 + (pos_weight - 1.0) * target
    off = 1.0 - np.eye(n)
    n_pairs = n * (n - 1) / 2.0
    # each unordered pair appears twice off the diagonal
    bce = np.logaddexp(0.0, logits) - target * logits
    loss = float((w * bce * off).sum() / (2.0 * n_pairs))
    dlogits = w * (_sigmoid(logits) - target) * off / (2.0 * n_pairs)
    return loss, _backward(params, 0.5 * (dlogits + dlogits.T), cache)


def loss_and_grad(params: DenoiserParams, batch, pos_weight: float | None = None):
    """Mean loss and gradient over a batch of (instance, x_t, t, target)."""
    total = 0.0
    grad = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    for item in batch:
        instance, x_t, t, target = item[:4]
        static = item[4] if len(item) > 4 else None
        loss, g = sample_loss_and_grad(params, instance, x_t, t, target, pos_weight, static)
        total += loss
        for k in grad:
            grad[k] += g[k]
    m = max(len(batch), 1)
    return total / m, {k: v / m for k, v in grad.items()}


@dataclass
class TrainingConfig:
    target_mode: TargetMode = TargetMode.DIRAC
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 8
    seed: int = 0
    n: int = 20
    dataset_size: int = 0
    hidden: int = 32
    T: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    pos_weight: float | None = None
    redraw: str = "epoch"  # or "step": fresh equivalence target per sample
    grad_clip: float = 5.0

    def __post_init__(self):
        self.target_mode = TargetMode(self.target_mode)
        if self.target_mode is TargetMode.EQUIVALENCE and self.n < 5:
            raise ConfigError("equivalence-class targets need n >= 5")
        if self.redraw not in ("epoch", "step"):
            raise ConfigError(f"redraw must be 'epoch' or 'step', got {self.redraw!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.hidden < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and hidden >= 1 are required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["target_mode"] = self.target_mode.value
        return d


@dataclass(eq=False)
class Checkpoint:
    params: DenoiserParams
    config: TrainingConfig
    loss_curve: list = field(default_factory=list)
    wall_time: float = 0.0
    targets_seen: int = 0

    @property
    def T(self) -> int:
        return self.params.T

    def denoiser(self) -> "NetworkDenoiser":
        return NetworkDenoiser(self.params)


class NetworkDenoiser:
    """Callable wrapper that caches instance features between calls."""

    def __init__(self, params: DenoiserParams):
        self.params = params
        self.T = params.T
        self._cached = (None, None)

    def __call__(self, instance: Instance, x_t: np.ndarray, t: int) -> np.ndarray:
        if self._cached[0] is not instance:
            self._cached = (instance, static_features(instance))
        return denoise(self.params, instance, x_t, t, static=self._cached[1])


class OracleDenoiser:
    """Test double returning the known optimal tour, ignoring x_t and t."""

    T = None

    def __init__(self, known_optimal, eps: float = 1e-6):
        self.tour = as_tour(known_optimal)
        self.eps = eps

    def __call__(self, instance: Instance, x_t: np.ndarray, t: int) -> np.ndarray:
        return oracle_denoise(instance, x_t, t, self.tour, self.eps)


def oracle_denoise(instance: Instance, x_t, t, known_optimal, eps: float = 1e-6) -> np.ndarray:
    tour = as_tour(known_optimal)
    if tour.n != instance.n:
        raise DimensionError(f"tour has {tour.n} cities, instance has {instance.n}")
    adj = tour_to_adjacency(tour)
    probs = np.where(adj > 0.5, 1.0 - eps, eps)
    np.fill_diagonal(probs, 0.0)
    return probs


def _validate_dataset(config: TrainingConfig, dataset):
    if not dataset:
        raise ConfigError("training dataset is empty")
    out = []
    for instance, tour in dataset:
        if instance.n != config.n:
            raise DataError(f"instance {instance.id} has n={instance.n}, config expects {config.n}")
        try:
            tour = as_tour(tour)
        except ValueError as exc:
            raise DataError(f"label of {instance.id} is not a Hamiltonian tour: {exc}") from exc
        if tour.n != instance.n or not is_hamiltonian_adjacency(tour_to_adjacency(tour)):
            raise DataError(f"label of {instance.id} is not a Hamiltonian tour")
        out.append((instance, tour))
    return out


def train(config: TrainingConfig, dataset, init: Checkpoint | None = None, log=None) -> Checkpoint:
    """Fit the denoiser on (instance, optimal tour) pairs with momentum SGD.

    Each sample draws t uniformly from 1..T and noises the target
    adjacency to x_t.  In equivalence mode the target is a two-move
    perturbation of the label, redrawn every epoch (or every sample).
    Passing ``init`` continues from an earlier checkpoint.
    """
    dataset = _validate_dataset(config, dataset)
    config.dataset_size = len(dataset)
    schedule = make_schedule(config.T, config.beta_min, config.beta_max, 1)
    rng = np.random.default_rng(config.seed)
    if init is not None:
        if init.params.T != config.T:
            raise ConfigError(f"checkpoint has T={init.params.T}, config has T={config.T}")
        params = init.params.copy()
        config.hidden = params.hidden
    else:
        params = DenoiserParams.init(config.hidden, config.T, seed=config.seed)
    velocity = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    statics = [static_features(inst) for inst, _ in dataset]
    labels = [tour_to_adjacency(tour) for _, tour in dataset]
    loss_curve = list(init.loss_curve) if init is not None else []
    targets_seen = set()
    equivalence = config.target_mode is TargetMode.EQUIVALENCE
    start = time.perf_counter()

    for epoch in range(config.epochs):
        if equivalence and config.redraw == "epoch":
            targets = [tour_to_adjacency(sample_equivalence_target(tour, rng)) for _, tour in dataset]
        else:
            targets = labels
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        for b in range(0, len(order), config.batch_size):
            batch = []
            for idx in order[b:b + config.batch_size]:
                instance, tour = dataset[idx]
                target = targets[idx]
                if equivalence and config.redraw == "step":
                    target = tour_to_adjacency(sample_equivalence_target(tour, rng))
                if equivalence:
                    targets_seen.add((int(idx), target.tobytes()))
                t = int(rng.integers(1, config.T + 1))
                x_t = forward_sample(target, t, schedule, rng)
                batch.append((instance, x_t, t, target, statics[idx]))
            loss, grad = loss_and_grad(params, batch, config.pos_weight)
            norm = np.sqrt(sum(float((g * g).sum()) for g in grad.values()))
            clip = 1.0 if norm <= config.grad_clip else config.grad_clip / norm
            for k in PARAM_ORDER:
                velocity[k] = config.momentum * velocity[k] - config.learning_rate * clip * grad[k]
                params.arrays[k] = params.arrays[k] + velocity[k]
            epoch_loss += loss * len(batch)
        loss_curve.append(epoch_loss / len(dataset))
        if not params.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        if log is not None:
            log(epoch, loss_curve[-1])

    return Checkpoint(params, config, loss_curve, time.perf_counter() - start, len(targets_seen))


# Checkpoint file layout (all integers little-endian):
#   8 bytes   magic b"DTSPCKPT"
#   uint32    format version
#   uint32    hidden width
#   uint32    T
#   uint64    header JSON length L
#   L bytes   UTF-8 JSON: {"config": ..., "loss_curve": [...], "wall_time": ...,
#             "targets_seen": ..., "param_order": [...], "param_shapes": {...}}
#   uint64    parameter count P
#   P * 8     float64 '<f8' parameters, concatenated in param_order
MAGIC = b"DTSPCKPT"
FORMAT_VERSION = 1


def save_checkpoint(checkpoint: Checkpoint, sink) -> None:
    """Write ``checkpoint`` to a path or a binary stream."""
    if isinstance(sink, str) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as fh:
            return save_checkpoint(checkpoint, fh)
    params = checkpoint.params
    header = json.dumps({
        "config": checkpoint.config.to_dict(),
        "loss_curve": [float(v) for v in checkpoint.loss_curve],
        "wall_time": float(checkpoint.wall_time),
        "targets_seen": int(checkpoint.targets_seen),
        "param_order": list(PARAM_ORDER),
        "param_shapes": {k: list(s) for k, s in _param_shapes(params.hidden).items()},
    }, sort_keys=True).encode("utf-8")
    flat = params.flat().astype("<f8")
    sink.write(MAGIC)
    sink.write(struct.pack("<III", FORMAT_VERSION, params.hidden, params.T))
    sink.write(struct.pack("<Q", len(header)))
    sink.write(header)
    sink.write(struct.pack("<Q", flat.size))
    sink.write(flat.tobytes())


def _read_exact(source, size: int) -> bytes:
    data = source.read(size)
    if len(data) != size:
        raise CheckpointFormatError("truncated checkpoint")
    return data


def load_checkpoint(source) -> Checkpoint:
    """Read a checkpoint from a path, a binary stream or raw bytes."""
    if isinstance(source, str) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            return load_checkpoint(fh)
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if source.read(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError("not a difftsp checkpoint (bad magic)")
    version, hidden, T = struct.unpack("<III", _read_exact(source, 12))
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<Q", _read_exact(source, 8))
    try:
        header = json.loads(_read_exact(source, hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"corrupt checkpoint header: {exc}") from None
    (count,) = struct.unpack("<Q", _read_exact(source, 8))
    raw = source.read(8 * count)
    if len(raw) != 8 * count:
        raise CheckpointFormatError("truncated parameter block")
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    params = DenoiserParams.from_flat(flat, hidden, T)
    config = TrainingConfig(**header["config"])
    return Checkpoint(params, config, header["loss_curve"], header["wall_time"], header["targets_seen"])
