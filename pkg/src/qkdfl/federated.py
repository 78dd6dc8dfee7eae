"""Federated rounds with per-round key establishment and QBER abort.

One key-agreement session runs per round between the client cohort and a
key authority; the aggregation server never sees the round seed.  If the
measured QBER reaches the abort threshold the round is consumed with the
global model frozen: no training, no key material used, no bytes moved.
Otherwise every client trains locally, masks its upload (in the masked
modes) and the server averages.

Aggregation modes:
    plain        uploads are the raw local parameters
    classical_sa pairwise masking, round seed from a seeded classical PRG
    qkd_sa       pairwise masking, round seed from the BB84 session key

All per-round and per-client randomness is derived from one master seed
through labeled seed paths, so runs are reproducible and the two masked
modes train identically to plain given the same master seed.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import params as pvops
from .bits import random_bits
from .datasets import ChannelSample, RadarSample
from .errors import UndefinedProxyError
from .masking import MaskingContext, aggregate, apply_pairwise_masks, leakage_proxies
from .metrics import eval_channel, eval_radar
from .models import ModelSpec, TASK_CHANNEL
from .params import ParamVec
from .qkd import BB84Config, run_bb84
from .training import train_local

MODES = ("plain", "classical_sa", "qkd_sa")
MASKED_MODES = ("classical_sa", "qkd_sa")

STATUS_SECURE = "SECURE"
STATUS_ABORTED = "ABORTED"

# Seed-path tags; fixed constants keep derived streams disjoint.
_TAG_QKD = 1
_TAG_ROUND_KEY = 2
_TAG_TRAIN = 3


def derive_seed(master_seed: int, *path: int) -> int:
    """Stable 64-bit seed for a labeled point in the run's seed tree."""
    ss = np.random.SeedSequence([int(master_seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RoundConfig:
    """Everything one round needs besides the model state and the shards."""

    num_clients: int
    epochs: int
    mode: str
    model: ModelSpec
    learning_rate: float
    batch_size: int
    master_seed: int
    round_index: int = 0
    qber_threshold: float = 0.08
    bb84: BB84Config = field(default_factory=BB84Config)
    mask_scale: float = 1e-3
    key_bits: int = 256

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode in MASKED_MODES and self.num_clients < 2:
            raise ValueError("masked modes need num_clients >= 2")
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not 0.0 < self.qber_threshold < 1.0:
            raise ValueError("qber_threshold must be in (0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class RoundReport:
    """Per-round outcome: status, key statistics, quality and traffic."""

    round_index: int
    mode: str
    status: str
    qber: float | None
    sifted_len: int | None
    final_len: int | None
    utility: dict
    recon_error: float | None
    leakage: list[tuple[float | None, float | None]]
    bytes_down: int
    bytes_up: int

    def mean_cosine(self) -> float | None:
        vals = [c for c, _ in self.leakage if c is not None]
        return float(np.mean(vals)) if vals else None

    def mean_pearson(self) -> float | None:
        vals = [p for _, p in self.leakage if p is not None]
        return float(np.mean(vals)) if vals else None

    def to_json_dict(self) -> dict:
        return {
            "round": self.round_index,
            "mode": self.mode,
            "status": self.status,
            "qber": self.qber,
            "sifted_len": self.sifted_len,
            "final_len": self.final_len,
            "utility": self.utility,
            "recon_error": self.recon_error,
            "leakage_per_client": [
                {"cosine": c, "pearson": p} for c, p in self.leakage
            ],
            "leakage_mean_cosine": self.mean_cosine(),
            "leakage_mean_pearson": self.mean_pearson(),
            "bytes_down": self.bytes_down,
            "bytes_up": self.bytes_up,
        }


def _evaluate(cfg: RoundConfig, pv: ParamVec, val_data: list | None) -> dict:
    if not val_data:
        return {}
    if cfg.model.task == TASK_CHANNEL:
        return {"nmse": eval_channel(cfg.model, pv, val_data)}
    acc, miou = eval_radar(cfg.model, pv, val_data)
    return {"accuracy": acc, "miou": miou}


def _round_seed_bits(cfg: RoundConfig, session_key: np.ndarray | None) -> np.ndarray:
    if cfg.mode == "qkd_sa":
        return session_key
    prg = np.random.default_rng(
        derive_seed(cfg.master_seed, cfg.round_index, _TAG_ROUND_KEY)
    )
    return random_bits(prg, 256)


def run_round(
    global_params: ParamVec,
    shards: list[list],
    cfg: RoundConfig,
    val_data: list | None = None,
) -> tuple[ParamVec, RoundReport]:
    """Execute one federated round; returns (new global params, report)."""
    if len(shards) != cfg.num_clients:
        raise ValueError(
            f"expected {cfg.num_clients} shards, got {len(shards)}"
        )

    qber = sifted_len = final_len = None
    session_key = None
    if cfg.mode == "qkd_sa":
        bb84 = dataclasses.replace(
            cfg.bb84,
            rng_seed=derive_seed(cfg.master_seed, cfg.round_index, _TAG_QKD),
        )
        session = run_bb84(bb84)
        qber, sifted_len, final_len = session.qber, session.sifted_len, session.final_len
        if session.qber >= cfg.qber_threshold:
            report = RoundReport(
                round_index=cfg.round_index,
                mode=cfg.mode,
                status=STATUS_ABORTED,
                qber=qber,
                sifted_len=sifted_len,
                final_len=final_len,
                utility=_evaluate(cfg, global_params, val_data),
                recon_error=None,
                leakage=[],
                bytes_down=0,
                bytes_up=0,
            )
            return global_params, report
        session_key = session.key

    updates = [
        train_local(
            cfg.model,
            global_params,
            shards[k],
            cfg.epochs,
            cfg.learning_rate,
            cfg.batch_size,
            seed=derive_seed(cfg.master_seed, cfg.round_index, _TAG_TRAIN, k),
        )
        for k in range(cfg.num_clients)
    ]

    if cfg.mode in MASKED_MODES:
        ctx = MaskingContext(
            round_seed=_round_seed_bits(cfg, session_key),
            round_index=cfg.round_index,
            num_clients=cfg.num_clients,
            mask_scale=cfg.mask_scale,
            key_bits=cfg.key_bits,
        )
        masked = [
            apply_pairwise_masks(updates[k], k, ctx) for k in range(cfg.num_clients)
        ]
        uploads = [m.params for m in masked]
        new_global = aggregate(masked)
        recon_error = pvops.max_abs_diff(pvops.mean(updates), new_global)
    else:
        uploads = updates
        new_global = pvops.mean(updates)
        recon_error = 0.0

    leakage = []
    for k in range(cfg.num_clients):
        true_delta = pvops.sub(updates[k], global_params)
        masked_delta = pvops.sub(uploads[k], global_params)
        try:
            leakage.append(leakage_proxies(true_delta, masked_delta))
        except UndefinedProxyError:
            leakage.append((None, None))

    nbytes = global_params.nbytes_serialized
    report = RoundReport(
        round_index=cfg.round_index,
        mode=cfg.mode,
        status=STATUS_SECURE,
        qber=qber,
        sifted_len=sifted_len,
        final_len=final_len,
        utility=_evaluate(cfg, new_global, val_data),
        recon_error=recon_error,
        leakage=leakage,
        bytes_down=nbytes,
        bytes_up=cfg.num_clients * nbytes,
    )
    return new_global, report


def run_training(
    initial: ParamVec,
    num_rounds: int,
    cfg: RoundConfig,
    shards: list[list],
    val_data: list | None = None,
) -> tuple[ParamVec, list[RoundReport]]:
    """Fold run_round over `num_rounds` rounds starting from `initial`."""
    if num_rounds < 1:
        raise ValueError("num_rounds must be >= 1")
    current = initial
    reports = []
    for r in range(num_rounds):
        round_cfg = dataclasses.replace(cfg, round_index=r)
        current, report = run_round(current, shards, round_cfg, val_data)
        reports.append(report)
    return current, reports


def _default_skew_feature(sample, index: int) -> float:
    if isinstance(sample, ChannelSample):
        return float(np.mean(sample.truth**2))
    if isinstance(sample, RadarSample):
        return float(np.count_nonzero(sample.labels) / sample.labels.size)
    return float(index)


def partition_non_iid(
    dataset: list, num_clients: int, skew: float, seed: int, feature=None
) -> list[list]:
    """Split a dataset into disjoint, covering, feature-skewed shards.

    Shard sizes follow a Dirichlet(skew, ..., skew) draw (largest-remainder
    rounding, minimum one sample per shard); samples are dealt contiguously
    in feature-sorted order, so low concentration also skews what each
    client sees, not just how much.  skew = inf gives a balanced split.
    """
    n = len(dataset)
    if n < num_clients:
        raise ValueError(f"dataset of {n} samples cannot feed {num_clients} clients")
    if skew <= 0 and not math.isinf(skew):
        raise ValueError("skew must be positive")
    rng = np.random.default_rng(seed)

    if math.isinf(skew):
        props = np.full(num_clients, 1.0 / num_clients)
    else:
        props = rng.dirichlet(np.full(num_clients, skew))

    raw = props * n
    sizes = np.floor(raw).astype(int)
    remainder = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    # Every shard nonempty: move singles from the largest shards.
    while (sizes == 0).any():
        sizes[np.argmax(sizes)] -= 1
        sizes[np.argmin(sizes)] += 1

    key = feature or _default_skew_feature
    feats = np.array([key(s, i) for i, s in enumerate(dataset)])
    sorted_idx = np.argsort(feats, kind="stable")

    shards = []
    cursor = 0
    for size in sizes:
        shard_idx = sorted_idx[cursor : cursor + size]
        shards.append([dataset[i] for i in shard_idx])
        cursor += size
    return shards
