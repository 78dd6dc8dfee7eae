"""Declarative experiment runner and report emitter.

Three experiment families:

    A  utility/communication vs. client count, per aggregation mode
    B  threat-model arms: plain baseline, secure mode, and an
       intercept-resend attacker in every round
    C  key-agreement noise sweep: pooled QBER and abort rate per noise level

A run directory contains a manifest (resolved config echo + hash + CSV
schemas), JSON-lines round reports (A/B), a run summary JSON, and one or
two CSV summary tables.  Every emitted row carries the config hash, all
randomness descends from the single config seed, and rows are written in
a fixed cell order, so identical configs reproduce byte-identical output.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import gen_channel_dataset, gen_radar_dataset
from .errors import ConfigError
from .federated import (
    MODES,
    STATUS_ABORTED,
    STATUS_SECURE,
    RoundConfig,
    derive_seed,
    partition_non_iid,
    run_training,
)
from .models import ModelSpec, TASK_CHANNEL, TASK_RADAR, init_params
from .qkd import BB84Config, run_bb84

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXPERIMENTS = ("A", "B", "C")
TASKS = (TASK_CHANNEL, TASK_RADAR)

# Seed-path tags for run-level derivations (round/client tags live in federated).
_TAG_TRAIN_DATA = 100
_TAG_VAL_DATA = 101
_TAG_PARTITION = 102
_TAG_FL_MASTER = 103
_TAG_MODEL_INIT = 104
_TAG_SWEEP = 105

CSV_SCHEMAS = {
    "exp_a_summary.csv": [
        "schema_version", "config_hash", "experiment", "task", "clients", "mode",
        "rounds_total", "rounds_secure", "rounds_aborted",
        "final_nmse", "final_accuracy", "final_miou",
        "downlink_bytes", "uplink_bytes",
    ],
    "exp_b_rounds.csv": [
        "schema_version", "config_hash", "arm", "mode", "eve", "round",
        "status", "qber", "nmse", "accuracy", "miou",
    ],
    "exp_b_summary.csv": [
        "schema_version", "config_hash", "arm", "mode", "eve",
        "rounds", "secure", "aborted", "recovered", "mean_qber",
        "retained_nmse", "retained_accuracy", "retained_miou",
    ],
    "exp_c_sweep.csv": [
        "schema_version", "config_hash", "eta", "sessions",
        "mean_qber", "abort_rate", "qber_threshold", "mean_sifted_len",
    ],
    "leakage.csv": [
        "schema_version", "config_hash", "cell", "round", "qber",
        "nmse", "accuracy", "miou", "mean_cosine", "mean_pearson",
    ],
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one run; every field is echoed to disk."""

    experiment: str
    task: str
    seed: int
    out_dir: str | None = None
    clients: tuple[int, ...] = (3, 10, 20)
    rounds: int = 5
    modes: tuple[str, ...] = ("plain", "classical_sa", "qkd_sa")
    eve: bool = False
    epochs: int = 3
    batch_size: int = 16
    learning_rate: float = 1e-3
    qber_threshold: float = 0.08
    mask_scale: float = 1e-3
    key_bits: int = 256
    raw_key_len: int = 2000
    pa_ratio: float = 0.8
    depolarize_prob: float = 0.0
    train_samples: int = 96
    val_samples: int = 32
    snr_db: float = 10.0
    channel_dims: tuple[int, int] = (48, 14)
    radar_size: int = 32
    channel_widths: tuple[int, int] = (12, 8)
    encoder_filters: tuple[int, int, int] = (8, 16, 32)
    bottleneck_filters: int = 64
    partition_skew: float = 1.0
    noise_grid: tuple[float, ...] = (0.0, 0.05, 0.10, 0.15, 0.20)
    sessions_per_point: int = 1000

    # Per-task defaults applied when the config file omits the field.
    _TASK_DEFAULTS = {
        TASK_CHANNEL: {"batch_size": 16, "learning_rate": 1e-3},
        TASK_RADAR: {"batch_size": 4, "learning_rate": 1e-4,
                     "train_samples": 48, "val_samples": 16},
    }

    @classmethod
    def from_dict(cls, raw: dict, source: str = "config") -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: expected a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(f"{source}.{key}: unknown field")
        for required in ("experiment", "task", "seed"):
            if required not in raw:
                raise ConfigError(f"{source}.{required}: required field missing")

        merged = dict(raw)
        task = merged.get("task")
        if task in cls._TASK_DEFAULTS:
            for key, val in cls._TASK_DEFAULTS[task].items():
                merged.setdefault(key, val)

        tuple_fields = {
            "clients", "modes", "noise_grid", "channel_dims",
            "channel_widths", "encoder_filters",
        }
        for key in tuple_fields & set(merged):
            if not isinstance(merged[key], (list, tuple)):
                raise ConfigError(f"{source}.{key}: expected a list")
            merged[key] = tuple(merged[key])

        cfg = cls(**merged)
        cfg._validate(source)
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such config file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, source=str(path))

    def _validate(self, source: str) -> None:
        def check(cond: bool, field: str, msg: str) -> None:
            if not cond:
                raise ConfigError(f"{source}.{field}: {msg}")

        check(self.experiment in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")
        check(self.task in TASKS, "task", f"must be one of {TASKS}")
        check(isinstance(self.seed, int), "seed", "must be an integer")
        check(len(self.clients) > 0, "clients", "must be nonempty")
        for i, k in enumerate(self.clients):
            check(isinstance(k, int) and k >= 2, f"clients[{i}]", "must be an integer >= 2")
        check(self.rounds >= 1, "rounds", "must be >= 1")
        check(len(self.modes) > 0, "modes", "must be nonempty")
        for i, m in enumerate(self.modes):
            check(m in MODES, f"modes[{i}]", f"must be one of {MODES}")
        check(self.epochs >= 0, "epochs", "must be >= 0")
        check(self.batch_size >= 1, "batch_size", "must be >= 1")
        check(self.learning_rate > 0, "learning_rate", "must be positive")
        check(0.0 < self.qber_threshold < 1.0, "qber_threshold", "must be in (0, 1)")
        check(self.mask_scale >= 0.0, "mask_scale", "must be non-negative")
        check(self.key_bits >= 1, "key_bits", "must be >= 1")
        check(self.raw_key_len >= 64, "raw_key_len", "must be >= 64")
        check(0.0 < self.pa_ratio <= 1.0, "pa_ratio", "must be in (0, 1]")
        check(0.0 <= self.depolarize_prob <= 1.0, "depolarize_prob", "must be in [0, 1]")
        check(self.train_samples >= max(self.clients), "train_samples",
              "must cover the largest client count")
        check(self.val_samples >= 1, "val_samples", "must be >= 1")
        check(len(self.noise_grid) > 0, "noise_grid", "must be nonempty")
        for i, eta in enumerate(self.noise_grid):
            check(0.0 <= eta <= 1.0, f"noise_grid[{i}]", "must be in [0, 1]")
        check(self.sessions_per_point >= 1, "sessions_per_point", "must be >= 1")
        check(self.partition_skew > 0 or np.isinf(self.partition_skew),
              "partition_skew", "must be positive")
        check(self.radar_size >= 16, "radar_size", "must be >= 16")
        check(self.radar_size % 8 == 0, "radar_size", "must be divisible by 8")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key, val in out.items():
            if isinstance(val, tuple):
                out[key] = list(val)
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            task=self.task,
            channel_widths=self.channel_widths,
            encoder_filters=self.encoder_filters,
            bottleneck_filters=self.bottleneck_filters,
            init_seed=derive_seed(self.seed, _TAG_MODEL_INIT),
        )

    def bb84_template(self, eve: bool) -> BB84Config:
        return BB84Config(
            raw_len=self.raw_key_len,
            pa_ratio=self.pa_ratio,
            depolarize_prob=self.depolarize_prob,
            eve_present=eve,
        )

    def make_datasets(self) -> tuple[list, list]:
        train_seed = derive_seed(self.seed, _TAG_TRAIN_DATA)
        val_seed = derive_seed(self.seed, _TAG_VAL_DATA)
        if self.task == TASK_CHANNEL:
            train = gen_channel_dataset(
                self.train_samples, self.snr_db, self.channel_dims, train_seed
            )
            val = gen_channel_dataset(
                self.val_samples, self.snr_db, self.channel_dims, val_seed
            )
        else:
            train = gen_radar_dataset(self.train_samples, self.radar_size, train_seed)
            val = gen_radar_dataset(self.val_samples, self.radar_size, val_seed)
        return train, val

    def round_config(self, num_clients: int, mode: str, eve: bool) -> RoundConfig:
        return RoundConfig(
            num_clients=num_clients,
            epochs=self.epochs,
            mode=mode,
            model=self.model_spec(),
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            master_seed=derive_seed(self.seed, _TAG_FL_MASTER),
            qber_threshold=self.qber_threshold,
            bb84=self.bb84_template(eve),
            mask_scale=self.mask_scale,
            key_bits=self.key_bits,
        )


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


def _utility_columns(utility: dict) -> dict:
    return {
        "nmse": utility.get("nmse"),
        "accuracy": utility.get("accuracy"),
        "miou": utility.get("miou"),
    }


def _run_fl_cell(args) -> tuple[dict, list[dict]]:
    """One (clients, mode, eve) cell: R federated rounds from a fresh model."""
    cfg, num_clients, mode, eve = args
    train, val = cfg.make_datasets()
    shards = partition_non_iid(
        train, num_clients, cfg.partition_skew,
        derive_seed(cfg.seed, _TAG_PARTITION, num_clients),
    )
    rcfg = cfg.round_config(num_clients, mode, eve)
    initial = init_params(cfg.model_spec())
    _, reports = run_training(initial, cfg.rounds, rcfg, shards, val)

    round_dicts = []
    for rep in reports:
        d = rep.to_json_dict()
        d["cell"] = {"clients": num_clients, "mode": mode, "eve": eve}
        d["config_hash"] = cfg.config_hash()
        round_dicts.append(d)

    summary = {
        "clients": num_clients,
        "mode": mode,
        "eve": eve,
        "rounds_total": len(reports),
        "rounds_secure": sum(r.status == STATUS_SECURE for r in reports),
        "rounds_aborted": sum(r.status == STATUS_ABORTED for r in reports),
        "final_utility": reports[-1].utility,
        "downlink_bytes": sum(r.bytes_down for r in reports),
        "uplink_bytes": sum(r.bytes_up for r in reports),
        "qbers": [r.qber for r in reports],
        "statuses": [r.status for r in reports],
    }
    return summary, round_dicts


def _map_cells(fn, cells, jobs: int):
    if jobs > 1 and len(cells) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def run_experiment_a(cfg: ExperimentConfig, jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """Utility and communication vs. client count; returns (csv rows, round dicts)."""
    chash = cfg.config_hash()
    cells = [(cfg, k, mode, cfg.eve) for k in cfg.clients for mode in cfg.modes]
    results = _map_cells(_run_fl_cell, cells, jobs)

    rows, all_rounds = [], []
    for summary, round_dicts in results:
        all_rounds.extend(round_dicts)
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "config_hash": chash,
            "experiment": "A",
            "task": cfg.task,
            "clients": summary["clients"],
            "mode": summary["mode"],
            "rounds_total": summary["rounds_total"],
            "rounds_secure": summary["rounds_secure"],
            "rounds_aborted": summary["rounds_aborted"],
            "final_nmse": _utility_columns(summary["final_utility"])["nmse"],
            "final_accuracy": _utility_columns(summary["final_utility"])["accuracy"],
            "final_miou": _utility_columns(summary["final_utility"])["miou"],
            "downlink_bytes": summary["downlink_bytes"],
            "uplink_bytes": summary["uplink_bytes"],
        })
    return rows, all_rounds


# Fixed threat-model arms; the attack arm always runs the masked mode under Eve.
_B_ARMS = (
    ("baseline", "plain", False),
    ("secure", "qkd_sa", False),
    ("eve_all_rounds", "qkd_sa", True),
)


def run_experiment_b(cfg: ExperimentConfig, jobs: int = 1):
    """Threat-model outcomes; returns (round rows, summary rows, round dicts)."""
    chash = cfg.config_hash()
    num_clients = cfg.clients[0]
    cells = [(cfg, num_clients, mode, eve) for _, mode, eve in _B_ARMS]
    results = _map_cells(_run_fl_cell, cells, jobs)

    round_rows, summary_rows, all_rounds = [], [], []
    for (arm, mode, eve), (summary, round_dicts) in zip(_B_ARMS, results):
        for d in round_dicts:
            d["cell"]["arm"] = arm
        all_rounds.extend(round_dicts)
        for d in round_dicts:
            util = _utility_columns(d["utility"])
            round_rows.append({
                "schema_version": SCHEMA_VERSION,
                "config_hash": chash,
                "arm": arm,
                "mode": mode,
                "eve": eve,
                "round": d["round"],
                "status": d["status"],
                "qber": d["qber"],
                "nmse": util["nmse"],
                "accuracy": util["accuracy"],
                "miou": util["miou"],
            })
        qbers = [q for q in summary["qbers"] if q is not None]
        retained = _utility_columns(summary["final_utility"])
        summary_rows.append({
            "schema_version": SCHEMA_VERSION,
            "config_hash": chash,
            "arm": arm,
            "mode": mode,
            "eve": eve,
            "rounds": summary["rounds_total"],
            "secure": summary["rounds_secure"],
            "aborted": summary["rounds_aborted"],
            "recovered": 0,  # aborted rounds are consumed, never retried
            "mean_qber": float(np.mean(qbers)) if qbers else None,
            "retained_nmse": retained["nmse"],
            "retained_accuracy": retained["accuracy"],
            "retained_miou": retained["miou"],
        })
    return round_rows, summary_rows, all_rounds


def _run_sweep_point(args) -> dict:
    cfg, point_index, eta = args
    sessions = []
    for s in range(cfg.sessions_per_point):
        bb84 = BB84Config(
            raw_len=cfg.raw_key_len,
            pa_ratio=cfg.pa_ratio,
            depolarize_prob=eta,
            eve_present=cfg.eve,
            rng_seed=derive_seed(cfg.seed, _TAG_SWEEP, point_index, s),
        )
        sessions.append(run_bb84(bb84))
    qbers = np.array([s.qber for s in sessions])
    sift = np.array([s.sifted_len for s in sessions])
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.config_hash(),
        "eta": eta,
        "sessions": len(sessions),
        "mean_qber": float(qbers.mean()),
        "abort_rate": float(np.mean(qbers >= cfg.qber_threshold)),
        "qber_threshold": cfg.qber_threshold,
        "mean_sifted_len": float(sift.mean()),
    }


def run_experiment_c(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Noise sweep over fresh key-agreement sessions; returns csv rows."""
    cells = [(cfg, i, eta) for i, eta in enumerate(cfg.noise_grid)]
    return _map_cells(_run_sweep_point, cells, jobs)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, name: str, rows: list[dict]) -> None:
    columns = CSV_SCHEMAS[name]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(row.get(col)) for col in columns])


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_jsonl(path: Path, dicts: list[dict]) -> None:
    with open(path, "w") as fh:
        for d in dicts:
            fh.write(json.dumps(d, sort_keys=True, separators=(",", ": ")))
            fh.write("\n")


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    """Run the configured experiment and persist all outputs under out_dir.

    Returns the manifest dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    files = ["manifest.json", "summary.json"]
    summary: dict = {"config": cfg.to_dict(), "config_hash": chash}

    if cfg.experiment == "A":
        rows, rounds = run_experiment_a(cfg, jobs)
        write_csv(out / "exp_a_summary.csv", "exp_a_summary.csv", rows)
        _write_jsonl(out / "rounds.jsonl", rounds)
        summary["rounds"] = rounds
        summary["final"] = rows
        files += ["exp_a_summary.csv", "rounds.jsonl"]
    elif cfg.experiment == "B":
        round_rows, summary_rows, rounds = run_experiment_b(cfg, jobs)
        write_csv(out / "exp_b_rounds.csv", "exp_b_rounds.csv", round_rows)
        write_csv(out / "exp_b_summary.csv", "exp_b_summary.csv", summary_rows)
        _write_jsonl(out / "rounds.jsonl", rounds)
        summary["rounds"] = rounds
        summary["final"] = summary_rows
        files += ["exp_b_rounds.csv", "exp_b_summary.csv", "rounds.jsonl"]
    else:
        rows = run_experiment_c(cfg, jobs)
        write_csv(out / "exp_c_sweep.csv", "exp_c_sweep.csv", rows)
        summary["sweep"] = rows
        files += ["exp_c_sweep.csv"]

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "config_hash": chash,
        "csv_schemas": {f: CSV_SCHEMAS[f] for f in files if f.endswith(".csv")},
        "files": sorted(files),
    }
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "summary.json", summary)
    return manifest


def report_leakage(run_dir, out_dir=None) -> list[dict]:
    """Per-round leakage table from a finished run's JSON-lines reports.

    Rows cover SECURE rounds only; emits a header-only CSV with a warning
    when the run has none.
    """
    run = Path(run_dir)
    manifest_path = run / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"{run}: not a run directory (missing manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    rounds_path = run / "rounds.jsonl"
    rounds = []
    if rounds_path.exists():
        with open(rounds_path) as fh:
            rounds = [json.loads(line) for line in fh if line.strip()]

    rows = []
    for d in rounds:
        if d["status"] != STATUS_SECURE:
            continue
        util = _utility_columns(d["utility"])
        cell = d.get("cell", {})
        cell_label = ",".join(f"{k}={cell[k]}" for k in sorted(cell))
        rows.append({
            "schema_version": SCHEMA_VERSION,
            "config_hash": manifest["config_hash"],
            "cell": cell_label,
            "round": d["round"],
            "qber": d["qber"],
            "nmse": util["nmse"],
            "accuracy": util["accuracy"],
            "miou": util["miou"],
            "mean_cosine": d["leakage_mean_cosine"],
            "mean_pearson": d["leakage_mean_pearson"],
        })
    if not rows:
        logger.warning("%s: no SECURE rounds found; leakage table is empty", run)

    out = Path(out_dir) if out_dir else run
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "leakage.csv", "leakage.csv", rows)
    return rows
