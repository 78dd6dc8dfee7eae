import numpy as np
import pytest

import qkdfl.params as pvops
from qkdfl.datasets import gen_channel_dataset, gen_radar_dataset
from qkdfl.federated import (
    MODES,
    STATUS_ABORTED,
    STATUS_SECURE,
    RoundConfig,
    derive_seed,
    partition_non_iid,
    run_round,
    run_training,
)
from qkdfl.models import ModelSpec, init_params
from qkdfl.qkd import BB84Config

CHANNEL_SPEC = ModelSpec(task="channel", init_seed=0)


def channel_setup(n_train=24, n_val=8, num_clients=3, dims=(16, 14)):
    train = gen_channel_dataset(n_train, snr_db=10.0, dims=dims, seed=0)
    val = gen_channel_dataset(n_val, snr_db=10.0, dims=dims, seed=1)
    shards = partition_non_iid(train, num_clients, skew=1.0, seed=2)
    return shards, val


def make_cfg(mode, num_clients=3, **kw):
    base = dict(
        num_clients=num_clients,
        epochs=1,
        mode=mode,
        model=CHANNEL_SPEC,
        learning_rate=1e-3,
        batch_size=8,
        master_seed=11,
    )
    base.update(kw)
    return RoundConfig(**base)


class TestPartition:
    def test_uniform_skew_sizes(self):
        data = list(range(100))
        shards = partition_non_iid(data, 7, skew=np.inf, seed=0)
        sizes = [len(s) for s in shards]
        assert all(abs(sz - 100 / 7) <= 1 for sz in sizes)

    def test_disjoint_cover(self):
        data = gen_channel_dataset(30, snr_db=10.0, dims=(16, 14), seed=3)
        shards = partition_non_iid(data, 4, skew=0.7, seed=1)
        seen = [id(s) for shard in shards for s in shard]
        assert len(seen) == 30
        assert len(set(seen)) == 30

    def test_low_skew_unbalances_sizes(self):
        data = list(range(1000))
        shards = partition_non_iid(data, 10, skew=0.5, seed=4)
        sizes = sorted(len(s) for s in shards)
        assert sizes[0] >= 1
        assert sizes[-1] / sizes[0] > 2

    def test_every_shard_nonempty(self):
        data = list(range(20))
        for seed in range(10):
            shards = partition_non_iid(data, 10, skew=0.2, seed=seed)
            assert all(len(s) >= 1 for s in shards)

    def test_dataset_smaller_than_clients(self):
        with pytest.raises(ValueError):
            partition_non_iid(list(range(3)), 4, skew=1.0, seed=0)

    def test_feature_skew_orders_shards(self):
        # contiguous feature blocks: shard means must be strictly ordered
        data = gen_channel_dataset(40, snr_db=10.0, dims=(16, 14), seed=5)
        shards = partition_non_iid(data, 4, skew=5.0, seed=6)
        means = [np.mean([s.truth.mean() for s in shard]) for shard in shards]
        assert means == sorted(means)


class TestRunRound:
    def test_clean_round_secure_zero_qber(self):
        shards, val = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        _, report = run_round(pv, shards, make_cfg("qkd_sa"), val)
        assert report.status == STATUS_SECURE
        assert report.qber == 0.0
        assert "nmse" in report.utility

    def test_eve_aborts_and_freezes_model(self):
        shards, val = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        cfg = make_cfg("qkd_sa", bb84=BB84Config(eve_present=True))
        new_pv, report = run_round(pv, shards, cfg, val)
        assert report.status == STATUS_ABORTED
        assert report.qber > cfg.qber_threshold
        assert report.bytes_down == 0 and report.bytes_up == 0
        assert report.leakage == []
        for (_, a), (_, b) in zip(new_pv.entries, pv.entries):
            assert (a == b).all()

    def test_only_qkd_mode_aborts(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        for mode in ("plain", "classical_sa"):
            cfg = make_cfg(mode, bb84=BB84Config(eve_present=True))
            _, report = run_round(pv, shards, cfg)
            assert report.status == STATUS_SECURE

    def test_recon_error_small_in_masked_round(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        for mode in ("classical_sa", "qkd_sa"):
            _, report = run_round(pv, shards, make_cfg(mode))
            assert report.recon_error < 1e-5

    def test_plain_mode_recon_and_cosine(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        _, report = run_round(pv, shards, make_cfg("plain"))
        assert report.recon_error == 0.0
        assert report.qber is None
        assert all(c == 1.0 for c, _ in report.leakage)

    def test_leakage_bounds(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        for mode in MODES:
            _, report = run_round(pv, shards, make_cfg(mode))
            for cos, pear in report.leakage:
                assert abs(cos) <= 1.0 + 1e-12
                assert abs(pear) <= 1.0 + 1e-12

    def test_masked_cosine_below_one(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        _, report = run_round(pv, shards, make_cfg("qkd_sa"))
        assert all(c < 1.0 for c, _ in report.leakage)

    def test_byte_accounting(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        _, report = run_round(pv, shards, make_cfg("qkd_sa"))
        assert report.bytes_down == 8 * pv.total_len
        assert report.bytes_up == 3 * 8 * pv.total_len

    def test_shard_count_mismatch(self):
        shards, _ = channel_setup(num_clients=3)
        pv = init_params(CHANNEL_SPEC)
        with pytest.raises(ValueError):
            run_round(pv, shards[:2], make_cfg("plain"))


class TestRunTraining:
    def test_all_rounds_abort_under_eve(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        cfg = make_cfg("qkd_sa", bb84=BB84Config(eve_present=True))
        final, reports = run_training(pv, 5, cfg, shards)
        assert [r.status for r in reports] == [STATUS_ABORTED] * 5
        for (_, a), (_, b) in zip(final.entries, pv.entries):
            assert (a == b).all()

    def test_all_rounds_secure_without_eve(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        _, reports = run_training(pv, 5, make_cfg("qkd_sa"), shards)
        assert [r.status for r in reports] == [STATUS_SECURE] * 5

    def test_plain_vs_qkd_final_models_agree(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        plain, _ = run_training(pv, 1, make_cfg("plain"), shards)
        qkd, _ = run_training(pv, 1, make_cfg("qkd_sa"), shards)
        assert pvops.max_abs_diff(plain, qkd) <= 1e-5

    def test_round_indices_recorded(self):
        shards, _ = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        _, reports = run_training(pv, 3, make_cfg("plain"), shards)
        assert [r.round_index for r in reports] == [0, 1, 2]

    def test_deterministic_run(self):
        shards, val = channel_setup()
        pv = init_params(CHANNEL_SPEC)
        a, ra = run_training(pv, 2, make_cfg("qkd_sa"), shards, val)
        b, rb = run_training(pv, 2, make_cfg("qkd_sa"), shards, val)
        assert pvops.max_abs_diff(a, b) == 0.0
        assert [r.to_json_dict() for r in ra] == [r.to_json_dict() for r in rb]

    def test_radar_round_runs(self):
        spec = ModelSpec(task="radar", init_seed=1)
        train = gen_radar_dataset(8, size=16, seed=0)
        val = gen_radar_dataset(4, size=16, seed=1)
        shards = partition_non_iid(train, 2, skew=1.0, seed=2)
        cfg = RoundConfig(
            num_clients=2,
            epochs=1,
            mode="qkd_sa",
            model=spec,
            learning_rate=1e-4,
            batch_size=4,
            master_seed=3,
        )
        pv = init_params(spec)
        _, report = run_round(pv, shards, cfg, val)
        assert report.status == STATUS_SECURE
        assert set(report.utility) == {"accuracy", "miou"}


class TestSeedDerivation:
    def test_stable(self):
        assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)

    def test_path_sensitive(self):
        assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)
        assert derive_seed(5, 1) != derive_seed(6, 1)


class TestRoundConfigValidation:
    def test_bad_mode(self):
        with pytest.raises(ValueError):
            make_cfg("secret_mode")

    def test_masked_needs_two_clients(self):
        with pytest.raises(ValueError):
            make_cfg("qkd_sa", num_clients=1)

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            make_cfg("plain", qber_threshold=0.0)
        with pytest.raises(ValueError):
            make_cfg("plain", qber_threshold=1.0)
