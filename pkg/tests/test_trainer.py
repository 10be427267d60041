import json

import numpy as np
import pytest

from mrgc.config import ConfigError, RunConfig, load_config
from mrgc.trainer import (TrainingError, ablation, ablation_cells, aggregate, run_experiment, train,
                          write_summary_csv)
from mrgc.tudataset import generate_synthetic, two_family_spec


def tiny_config(**overrides):
    cfg = RunConfig()
    cfg.dataset.synthetic = two_family_spec(seed=0, count=8).to_dict()
    cfg.encoder.hidden_dim = 8
    cfg.epochs = 3
    cfg.batch_size = 8
    cfg.kmeans_restarts = 2
    cfg.runs = 2
    for key, value in overrides.items():
        cfg.set(key, value)
    return cfg


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.batch_size, cfg.epochs, cfg.learning_rate, cfg.runs) == (128, 50, 1e-3, 10)
        assert (cfg.encoder.depth, cfg.encoder.hidden_dim, cfg.kernel.top_k) == (3, 32, 10)
        assert (cfg.loss.lam, cfg.loss.mu, cfg.loss.refresh_period) == (1.0, 1.0, 5)

    def test_flat_round_trip(self):
        cfg = tiny_config(**{"loss.lambda": 0.5, "kernel.kind": "wl"})
        flat = cfg.to_flat()
        assert flat["loss.lambda"] == 0.5
        again = RunConfig.from_flat(flat)
        assert again.to_flat() == flat and again.config_hash() == cfg.config_hash()

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="encoder.width"):
            RunConfig().set("encoder.width", 3)

    def test_coercion_from_strings(self):
        cfg = RunConfig()
        cfg.set("epochs", "7")
        cfg.set("loss.view_align", "false")
        cfg.set("relations.enabled", "phi,f")
        assert cfg.epochs == 7 and cfg.loss.view_align is False and cfg.relations.enabled == ["phi", "f"]
        with pytest.raises(ConfigError, match="epochs"):
            cfg.set("epochs", "many")

    @pytest.mark.parametrize("key,value", [("epochs", 0), ("pooling.temperature", 0.0), ("kernel.kind", "lt"),
                                           ("relations.enabled", ["x"]), ("loss.mu", -1.0)])
    def test_validation(self, key, value):
        cfg = tiny_config()
        cfg.set(key, value)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_batch_smaller_than_k(self):
        with pytest.raises(ConfigError):
            tiny_config(k=4, batch_size=3).validate()

    def test_load_with_overrides(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"epochs": 4, "encoder.hidden_dim": 16}))
        cfg = load_config(p, ["epochs=9"])
        assert cfg.epochs == 9 and cfg.encoder.hidden_dim == 16
        with pytest.raises(ConfigError):
            load_config(p, ["epochs"])


class TestTrain:
    def test_smoke_one_epoch(self):
        res = train(tiny_config(epochs=1))
        assert len(res.loss_trace) == 1 and res.epochs_run == 1
        assert res.embeddings.shape == (16, 8)
        assert set(res.loss_trace[0]) == {"epoch", "cluster", "contrastive", "similarity", "total"}
        assert all(res.loss_trace[0][k] >= 0 for k in ("cluster", "contrastive", "similarity"))

    def test_zero_weights_total_is_cluster(self):
        res = train(tiny_config(**{"loss.lambda": 0.0, "loss.mu": 0.0}))
        for row in res.loss_trace:
            assert row["total"] == row["cluster"]

    def test_deterministic(self):
        a, b = train(tiny_config()), train(tiny_config())
        assert a.loss_trace == b.loss_trace
        assert a.report == b.report
        np.testing.assert_array_equal(a.embeddings, b.embeddings)

    def test_early_stopping_bound(self):
        res = train(tiny_config(epochs=6, early_stop_patience=1, early_stop_min_delta=1e9))
        # nothing ever improves by 1e9, so the second epoch stops the loop
        assert res.epochs_run == 2

    @pytest.mark.parametrize("overrides", [
        {"kernel.kind": "wl"}, {"kernel.kind": "sp"}, {"kernel.kind": "rw"},
        {"kernel.map": "rbf"}, {"kernel.mix": 0.5},
        {"relations.enabled": ["phi"]}, {"relations.enabled": ["r"]}, {"relations.enabled": ["f"]},
        {"pooling.mode": "mean"}, {"pooling.learnable_terms": True}, {"loss.view_align": False},
    ])
    def test_variants_run(self, overrides):
        res = train(tiny_config(epochs=2, **overrides))
        assert all(np.isfinite(row["total"]) for row in res.loss_trace)
        assert 0.0 <= res.report.acc <= 1.0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_names_batch(self):
        with pytest.raises(TrainingError, match=r"at batch \d+; graphs \[\d"):
            train(tiny_config(learning_rate=1e300, epochs=3, **{"pooling.temperature": 1e-300}))

    def test_dataset_smaller_than_k(self):
        with pytest.raises(ConfigError):
            train(tiny_config(k=40, batch_size=64))


class TestExperiment:
    def test_aggregate_std(self):
        rep = run_experiment(tiny_config(epochs=1))
        assert len(rep.runs) == 2 and rep.std_defined
        accs = [r.report.acc for r in rep.runs]
        assert rep.std["acc"] == pytest.approx(np.std(accs, ddof=1))
        d = rep.to_dict()
        assert d["schema_version"] == "1.0" and "config_hash" in d

    def test_single_run_std_flag(self):
        rep = run_experiment(tiny_config(epochs=1), runs=1)
        assert rep.std == {m: 0.0 for m in ("acc", "nmi", "ari", "f1")} and not rep.std_defined

    def test_identical_seeds_identical_metrics(self):
        cfg = tiny_config(epochs=1)
        ds = generate_synthetic(two_family_spec(seed=0, count=8))
        a = train(cfg, dataset=ds, seed=5)
        b = train(cfg, dataset=ds, seed=5)
        assert aggregate([a], cfg).mean == aggregate([b], cfg).mean

    def test_process_pool_matches_serial(self):
        cfg = tiny_config(epochs=1)
        serial = run_experiment(cfg)
        cfg.workers = 2
        parallel = run_experiment(cfg)
        assert [r.loss_trace for r in serial.runs] == [r.loss_trace for r in parallel.runs]


class TestAblation:
    def test_cell_counts(self):
        assert len(ablation_cells("sub-relation")) == 4
        assert len(ablation_cells("module")) == 4
        assert len(ablation_cells("kernel")) == 4
        assert len(ablation_cells("loss-grid")) == 25
        with pytest.raises(ConfigError):
            ablation_cells("everything")

    def test_sub_relation_table(self, tmp_path):
        table = ablation(tiny_config(epochs=1), "sub-relation", runs=1)
        assert [name for name, _, _ in table] == ["phi", "r", "f", "all"]
        write_summary_csv(table, tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert len(lines) == 5 and lines[0].startswith("cell,acc_mean")
