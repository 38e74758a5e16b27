"""Configuration, checkpoints, CLI round trips, determinism, reports."""

import dataclasses

import numpy as np
import pytest
import torch

from npebench import sim
from npebench.diffusion import EdmConfig
from npebench.errors import ConfigError, CorruptCheckpoint, EmptyReport, ShapeError
from npebench.harness.checkpoint import load_weights, save_checkpoint
from npebench.harness.cli import main as cli_main
from npebench.harness.config import (NetConfig, RunConfig, config_from_dict,
                                     config_to_dict, load_config)
from npebench.harness.report import aggregate_reports, emit_report, render_table
from npebench.harness.runner import (build_amortizer, evaluate_npe,
                                     make_posterior_sampler, parameter_counts,
                                     run_training)
from npebench.rng import derive_stream, derive_torch_generator

TOY_TOML = """
decoder = "cdiff"
seed = 5
training_batches = 20
batch_size = 16
eval_every = 10
C = 30
L = 8

[problem]
name = "gaussian_toy"

[edm]
n_steps = 6

[nets]
denoiser_width = 16
denoiser_layers = 2
embed_dim = 4
"""


def toy_config(**overrides) -> RunConfig:
    base = dict(problem="gaussian_toy", decoder="cdiff", summary="none", seed=5,
                training_batches=20, batch_size=16, eval_every=10, C=30, L=8,
                edm=EdmConfig(n_steps=6),
                nets=NetConfig(denoiser_width=16, denoiser_layers=2, embed_dim=4))
    base.update(overrides)
    return RunConfig(**base)


class TestConfig:
    def test_toml_round_trip(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOY_TOML)
        cfg = load_config(path)
        assert cfg.problem == "gaussian_toy"
        assert cfg.edm.n_steps == 6
        assert cfg.nets.denoiser_width == 16
        again = config_from_dict(config_to_dict(cfg))
        assert again == cfg

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(TOY_TOML + "\nbogus_key = 1\n")
        with pytest.raises(ConfigError):
            load_config(path)
        path.write_text(TOY_TOML.replace("[edm]\nn_steps = 6",
                                         "[edm]\nn_stepz = 6"))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_malformed_toml(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("problem = [unclosed")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_hyperparams_override(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("""
[problem]
name = "witch_hat"
[problem.hyperparams]
d = 2
sigma = 0.05
""")
        cfg = load_config(path)
        problem = cfg.build_problem()
        assert problem.spec.theta_dim == 2
        assert problem.hyperparams["sigma"] == 0.05

    def test_summary_none_only_for_single(self):
        cfg = toy_config(problem="normal_gamma", summary="none")
        with pytest.raises(ConfigError):
            cfg.resolved_summary(cfg.build_problem())

    def test_summary_defaults_by_data_kind(self):
        cases = {"gaussian_toy": "none", "normal_gamma": "deepset",
                 "stochastic_volatility": "bilstm"}
        for name, expected in cases.items():
            cfg = toy_config(problem=name, summary=None)
            assert cfg.resolved_summary(cfg.build_problem()) == expected

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            toy_config(decoder="vae")
        with pytest.raises(ConfigError):
            toy_config(batch_size=0)


class TestCheckpoint:
    def test_save_load_bit_exact(self, tmp_path):
        cfg = toy_config()
        problem = cfg.build_problem()
        model = build_amortizer(cfg, problem)
        save_checkpoint(model, tmp_path / "ck", config_to_dict(cfg), step=7)
        clone = build_amortizer(dataclasses.replace(cfg, seed=99), problem)
        manifest = load_weights(clone, tmp_path / "ck")
        assert manifest["step"] == 7
        for (n1, p1), (n2, p2) in zip(model.state_dict().items(),
                                      clone.state_dict().items()):
            assert n1 == n2
            assert torch.equal(p1, p2)

    def test_save_load_save_identical_bytes(self, tmp_path):
        cfg = toy_config()
        problem = cfg.build_problem()
        model = build_amortizer(cfg, problem)
        save_checkpoint(model, tmp_path / "a", config_to_dict(cfg))
        clone = build_amortizer(dataclasses.replace(cfg, seed=99), problem)
        load_weights(clone, tmp_path / "a")
        save_checkpoint(clone, tmp_path / "b", config_to_dict(cfg))
        assert ((tmp_path / "a" / "weights.bin").read_bytes()
                == (tmp_path / "b" / "weights.bin").read_bytes())

    def test_truncated_blob_detected(self, tmp_path):
        cfg = toy_config()
        problem = cfg.build_problem()
        model = build_amortizer(cfg, problem)
        save_checkpoint(model, tmp_path / "ck", config_to_dict(cfg))
        blob = (tmp_path / "ck" / "weights.bin").read_bytes()
        (tmp_path / "ck" / "weights.bin").write_bytes(blob[:-8])
        before = {k: v.clone() for k, v in model.state_dict().items()}
        with pytest.raises(CorruptCheckpoint):
            load_weights(model, tmp_path / "ck")
        for k, v in model.state_dict().items():
            assert torch.equal(v, before[k])  # no partial mutation

    def test_cross_config_shape_error_names_tensor(self, tmp_path):
        cfg = toy_config()
        problem = cfg.build_problem()
        model = build_amortizer(cfg, problem)
        save_checkpoint(model, tmp_path / "ck", config_to_dict(cfg))
        wide = dataclasses.replace(
            cfg, nets=NetConfig(denoiser_width=24, denoiser_layers=2, embed_dim=4))
        other = build_amortizer(wide, problem)
        with pytest.raises(ShapeError, match="decoder.net.layers.0.weight"):
            load_weights(other, tmp_path / "ck")

    def test_loaded_model_samples_identically(self, tmp_path):
        cfg = toy_config(training_batches=10, eval_every=5)
        run_training(cfg, tmp_path / "run")
        from npebench.harness.cli import _load_checkpointed

        _, problem, model, _ = _load_checkpointed(tmp_path / "run" / "checkpoint")
        _, _, model2, _ = _load_checkpointed(tmp_path / "run" / "checkpoint")
        gen1 = derive_torch_generator(1, 2)
        gen2 = derive_torch_generator(1, 2)
        from npebench.diffusion import euler_sample_batch

        ctx = torch.zeros(1, 1)
        a = euler_sample_batch(model.decoder, ctx, 50, gen1)
        b = euler_sample_batch(model2.decoder, ctx, 50, gen2)
        assert torch.equal(a, b)


class TestRunTraining:
    def test_metrics_schema_and_outputs(self, tmp_path):
        cfg = toy_config()
        summary = run_training(cfg, tmp_path / "run")
        lines = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
        assert lines[0] == "batch,loss,sbc_wd_avg,sbc_wd_worst,sbc_tv,sbc_hellinger,ecp,wall_s"
        assert len(lines) == 3  # evaluations at batches 10 and 20
        assert (tmp_path / "run" / "checkpoint" / "manifest.json").exists()
        assert (tmp_path / "run" / "report.json").exists()
        assert (tmp_path / "run" / "coverage_curve.json").exists()
        assert summary["param_counts"]["total"] > 0

    def test_identical_runs_identical_bytes(self, tmp_path):
        cfg = toy_config()
        run_training(cfg, tmp_path / "a")
        run_training(cfg, tmp_path / "b")
        strip = lambda p: ["," .join(line.split(",")[:-1])
                           for line in (p / "metrics.csv").read_text().splitlines()]
        assert strip(tmp_path / "a") == strip(tmp_path / "b")
        assert ((tmp_path / "a" / "checkpoint" / "weights.bin").read_bytes()
                == (tmp_path / "b" / "checkpoint" / "weights.bin").read_bytes())

    def test_flow_decoder_same_schema(self, tmp_path):
        from npebench.flow import FlowConfig

        cfg = toy_config(problem="gaussian_toy", decoder="cnf",
                         hyperparams={"dim": 2},
                         flow=FlowConfig(n_flows=3, width=8))
        run_training(cfg, tmp_path / "run")
        lines = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
        assert lines[0] == "batch,loss,sbc_wd_avg,sbc_wd_worst,sbc_tv,sbc_hellinger,ecp,wall_s"

    def test_posterior_sampler_closure(self, tmp_path, rng):
        cfg = toy_config()
        problem = cfg.build_problem()
        model = build_amortizer(cfg, problem)
        sampler = make_posterior_sampler(problem, model, "cdiff",
                                         derive_torch_generator(0, 0), count=12)
        draws = sampler(np.zeros((1, 1)), 1, rng)
        assert draws.shape == (12, 1)


class TestReports:
    def _fake_summary(self, problem, decoder, seed, wd_margins, ecp):
        return {
            "problem": problem, "decoder": decoder, "seed": seed,
            "final": {
                "per_margin_wd": list(wd_margins),
                "wd_avg": float(np.mean(wd_margins)),
                "wd_worst": float(np.max(wd_margins)),
                "tv": 0.1, "hellinger": 0.1, "ecp": ecp,
                "coverage_curve": [[0.5, 0.5]],
            },
        }

    def test_single_run_single_margin(self):
        agg = aggregate_reports([self._fake_summary("p", "cdiff", 0,
                                                    [0.02], 0.01)["final"]])
        assert agg["wd_avg"] == agg["wd_worst"] == pytest.approx(0.02)

    def test_two_runs_rendered_x1e3(self, tmp_path):
        s1 = self._fake_summary("normal_gamma", "cdiff", 0, [0.01], 0.005)
        s2 = self._fake_summary("normal_gamma", "cdiff", 1, [0.03], 0.007)
        aggregates = emit_report([s1, s2], tmp_path)
        agg = aggregates["normal_gamma/cdiff"]
        assert agg["wd_avg"] == pytest.approx(0.02)
        assert agg["wd_worst"] == pytest.approx(0.03)
        text = (tmp_path / "summary.csv").read_text().splitlines()
        assert text[0] == "problem,decoder,runs,wd_avg_x1e3,wd_worst_x1e3,ecp_x1e3"
        assert text[1] == "normal_gamma,cdiff,2,20.000,30.000,6.000"
        assert (tmp_path / "coverage_curves.png").exists()
        table = render_table([{"problem": "normal_gamma", "decoder": "cdiff",
                               **agg}])
        assert "20.000" in table and "30.000" in table

    def test_empty_report_raises(self, tmp_path):
        with pytest.raises(EmptyReport):
            emit_report([], tmp_path)
        with pytest.raises(EmptyReport):
            aggregate_reports([])

    def test_ecp_render_scaling(self):
        row = {"problem": "p", "decoder": "cdiff", "runs": 1,
               "wd_avg": 0.0074, "wd_worst": 0.0074, "ecp": 0.0074}
        assert "7.400" in render_table([row])


class TestCli:
    def _write_cfg(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(f"output_dir = \"{tmp_path / 'out'}\"\n" + TOY_TOML)
        return path

    def test_train_and_validate_and_report(self, tmp_path, capsys):
        cfg_path = self._write_cfg(tmp_path)
        assert cli_main(["train", "--config", str(cfg_path)]) == 0
        out = capsys.readouterr().out
        assert "parameters:" in out
        run_dir = tmp_path / "out"
        assert (run_dir / "metrics.csv").exists()

        rc = cli_main(["validate", "--checkpoint", str(run_dir / "checkpoint"),
                       "--method", "sbc", "--C", "20", "--L", "5",
                       "--out", str(tmp_path / "val")])
        assert rc == 0
        assert (tmp_path / "val" / "validation.json").exists()
        assert (tmp_path / "val" / "sbc_ranks.png").exists()

        rc = cli_main(["validate", "--checkpoint", str(run_dir / "checkpoint"),
                       "--method", "tarp", "--C", "20", "--L", "5",
                       "--out", str(tmp_path / "val2")])
        assert rc == 0
        assert (tmp_path / "val2" / "coverage_curves.png").exists()

        rc = cli_main(["report", "--out", str(tmp_path / "rep"), str(run_dir)])
        assert rc == 0
        assert (tmp_path / "rep" / "summary.csv").exists()
        assert (tmp_path / "rep" / "coverage_curves.png").exists()

    def test_sample_subcommand(self, tmp_path, rng):
        cfg_path = self._write_cfg(tmp_path)
        assert cli_main(["train", "--config", str(cfg_path)]) == 0
        problem = sim.get_problem("gaussian_toy")
        theta = sim.sample_prior(problem, rng)
        x = sim.sample_dataset(problem, theta, 1, rng)
        data_path = tmp_path / "obs.dat"
        sim.dump_dataset(data_path, "gaussian_toy", x, theta_raw=theta)
        rc = cli_main(["sample", "--checkpoint", str(tmp_path / "out" / "checkpoint"),
                       "--data", str(data_path), "--count", "17",
                       "--out", str(tmp_path / "draws")])
        assert rc == 0
        lines = (tmp_path / "draws" / "posterior_samples.csv").read_text().splitlines()
        assert lines[0] == "theta_0"
        assert len(lines) == 18

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("not valid = [")
        assert cli_main(["train", "--config", str(bad)]) == 2

    def test_missing_checkpoint_exit_code(self, tmp_path):
        rc = cli_main(["validate", "--checkpoint", str(tmp_path / "nope")])
        assert rc == 2

    def test_benchmark_aggregates(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.toml"
        cfg_path.write_text(f"""
repeats = 2
output_dir = "{tmp_path / 'bench'}"
""" + TOY_TOML)
        assert cli_main(["benchmark", "--config", str(cfg_path)]) == 0
        base = tmp_path / "bench"
        assert (base / "summary.csv").exists()
        assert (base / "run_00" / "metrics.png").exists()
        assert (base / "run_01" / "report.json").exists()
        out = capsys.readouterr().out
        assert "gaussian_toy" in out


def test_evaluate_npe_report_shapes(tmp_path):
    cfg = toy_config()
    problem = cfg.build_problem()
    model = build_amortizer(cfg, problem)
    report = evaluate_npe(problem, model, "cdiff", 25, 6,
                          derive_stream(0, 0), derive_torch_generator(0, 1))
    assert report.per_margin_ranks.shape == (1, 25)
    assert report.tarp_u.shape == (25,)


def test_parameter_count_report():
    cfg = toy_config()
    problem = cfg.build_problem()
    counts = parameter_counts(build_amortizer(cfg, problem))
    assert counts["total"] == counts["decoder"] + counts["summary"]
