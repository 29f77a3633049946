import filecmp
from dataclasses import replace

import numpy as np
import pytest

from swipt_ddqn.agents import AgentConfig
from swipt_ddqn.env import EnvConfig
from swipt_ddqn.experiments import (
    CSV_HEADER,
    OUTPUT_ROOT_ENV,
    ExperimentConfig,
    MetricSeries,
    aggregate,
    dump_config,
    fast_preset,
    job_seeds,
    moving_average,
    parse_config,
    parse_series_name,
    read_sweep_table,
    render,
    resolve_output_dir,
    run_experiment,
    sweep,
)
from swipt_ddqn.utils import ConfigurationError

TINY_AGENT = AgentConfig(hidden=(8, 8), buffer_capacity=200, learn_start=40, batch_size=8,
                         target_sync=10)


def tiny(tmp_path, **kw):
    base = dict(agent=TINY_AGENT, episodes=6, seeds=(1, 2), strategies=("ddqn-ucb", "random"),
                smoothing_window=3, final_window=3, output_dir=str(tmp_path))
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_dump_parse_roundtrip(self):
        cfg = ExperimentConfig(env=EnvConfig(pu_slots=6, tau=0.5), sweep_axis="B0",
                               sweep_values=(0.1, 0.3))
        again = parse_config(dump_config(cfg))
        assert again == cfg
        assert again.hash == cfg.hash

    def test_parse_overrides_and_comments(self):
        cfg = parse_config("""
        # comment
        env.pu_slots = 6     # trailing
        agent.hidden = [64, 32]
        experiment.sweep_axis = L
        experiment.sweep_values = [6, 12]
        experiment.seeds = [3]
        """)
        assert cfg.env.pu_slots == 6 and cfg.agent.hidden == (64, 32)
        assert cfg.sweep_axis == "L" and cfg.sweep_values == (6, 12) and cfg.seeds == (3,)

    @pytest.mark.parametrize("text", ["env.nope = 1", "model.x = 1", "no equals sign",
                                      "experiment.episodes = 0", "env.pu_slots = 40"])
    def test_bad_config_rejected(self, text):
        with pytest.raises(ConfigurationError):
            parse_config(text)

    def test_committed_configs_load(self):
        from pathlib import Path

        root = Path(__file__).resolve().parents[1] / "configs"
        files = sorted(root.glob("*.cfg"))
        assert len(files) == 5
        for f in files:
            parse_config(f.read_text())

    def test_hash_sensitivity(self):
        cfg = ExperimentConfig()
        assert cfg.hash == ExperimentConfig().hash
        changed = [
            replace(cfg, episodes=10),
            replace(cfg, seeds=(1,)),
            replace(cfg, env=replace(cfg.env, penalty=6.0)),
            replace(cfg, env=replace(cfg.env, noise_variance=1.0000001e-3)),
            replace(cfg, agent=replace(cfg.agent, gamma=0.98)),
            replace(cfg, smoothing_window=20),
        ]
        hashes = {c.hash for c in changed} | {cfg.hash}
        assert len(hashes) == len(changed) + 1
        # placement of results does not change them
        assert replace(cfg, output_dir="elsewhere", n_jobs=4).hash == cfg.hash

    def test_fast_preset(self):
        cfg = fast_preset(ExperimentConfig())
        assert cfg.episodes == 600 and cfg.agent.hidden == (128, 64)

    def test_sweep_values_validated(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(sweep_axis="L", sweep_values=(6, 40))
        with pytest.raises(ConfigurationError):
            ExperimentConfig(sweep_axis="B0", sweep_values=(0.7,))
        with pytest.raises(ConfigurationError):
            ExperimentConfig(sweep_axis="speed", sweep_values=(1,))

    def test_zero_episodes_rejected(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(episodes=0)


class TestSeries:
    def test_moving_average_edge_truncated(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        assert np.allclose(moving_average(x, 2), [1.0, 1.5, 2.5, 3.5, 4.5])
        assert np.allclose(moving_average(x, 50), np.cumsum(x) / np.arange(1, 6))
        assert len(moving_average(x, 3)) == 5

    def test_csv_roundtrip(self, tmp_path):
        s = MetricSeries("ddqn-ucb", 3, np.array([1.5, -7.0, 0.1 + 0.2]), np.array([0, 1, 0]))
        path = tmp_path / "ddqn-ucb__seed3__abc123.csv"
        s.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 4
        back = MetricSeries.from_csv(path)
        assert back.label == "ddqn-ucb" and back.seed == 3
        assert np.array_equal(back.returns, s.returns)
        assert np.array_equal(back.violations, s.violations)

    def test_series_name(self):
        assert parse_series_name("ddqn-ucb_L-6__seed2__0a1b.csv") == ("ddqn-ucb_L-6", 2, "0a1b")
        with pytest.raises(ValueError):
            parse_series_name("notes.csv")

    def test_job_seeds_distinct(self):
        e, a = job_seeds(1)
        assert e != a and job_seeds(1) == (e, a) and job_seeds(2) != (e, a)

    def test_aggregate(self):
        assert aggregate([1.0, 3.0]) == (2.0, pytest.approx(np.sqrt(2)))
        assert aggregate([5.0]) == (5.0, 0.0)


class TestRuns:
    def test_compare_outputs(self, tmp_path):
        cfg = tiny(tmp_path)
        results = run_experiment(cfg)
        assert set(results) == {("ddqn-ucb", 1), ("ddqn-ucb", 2), ("random", 1), ("random", 2)}
        csvs = sorted(tmp_path.glob("*.csv"))
        assert len(csvs) == 4
        for p in csvs:
            assert len(p.read_text().splitlines()) == cfg.episodes + 1
            assert parse_series_name(p.name)[2] == cfg.hash
        assert (tmp_path / f"compare__{cfg.hash}.png").exists()
        assert parse_config((tmp_path / f"config__{cfg.hash}.cfg").read_text()) == cfg

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_experiment(tiny(a))
        run_experiment(tiny(b))
        names = sorted(p.name for p in a.glob("*.csv"))
        assert names == sorted(p.name for p in b.glob("*.csv"))
        for n in names:
            assert filecmp.cmp(a / n, b / n, shallow=False)

    def test_random_without_penalty_sources(self, tmp_path):
        cfg = tiny(tmp_path, env=EnvConfig(penalty=0.0, pu_slots=0), strategies=("random",),
                   episodes=40)
        for s in run_experiment(cfg, write=False).values():
            assert np.all(s.returns >= 0)

    def test_episode_return_switch(self, tmp_path):
        base = tiny(tmp_path, env=EnvConfig(tau=2.0), strategies=("random",), episodes=5)
        rate = run_experiment(base, write=False)["random", 1].returns
        plain = run_experiment(replace(base, episode_return="reward"), write=False)["random", 1].returns
        penalties = run_experiment(base, write=False)["random", 1].violations * 7.0
        # rewards carry no tau factor, so the sum-rate score is twice the feasible part
        assert np.allclose(rate + penalties, 2.0 * (plain + penalties))
        with pytest.raises(ConfigurationError):
            replace(base, episode_return="throughput")

    def test_parallel_matches_serial(self, tmp_path):
        serial = run_experiment(tiny(tmp_path / "s"), write=False)
        parallel = run_experiment(tiny(tmp_path / "p", n_jobs=2), write=False)
        for key in serial:
            assert np.array_equal(serial[key].returns, parallel[key].returns)

    def test_unwritable_output_reported_before_training(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(ConfigurationError):
            run_experiment(tiny(blocker / "sub", episodes=10**6))

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        assert resolve_output_dir("runs") == tmp_path / "runs"
        assert resolve_output_dir("/abs/x").as_posix() == "/abs/x"

    def test_sweep_table_matches_raw_csvs(self, tmp_path):
        cfg = tiny(tmp_path, seeds=(1, 2, 3), strategies=("random",), final_window=4)
        rows = sweep(cfg, "L", [6, 24])
        table = read_sweep_table(tmp_path / f"sweep_L__{replace(cfg, sweep_axis='L', sweep_values=(6, 24)).hash}.csv")
        assert [r.value for r in table] == [6.0, 24.0]
        for row, value in zip(table, (6, 24)):
            finals = [MetricSeries.from_csv(p).final_asr(4)
                      for p in sorted(tmp_path.glob(f"random_L-{value}__seed*.csv"))]
            assert len(finals) == 3
            assert abs(row.mean_final_asr - np.mean(finals)) < 1e-12
            assert abs(row.std_final_asr - np.std(finals, ddof=1)) < 1e-12
            assert row.seeds == 3
        assert rows[0].mean_final_asr > rows[1].mean_final_asr

    def test_invalid_sweep_rejected_before_any_run(self, tmp_path):
        with pytest.raises(ConfigurationError):
            sweep(tiny(tmp_path), "L", [6, 31])
        assert not list(tmp_path.glob("*.csv"))

    def test_render_is_pure_function_of_csvs(self, tmp_path):
        cfg = tiny(tmp_path / "run")
        run_experiment(cfg)
        csvs = sorted((tmp_path / "run").glob("*.csv"))
        (img1,) = render(csvs, tmp_path / "run", name="compare")
        first = img1.read_bytes()
        (img2,) = render(csvs, tmp_path, name="compare")
        assert img2.read_bytes() == first
