from pathlib import Path

import pytest

from swipt_ddqn.cli import main

CONFIG = """
agent.hidden = [8, 8]
agent.buffer_capacity = 200
agent.learn_start = 40
agent.batch_size = 8
experiment.final_window = 2
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(CONFIG)
    return p


def test_train(tmp_path, cfg_file, capsys):
    out = tmp_path / "train"
    assert main(["train", "--config", str(cfg_file), "--episodes", "3", "--seed", "4",
                 "--out", str(out), "--strategy", "dqn-egreedy"]) == 0
    assert len(list(out.glob("dqn-egreedy__seed4__*.csv"))) == 1
    assert "dqn-egreedy" in capsys.readouterr().out


def test_compare_subset(tmp_path, cfg_file):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg_file), "--episodes", "2", "--seed", "1,2",
                 "--out", str(out), "--strategies", "random,fixed-rho-ucb"]) == 0
    assert len(list(out.glob("*.csv"))) == 4
    assert len(list(out.glob("compare__*.png"))) == 1


def test_sweep_and_render(tmp_path, cfg_file, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg_file), "--episodes", "2", "--seed", "1",
                 "--out", str(out), "--axis", "tau", "--values", "0.5,2",
                 "--strategy", "random"]) == 0
    printed = capsys.readouterr().out
    assert printed.splitlines()[0] == "axis_value,mean_final_asr,std_final_asr,seeds"
    assert len(list(out.glob("sweep_tau__*.csv"))) == 1
    img_dir = tmp_path / "img"
    img_dir.mkdir()
    assert main(["render", str(out), "--out", str(img_dir), "--name", "again"]) == 0
    assert len(list(img_dir.glob("again__*.png"))) == 1


def test_invalid_sweep_value_exit_code(tmp_path, cfg_file, capsys):
    assert main(["sweep", "--config", str(cfg_file), "--out", str(tmp_path),
                 "--axis", "L", "--values", "6,99"]) == 2
    assert "error" in capsys.readouterr().err


def test_fast_flag_and_output_root(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("SWIPT_DDQN_OUTPUT_ROOT", str(tmp_path))
    assert main(["train", "--config", str(cfg_file), "--fast", "--episodes", "1",
                 "--seed", "1", "--out", "rel", "--strategy", "random"]) == 0
    (cfg,) = (tmp_path / "rel").glob("config__*.cfg")
    text = cfg.read_text()
    assert "agent.hidden = [128, 64]" in text and "experiment.episodes = 1" in text


def test_render_without_csvs(tmp_path):
    assert main(["render", str(tmp_path)]) == 2
