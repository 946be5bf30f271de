import csv
import io

import pytest

from pvtsim.cli import main
from pvtsim.harness import metrics_from_csv, strip_wall_ms

BASE_CONFIG = """
hidden_dims = 8
classes = 3
features = 6
per_class = 40
eval_per_class = 20
separation = 3.0
num_clients = 12
clients_per_round = 4
local_steps = 2
batch_size = 8
client_lr = 0.2
rounds = 12
eval_every = 4
master_seed = 5
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(BASE_CONFIG)
    return path


class TestRun:
    def test_writes_metrics_csv(self, config_path, tmp_path, capsys):
        out = tmp_path / "metrics.csv"
        code = main(["run", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        rows = metrics_from_csv(out.read_text())
        assert [r.round for r in rows] == [4, 8, 12]
        assert "eval_loss" in capsys.readouterr().out

    def test_deterministic_across_invocations(self, config_path, tmp_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["run", "--config", str(config_path), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(config_path), "--out", str(out2)]) == 0
        assert strip_wall_ms(out1.read_text()) == strip_wall_ms(out2.read_text())

    def test_seed_flag_overrides(self, config_path, tmp_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["run", "--config", str(config_path), "--out", str(out1)])
        main(["run", "--config", str(config_path), "--out", str(out2), "--seed", "99"])
        assert strip_wall_ms(out1.read_text()) != strip_wall_ms(out2.read_text())

    def test_out_path_changes_nothing_but_location(self, config_path, tmp_path):
        nested = tmp_path / "deeply" ; nested.mkdir()
        out1, out2 = tmp_path / "a.csv", nested / "other_name.csv"
        main(["run", "--config", str(config_path), "--out", str(out1)])
        main(["run", "--config", str(config_path), "--out", str(out2)])
        assert strip_wall_ms(out1.read_text()) == strip_wall_ms(out2.read_text())

    def test_missing_field_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("rounds = 4\n")  # master_seed missing
        code = main(["run", "--config", str(path)])
        assert code == 2
        assert "master_seed" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("rounds = 4\nmaster_seed = 0\nbogus = 1\n")
        assert main(["run", "--config", str(path)]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_config_file_exits_nonzero(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.cfg")])
        assert code == 1


class TestAblateCommand:
    def test_writes_table(self, config_path, tmp_path):
        out = tmp_path / "table.csv"
        code = main(
            [
                "ablate",
                "--config",
                str(config_path),
                "--axis",
                "local_steps",
                "--values",
                "1,2",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert [r["value"] for r in rows] == ["1", "2"]
        assert {r["axis"] for r in rows} == {"local_steps"}


class TestEscalateCommand:
    def test_prints_choice(self, tmp_path, capsys):
        path = tmp_path / "esc.cfg"
        path.write_text(
            BASE_CONFIG
            + "memory_budget = 100000000\nctos_budget = 100000000\n"
            "max_local_steps = 2\nmax_clients = 4\n"
        )
        out = tmp_path / "chosen.cfg"
        code = main(["escalate", "--config", str(path), "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert "freeze_fraction = 0.0" in text
        assert "restored = True" in text

    def test_infeasible_budget_exits_1(self, tmp_path, capsys):
        path = tmp_path / "esc.cfg"
        path.write_text(
            BASE_CONFIG + "memory_budget = 1\nctos_budget = 1\n"
            "max_local_steps = 2\nmax_clients = 4\n"
        )
        assert main(["escalate", "--config", str(path)]) == 1
        assert "budget" in capsys.readouterr().err
