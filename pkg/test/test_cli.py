import json

import pytest

from mixboost.bench import ExperimentReport
from mixboost.cli import main
from mixboost.exceptions import BoostingError
from mixboost.generators import generator_from_dict


@pytest.fixture
def config_file(tmp_path):
    doc = {
        "dataset": {"modes": 2, "seed": 1, "train_size": 300, "test_size": 200},
        "algorithms": [
            {
                "name": "Boosted",
                "variant": "adagan",
                "T": 2,
                "schedule": {"kind": "constant", "beta": 0.5},
            },
            {"name": "Vanilla", "variant": "vanilla"},
        ],
        "repeats": 1,
        "model_samples": 200,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_verify(tmp_path):
    out = tmp_path / "report.json"
    argv = ["verify", "--instances", "2", "--max-support", "4", "--candidates", "50"]
    assert main(argv + ["--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["passed"] is True
    assert doc["instances_per_property"] == 2


def test_verify_failure(mocker, capsys):
    report = mocker.Mock(passed=False)
    report.to_json.return_value = '{"passed": false}'
    mocker.patch("mixboost.cli.run_verification", return_value=report)
    assert main(["verify"]) == 1
    assert '"passed": false' in capsys.readouterr().out


def test_run(config_file, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config_file), "--out", str(out)]) == 0
    mixture = generator_from_dict(json.loads((out / "mixture.json").read_text()))
    assert len(mixture) == 2
    records = json.loads((out / "run.json").read_text())["records"]
    assert [r["t"] for r in records] == [1, 2]
    assert records[1]["beta"] == 0.5


def test_run_failure(mocker, config_file, tmp_path, capsys):
    mocker.patch("mixboost.cli.single_run", side_effect=BoostingError("stopped"))
    assert main(["run", "--config", str(config_file), "--out", str(tmp_path)]) == 1
    assert "stopped" in capsys.readouterr().err


def test_bench(config_file, tmp_path):
    out = tmp_path / "bench"
    argv = ["bench", "--config", str(config_file), "--out", str(out)]
    assert main(argv + ["--format", "json", "--workers", "2"]) == 0
    report = ExperimentReport.from_json((out / "report.json").read_text())
    assert report.row("Vanilla", "coverage").repeats == 1
    assert report.row("Boosted", "likelihood").T == 2


def test_bench_missing_config(tmp_path, capsys):
    assert main(["bench", "--config", str(tmp_path / "absent.json")]) == 2
    assert capsys.readouterr().err.startswith("mixboost: ")


def test_weights_demo(config_file, capsys):
    assert main(["weights-demo", "--config", str(config_file)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x0,x1,d,h,weight"
    assert len(lines) == 301


def test_plot_data(config_file, tmp_path, capsys):
    argv = ["bench", "--config", str(config_file), "--out", str(tmp_path)]
    assert main(argv + ["--format", "csv"]) == 0
    assert main(["plot-data", "--report", str(tmp_path / "report.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "series,1,2"
    assert any(line.startswith("Boosted/coverage/median,") for line in lines)


def test_plot_data_missing_report(tmp_path):
    assert main(["plot-data", "--report", str(tmp_path / "report.json")]) == 2


def test_no_command():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
