import pytest

from mirs_isac.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, main


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "desk.cfg"
    p.write_text("# desk scale\nN = 8\n")
    return p


def test_run_success_writes_csv(tmp_path, scenario, capsys):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(scenario), "--scheme", "mirs-ac", "--a", "2", "--seed", "0",
                 "--sweep", "gamma=1,2", "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "results.csv").read_text().count("\n") == 3
    assert len(list((out / "traces").glob("*.jsonl"))) == 2
    assert capsys.readouterr().out.startswith("scheme,seed,sweep_key")


def test_infeasible_exit_code(tmp_path, capsys):
    p = tmp_path / "tight.cfg"
    p.write_text("N = 16\nA_over_lambda = 1\n")
    assert main(["run", "--scenario", str(p), "--scheme", "mirs-ec", "--seed", "0"]) == EXIT_INFEASIBLE


@pytest.mark.parametrize("text, args", [
    ("bogus = 1\n", []),
    ("N = 8\n", ["--sweep", "nope=1"]),
])
def test_error_exit_code(tmp_path, capsys, text, args):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    assert main(["run", "--scenario", str(p), "--scheme", "mirs-ec", "--seed", "0", *args]) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_missing_scenario_file(tmp_path, capsys):
    code = main(["run", "--scenario", str(tmp_path / "none.cfg"), "--scheme", "sep", "--seed", "0"])
    assert code == EXIT_ERROR


def test_unknown_scheme_is_rejected(scenario):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", str(scenario), "--scheme", "magic", "--seed", "0"])
    assert exc.value.code == 2  # argparse usage error


def test_check_gradients(scenario, capsys, tmp_path):
    code = main(["run", "--scenario", str(scenario), "--scheme", "bf-only", "--seed", "1", "--check-gradients"])
    assert code == EXIT_OK
    assert "gradient check: max relative error" in capsys.readouterr().out
