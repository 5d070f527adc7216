"""End-to-end command-line contract: exit codes, RESULT lines, output
files, and byte-level rerun determinism."""

import json
import os

import pytest

from eqprop.cli import main

GDU_INI = """\
[run]
arch = toy
data = toy
seed = 3
threads = 1

[hyperparams]
T = 800
K = 30
beta = 0.001
epsilon = 0.08
activation = tanh

[gdu]
batch_size = 2
threshold = 0.2
"""

TRAIN_INI = """\
[run]
arch = toy
data = toy
seed = 7
threads = 1

[hyperparams]
T = 60
K = 8
beta = 0.1
epsilon = 0.08
activation = tanh

[training]
algorithm = ep
epochs = 2
batch_size = 20
learning_rates = 0.2, 0.1, 0.1
subset_train = 60
subset_test = 20
"""


def write_ini(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def result_line(stdout):
    lines = [l for l in stdout.splitlines() if l.startswith("RESULT ")]
    assert len(lines) == 1, f"expected one RESULT line, got {lines!r}"
    return json.loads(lines[0][len("RESULT "):])


def strip_wall_column(csv_text):
    # wall_seconds is the one timing field; everything else must be stable
    rows = csv_text.strip().splitlines()
    return [",".join(row.split(",")[:3]) for row in rows]


# ---------------------------------------------------------------------------
# gdu-check / export-curves


def test_gdu_check_passes_and_writes_outputs(tmp_path, capsys):
    ini = write_ini(tmp_path, GDU_INI)
    out = tmp_path / "out"
    code, stdout, _ = run_cli(["gdu-check", "--config", ini, "--out", str(out)], capsys)
    assert code == 0
    payload = result_line(stdout)
    assert payload["passed"] is True
    assert payload["worst_rmse"] <= payload["threshold"]
    assert set(payload["scores"]) == {"s0", "s1", "W01", "W0x", "W1x"}
    for name in ("curves.csv", "summary.csv", "manifest.json"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) == {"backend", "command", "data", "outputs", "settings", "version"}
    assert manifest["command"] == "gdu-check"
    assert manifest["settings"]["T"] == 800
    assert sorted(manifest["outputs"]) == ["curves.csv", "summary.csv"]


def test_gdu_check_threshold_gate_exits_1(tmp_path, capsys):
    ini = write_ini(tmp_path, GDU_INI.replace("threshold = 0.2", "threshold = 1e-9"))
    code, stdout, _ = run_cli(
        ["gdu-check", "--config", ini, "--out", str(tmp_path / "out")], capsys
    )
    assert code == 1
    payload = result_line(stdout)
    assert payload["passed"] is False
    assert payload["worst_rmse"] > 1e-9


def test_gdu_outputs_are_seed_deterministic(tmp_path, capsys):
    ini = write_ini(tmp_path, GDU_INI)
    blobs = []
    for run in ("a", "b", "c"):
        out = tmp_path / run
        seed = "3" if run in ("a", "b") else "4"
        code, _, _ = run_cli(
            ["gdu-check", "--config", ini, "--out", str(out), "--seed", seed], capsys
        )
        assert code == 0
        blobs.append(
            tuple((out / n).read_bytes() for n in ("curves.csv", "summary.csv", "manifest.json"))
        )
    assert blobs[0] == blobs[1]
    assert blobs[0][0] != blobs[2][0]  # a different seed draws a different batch


def test_export_curves_never_gates(tmp_path, capsys):
    # crank beta so agreement is poor: the exporter must still exit 0
    ini = write_ini(tmp_path, GDU_INI.replace("beta = 0.001", "beta = 0.5"))
    out = tmp_path / "out"
    code, stdout, _ = run_cli(["export-curves", "--config", ini, "--out", str(out)], capsys)
    assert code == 0
    payload = result_line(stdout)
    assert "passed" not in payload
    assert "threshold" not in payload
    assert (out / "curves.csv").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "export-curves"


def test_gdu_check_without_threshold_exits_2(tmp_path, capsys):
    ini = write_ini(tmp_path, GDU_INI.replace("threshold = 0.2\n", ""))
    code, _, stderr = run_cli(
        ["gdu-check", "--config", ini, "--out", str(tmp_path / "out")], capsys
    )
    assert code == 2
    assert "threshold" in stderr


# ---------------------------------------------------------------------------
# exit codes


def test_missing_key_exits_2_and_names_it(tmp_path, capsys):
    ini = write_ini(tmp_path, GDU_INI.replace("beta = 0.001\n", ""))
    code, _, stderr = run_cli(
        ["gdu-check", "--config", ini, "--out", str(tmp_path / "out")], capsys
    )
    assert code == 2
    assert "beta" in stderr


def test_unknown_preset_exits_2(tmp_path, capsys):
    # argparse rejects the choice itself, which is still exit code 2
    with pytest.raises(SystemExit) as info:
        main(["train", "--preset", "train-p-9h", "--out", str(tmp_path / "out")])
    assert info.value.code == 2
    assert "train-p-9h" in capsys.readouterr().err


def test_mnist_without_data_dir_exits_2(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("EQPROP_DATA_DIR", raising=False)
    ini = write_ini(tmp_path, GDU_INI.replace("data = toy", "data = mnist"))
    code, _, stderr = run_cli(
        ["gdu-check", "--config", ini, "--out", str(tmp_path / "out")], capsys
    )
    assert code == 2
    assert "EQPROP_DATA_DIR" in stderr


def test_divergent_training_exits_3(tmp_path, capsys):
    ini = write_ini(
        tmp_path,
        TRAIN_INI.replace("learning_rates = 0.2, 0.1, 0.1",
                          "learning_rates = 1e12, 1e12, 1e12")
                 .replace("T = 60", "T = 30")
                 .replace("epochs = 2", "epochs = 1"),
    )
    code, stdout, _ = run_cli(
        ["train", "--config", ini, "--out", str(tmp_path / "out")], capsys
    )
    assert code == 3
    payload = result_line(stdout)
    assert payload["exit"] == 3
    assert payload["phase"] in ("free", "nudged")
    assert payload["step"] >= 1


def test_bad_checkpoint_bytes_exit_2(tmp_path, capsys):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    code, _, stderr = run_cli(["eval", "--checkpoint", str(path)], capsys)
    assert code == 2
    assert "bytes 0..7" in stderr


# ---------------------------------------------------------------------------
# train / eval round trips


@pytest.fixture(scope="module")
def train_runs(tmp_path_factory):
    """Two identical CLI training runs into separate directories."""
    root = tmp_path_factory.mktemp("cli-train")
    ini = write_ini(root, TRAIN_INI)
    outs = [str(root / "run1"), str(root / "run2")]
    for out in outs:
        assert main(["train", "--config", ini, "--out", out]) == 0
    return ini, outs


def test_rerun_is_bitwise_identical_apart_from_wall_time(train_runs):
    _, (run1, run2) = train_runs
    h1 = open(os.path.join(run1, "history.csv")).read()
    h2 = open(os.path.join(run2, "history.csv")).read()
    assert strip_wall_column(h1) == strip_wall_column(h2)
    c1 = open(os.path.join(run1, "checkpoint.ckpt"), "rb").read()
    c2 = open(os.path.join(run2, "checkpoint.ckpt"), "rb").read()
    assert c1 == c2
    m1 = open(os.path.join(run1, "manifest.json")).read()
    m2 = open(os.path.join(run2, "manifest.json")).read()
    assert m1 == m2


def test_eval_reproduces_history_test_error(train_runs, capsys):
    ini, (run1, _) = train_runs
    ckpt = os.path.join(run1, "checkpoint.ckpt")
    code = main(["eval", "--config", ini, "--checkpoint", ckpt, "--split", "test"])
    stdout = capsys.readouterr().out
    assert code == 0
    payload = result_line(stdout)
    rows = open(os.path.join(run1, "history.csv")).read().strip().splitlines()
    last_test_error = float(rows[-1].split(",")[2])
    assert payload["error"] == last_test_error
    assert payload["examples"] == 20
    assert payload["epoch"] == 2


def test_eval_train_split(train_runs, capsys):
    ini, (run1, _) = train_runs
    ckpt = os.path.join(run1, "checkpoint.ckpt")
    code = main(["eval", "--config", ini, "--checkpoint", ckpt, "--split", "train"])
    stdout = capsys.readouterr().out
    assert code == 0
    payload = result_line(stdout)
    rows = open(os.path.join(run1, "history.csv")).read().strip().splitlines()
    assert payload["error"] == float(rows[-1].split(",")[1])
    assert payload["examples"] == 60


def test_algorithm_both_writes_paired_outputs(tmp_path, capsys):
    ini = write_ini(tmp_path, TRAIN_INI.replace("algorithm = ep", "algorithm = both"))
    out = tmp_path / "out"
    code, stdout, _ = run_cli(["train", "--config", ini, "--out", str(out)], capsys)
    assert code == 0
    payload = result_line(stdout)
    assert set(payload["final"]) == {"ep", "bptt"}
    names = {
        "history_ep.csv", "history_bptt.csv",
        "checkpoint_ep.ckpt", "checkpoint_bptt.ckpt",
    }
    for name in names:
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == names
    # the two algorithms start from one shared draw but walk different paths
    assert (out / "checkpoint_ep.ckpt").read_bytes() != (out / "checkpoint_bptt.ckpt").read_bytes()


def test_flag_overrides_reach_the_run(tmp_path, capsys):
    ini = write_ini(tmp_path, TRAIN_INI)
    out = tmp_path / "out"
    code, stdout, _ = run_cli(
        ["train", "--config", ini, "--out", str(out), "--epochs", "1",
         "--subset-train", "40", "--subset-test", "10"],
        capsys,
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["settings"]["epochs"] == 1
    assert manifest["data"] == {"source": "toy", "train_examples": 40, "test_examples": 10}
    rows = open(out / "history.csv").read().strip().splitlines()
    assert len(rows) == 2  # header plus one epoch


def test_zero_epochs_checkpoints_the_initialization(tmp_path, capsys):
    ini = write_ini(tmp_path, TRAIN_INI.replace("epochs = 2", "epochs = 0"))
    out = tmp_path / "out"
    code, stdout, _ = run_cli(["train", "--config", ini, "--out", str(out)], capsys)
    assert code == 0
    payload = result_line(stdout)
    assert payload["final"]["ep"] == {"train_error": None, "test_error": None}
    rows = open(out / "history.csv").read().strip().splitlines()
    assert len(rows) == 1  # header only

    from eqprop.training import checkpoint_load, init_params
    from eqprop.models import make_model

    header, params = checkpoint_load(str(out / "checkpoint.ckpt"))
    assert header["epoch"] == 0
    fresh = init_params(make_model("toy"), 7)
    assert all(p.tobytes() == fresh[n].tobytes() for n, p in params.items())


def test_eval_with_different_horizon_reports_and_exits_0(train_runs, capsys):
    ini, (run1, _) = train_runs
    ckpt = os.path.join(run1, "checkpoint.ckpt")
    with open(ini) as fh:
        text = fh.read()
    # widen the split so the coarse error rate can resolve the difference
    text = text.replace("subset_test = 20", "subset_test = 100")
    errors = {}
    for T in (3, 60):
        path = ini.replace("run.ini", f"horizon{T}.ini")
        with open(path, "w") as fh:
            fh.write(text.replace("T = 60", f"T = {T}"))
        code = main(["eval", "--config", path, "--checkpoint", ckpt])
        payload = result_line(capsys.readouterr().out)
        assert code == 0
        assert payload["T"] == T
        errors[T] = payload["error"]
    assert errors[3] != errors[60]  # 3 steps is far from the fixed point


def test_eval_missing_checkpoint_file_exits_2(tmp_path, capsys):
    code, _, stderr = run_cli(
        ["eval", "--checkpoint", str(tmp_path / "absent.ckpt")], capsys
    )
    assert code == 2
    assert "absent.ckpt" in stderr


def test_gdu_check_prints_per_series_table(tmp_path, capsys):
    ini = write_ini(tmp_path, GDU_INI)
    code, stdout, _ = run_cli(
        ["gdu-check", "--config", ini, "--out", str(tmp_path / "out")], capsys
    )
    assert code == 0
    table = [l for l in stdout.splitlines() if not l.startswith("RESULT ")]
    header = [l for l in table if "rmse" in l and "sign_agreement" in l]
    assert len(header) == 1
    for name in ("s0", "s1", "W01", "W0x", "W1x"):
        assert any(l.strip().startswith(name) for l in table)


def test_train_toy_preset_smoke(tmp_path, capsys):
    out = tmp_path / "out"
    code, stdout, _ = run_cli(
        ["train", "--preset", "train-toy", "--out", str(out),
         "--epochs", "1", "--subset-train", "40", "--subset-test", "20"],
        capsys,
    )
    assert code == 0
    payload = result_line(stdout)
    assert "ep" in payload["final"]
    assert (out / "history.csv").is_file()
    assert (out / "checkpoint.ckpt").is_file()
