import re
from pathlib import Path

import pytest
import yaml

from hsnvad.cli import main

TINY_CONFIG = """\
segments: 4
conv_channels: 4
hidden: 4
selected: 2
ranker_width: 4
log_every: 5
"""


@pytest.fixture
def config(tmp_path: Path) -> Path:
    path = tmp_path / "run.yaml"
    path.write_text(TINY_CONFIG)
    return path


@pytest.fixture
def checkpoint(tiny_data: Path, config: Path, tmp_path: Path) -> Path:
    out = tmp_path / "run"
    args = ["train", "--config", str(config), "--data", str(tiny_data)]
    assert main([*args, "--out", str(out), "--steps", "6"]) == 0
    return out / "checkpoint"


def test_gen_data(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    spec = tmp_path / "spec.yaml"
    spec.write_text("normal: 2\nanomaly: 2\nsegments: 4\nchannels: 3\nkind: human\n")
    assert main(["gen-data", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 0
    manifest = Path(capsys.readouterr().out.strip())
    assert manifest == tmp_path / "d" / "manifest.yaml"
    assert len(yaml.safe_load(manifest.read_text())["videos"]) == 4


@pytest.mark.parametrize(
    "text", ("kind: crowd\n", "segments: [\n", "duration: [0.5, 0.1]\n")
)
def test_gen_data_rejects_spec(tmp_path: Path, text: str) -> None:
    spec = tmp_path / "spec.yaml"
    spec.write_text(text)
    assert main(["gen-data", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 1
    assert not (tmp_path / "d").exists()


def test_train_writes_checkpoint_and_log(
    tiny_data: Path,
    config: Path,
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    out = tmp_path / "run"
    code = main(
        [
            "train",
            "--config",
            str(config),
            "--data",
            str(tiny_data),
            "--out",
            str(out),
            "--steps",
            "10",
            "--loss",
            "classical-ranking",
            "--set",
            "seed=4",
        ]
    )
    assert code == 0
    index = out / "checkpoint" / "checkpoint.yaml"
    assert capsys.readouterr().out.strip() == str(index)
    document = yaml.safe_load(index.read_text())
    assert document["updates"] == 10
    assert document["train"]["seed"] == 4
    log = (out / "train.log").read_text()
    assert "loss: classical-ranking" in log
    assert "phase 3/3 coupler" in log
    assert len(re.findall(r" step \d+ loss ", log)) == 10


def test_train_without_data(config: Path, tmp_path: Path) -> None:
    out = tmp_path / "run"
    args = ["train", "--config", str(config), "--out", str(out)]
    assert main([*args, "--data", str(tmp_path / "nowhere")]) == 1
    assert main(args) == 1
    assert not (out / "checkpoint").exists()


def test_train_rejects_config(tiny_data: Path, tmp_path: Path) -> None:
    args = ["train", "--data", str(tiny_data), "--out", str(tmp_path / "run")]
    assert main([*args, "--set", "hidden=0"]) == 1
    assert main([*args, "--set", "epochs=3"]) == 1
    assert main([*args, "--config", str(tmp_path / "missing.yaml")]) == 1


def test_eval_is_repeatable(
    checkpoint: Path,
    tiny_data: Path,
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    capsys.readouterr()
    args = ["eval", "--ckpt", str(checkpoint), "--data", str(tiny_data)]
    assert main([*args, "--report", str(tmp_path / "a.yaml")]) == 0
    assert main([*args, "--report", str(tmp_path / "b.yaml")]) == 0
    first, second = capsys.readouterr().out.split("\n")[:2]
    assert first == second
    assert first.startswith("AUC ")
    assert (tmp_path / "a.yaml").read_text() == (tmp_path / "b.yaml").read_text()
    report = yaml.safe_load((tmp_path / "a.yaml").read_text())
    assert report["videos"] == 4
    assert list(report["categories"]) == ["mixed"]
    assert "folds" not in report


def test_eval_with_folds_scores_and_selection(
    checkpoint: Path, tiny_data: Path, tmp_path: Path
) -> None:
    code = main(
        [
            "eval",
            "--ckpt",
            str(checkpoint),
            "--data",
            str(tiny_data),
            "--report",
            str(tmp_path / "report.yaml"),
            "--kfold",
            "2",
            "--dump-scores",
            str(tmp_path / "scores"),
            "--selection",
        ]
    )
    assert code == 0
    report = yaml.safe_load((tmp_path / "report.yaml").read_text())
    assert len(report["folds"]) == 2
    assert report["mean_auc"] == pytest.approx(sum(report["folds"]) / 2)
    assert report["selection"]["segments"] > 0
    assert len(list((tmp_path / "scores").iterdir())) == 4


def test_eval_bad_checkpoint(tiny_data: Path, tmp_path: Path) -> None:
    args = ["eval", "--ckpt", str(tmp_path), "--data", str(tiny_data)]
    assert main([*args, "--report", str(tmp_path / "r.yaml")]) == 1


def test_gradcheck(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["gradcheck"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["check", "max", "rel", "err", "status"]
    assert all(line.endswith("ok") for line in lines[1:])


def test_gradcheck_reports_injected_fault(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["gradcheck", "--inject-fault", "lstm"]) == 2
    rows = dict(
        (line.split()[0], line.split()[-1])
        for line in capsys.readouterr().out.splitlines()[1:]
    )
    assert rows["lstm"] == "FAIL"
    assert rows["add"] == "ok"


def test_compare_loss(
    tiny_data: Path,
    config: Path,
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
) -> None:
    report = tmp_path / "cmp" / "report.yaml"
    sibling = tmp_path / "cmp" / "train.log"
    sibling.parent.mkdir()
    sibling.write_text("kept\n")
    code = main(
        [
            "compare-loss",
            "--config",
            str(config),
            "--data",
            str(tiny_data),
            "--steps",
            "4",
            "--out",
            str(report),
        ]
    )
    assert code == 0
    document = yaml.safe_load(report.read_text())
    assert list(document) == ["self-rectifying", "classical-ranking", "delta"]
    assert document["delta"] == pytest.approx(
        document["self-rectifying"] - document["classical-ranking"]
    )
    assert capsys.readouterr().out.startswith("AUC delta ")
    log = (tmp_path / "cmp" / "report.yaml.log").read_text()
    assert "effective configuration" in log
    assert sibling.read_text() == "kept\n"


@pytest.mark.parametrize(
    "argv",
    (
        [],
        ["fit"],
        ["train", "--steps", "many"],
        ["gradcheck", "--inject-fault", "softmax"],
        ["eval", "--data", "x"],
    ),
)
def test_usage_errors(argv: list[str]) -> None:
    assert main(argv) == 1


def test_version(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip()
