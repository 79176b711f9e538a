"""Tests for the guirl command line."""

import json

import pytest

from guirl.envs.synth_env import load_dataset
from guirl.policy.checkpoint import load_checkpoint
from guirl.scripts.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from guirl.utils.data_utils import read_csv_rows, read_jsonl

TINY = [
    "--total-steps", "4",
    "--hidden", "8",
    "--grid", "4",
    "--k-max", "3",
    "--group-size", "4",
    "--batch-size", "2",
    "--eval-steps", "2",
    "--logging-steps", "0",
    "--base-lr", "1e-2",
    "--max-workers", "1",
]


def data_lines(path):
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


@pytest.fixture
def datasets(tmp_path):
    train = tmp_path / "train.jsonl"
    held_out = tmp_path / "eval.jsonl"
    assert main(["gen-data", "--seed", "1", "--count", "12", "--k-max", "3", "--out", str(train)]) == EXIT_OK
    assert main(["gen-data", "--seed", "2", "--count", "6", "--k-max", "3", "--out", str(held_out)]) == EXIT_OK
    return train, held_out


def run_train(datasets, out_dir, *extra):
    train, held_out = datasets
    args = ["train", "--data", str(train), "--eval-data", str(held_out), "--out-dir", str(out_dir)]
    return main(args + TINY + list(extra))


@pytest.mark.unit
class TestParser:
    """Argument parser construction."""

    @pytest.mark.parametrize(
        "argv",
        [
            ["gen-data", "--out", "x.jsonl", "--min-box-fraction", "0.1"],
            ["train", "--data", "t.jsonl", "--out-dir", "run", "--grid", "8", "--beta", "0"],
            ["eval", "--checkpoint", "p.ckpt", "--data", "e.jsonl", "--resolution", "off"],
            ["score", "--predictions", "p.jsonl", "--annotations", "a.jsonl"],
            ["reward-check", "--text", "[1, 2]"],
            ["ablate", "--grid-file", "g.txt", "--data", "t.jsonl", "--out", "o.csv", "--grid", "8"],
        ],
    )
    def test_every_subcommand_parses(self, argv):
        """Test that the parser builds and accepts each subcommand."""
        args = build_parser().parse_args(argv)
        assert args.command == argv[0]
        assert callable(args.func)

    def test_ablate_keeps_grid_size_and_grid_file_apart(self):
        """Test that the grid file and the policy grid size are separate flags."""
        args = build_parser().parse_args(
            ["ablate", "--grid-file", "g.txt", "--data", "t.jsonl", "--out", "o.csv", "--grid", "8"]
        )
        assert args.grid_file == "g.txt"
        assert args.grid == 8


@pytest.mark.integration
class TestGenData:
    """gen-data subcommand."""

    def test_writes_dataset(self, tmp_path, capsys):
        """Test a seeded dataset and the summary line."""
        out = tmp_path / "train.jsonl"
        assert main(["gen-data", "--seed", "7", "--count", "50", "--out", str(out)]) == EXIT_OK
        assert "wrote 50 tasks (seed 7)" in capsys.readouterr().out
        assert len(load_dataset(out)) == 50

        again = tmp_path / "again.jsonl"
        main(["gen-data", "--seed", "7", "--count", "50", "--out", str(again)])
        assert out.read_text() == again.read_text()

    def test_zero_count(self, tmp_path):
        """Test that an empty dataset is valid."""
        out = tmp_path / "empty.jsonl"
        assert main(["gen-data", "--count", "0", "--out", str(out)]) == EXIT_OK
        assert load_dataset(out) == []

    def test_unwritable(self, tmp_path, capsys):
        """Test that a missing directory is a data error with a diagnostic."""
        out = tmp_path / "missing" / "train.jsonl"
        assert main(["gen-data", "--count", "1", "--out", str(out)]) == EXIT_DATA
        assert "gen-data" in capsys.readouterr().err

    def test_infeasible(self, tmp_path):
        """Test that boxes larger than the canvas are refused."""
        out = tmp_path / "x.jsonl"
        args = ["gen-data", "--out", str(out), "--canvas-min", "20x20", "--canvas-max", "40x40", "--min-box", "30"]
        assert main(args) == EXIT_DATA

    def test_bad_canvas(self, tmp_path):
        """Test that a malformed canvas size is a usage error."""
        assert main(["gen-data", "--out", str(tmp_path / "x"), "--canvas-min", "20by20"]) == EXIT_USAGE

    def test_usage_errors(self):
        """Test unknown flags and a missing subcommand."""
        assert main(["gen-data", "--out", "x", "--colour", "red"]) == EXIT_USAGE
        assert main([]) == EXIT_USAGE


@pytest.mark.integration
class TestRewardCheck:
    """reward-check subcommand."""

    def test_exemplar(self, capsys):
        """Test the strict exemplar completion."""
        text = "<think>find icon</think> <answer>[1,2,3,4]</answer>"
        assert main(["reward-check", "--text", text, "--format", "strict", "--accuracy", "iou"]) == EXIT_OK
        out = capsys.readouterr().out.strip()
        assert out == "format=1.0000 numbers=[1, 2, 3, 4] accuracy=- total=1.0000"

    def test_with_gt(self, capsys):
        """Test a full breakdown against a box."""
        args = ["reward-check", "--text", "<think>a</think><answer>[5, 5]</answer>", "--gt", "0,0,10,10"]
        assert main(args) == EXIT_OK
        out = capsys.readouterr().out.strip()
        assert out == "format=1.0000 numbers=[5, 5] accuracy=1.0000 total=2.0000"

    def test_zero_scores_succeed(self, capsys):
        """Test that a worthless completion still exits 0."""
        assert main(["reward-check", "--text", "nothing", "--gt", "0,0,10,10"]) == EXIT_OK
        assert "total=0.0000" in capsys.readouterr().out

    @pytest.mark.parametrize("gt", ["5,5,1,1", "a,b,c,d", "1,2,3"])
    def test_invalid_gt(self, gt):
        """Test that an invalid box is a data error."""
        assert main(["reward-check", "--text", "[1, 2]", "--gt", gt]) == EXIT_DATA

    def test_file(self, tmp_path, capsys):
        """Test one line of output per input line."""
        path = tmp_path / "completions.txt"
        path.write_text("<answer>[1, 2]</answer>\n<think>x</think>\n")
        assert main(["reward-check", "--file", str(path)]) == EXIT_OK
        assert len(capsys.readouterr().out.strip().splitlines()) == 2

    def test_blank_lines_are_scored(self, tmp_path, capsys):
        """Test that blank lines get a zero-format line of their own."""
        path = tmp_path / "completions.txt"
        path.write_text("<answer>[1, 2]</answer>\n\n<think>x</think>\n")
        assert main(["reward-check", "--file", str(path), "--format", "strict"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        assert lines[1] == "format=0.0000 numbers=[] accuracy=- total=0.0000"

    def test_oversized_integer(self, capsys):
        """Test that an integer too large for a float is a zero score, not a crash."""
        text = "<think>a</think><answer>[" + "9" * 400 + ", 5]</answer>"
        args = ["reward-check", "--text", text, "--format", "strict", "--gt", "0,0,10,10"]
        assert main(args) == EXIT_OK
        assert "numbers=[] accuracy=0.0000 total=1.0000" in capsys.readouterr().out

    def test_empty_file(self, tmp_path, capsys):
        """Test that an empty file prints nothing."""
        path = tmp_path / "empty.txt"
        path.write_text("")
        assert main(["reward-check", "--file", str(path)]) == EXIT_OK
        assert capsys.readouterr().out == ""

    def test_unreadable_file(self, tmp_path):
        """Test that a missing input file is a data error."""
        assert main(["reward-check", "--file", str(tmp_path / "none.txt")]) == EXIT_DATA


@pytest.mark.integration
class TestTrainAndEval:
    """train and eval subcommands."""

    def test_outputs(self, tmp_path, datasets):
        """Test the files written by a run."""
        out = tmp_path / "run"
        assert run_train(datasets, out) == EXIT_OK
        for name in ("config.cfg", "metrics.jsonl", "metrics.csv", "policy.ckpt"):
            assert (out / name).exists()
        assert "total_steps = 4" in (out / "config.cfg").read_text()
        metrics = [r for _, r in read_jsonl(out / "metrics.jsonl")]
        assert [r["step"] for r in metrics] == [1, 2, 3, 4]
        assert [r["eval_accuracy"] is not None for r in metrics] == [False, True, False, True]
        assert load_checkpoint(out / "policy.ckpt").step == 4

    def test_beta_zero_adversarial(self, tmp_path, datasets):
        """Test that the adversarial switch is inert at beta 0."""
        assert run_train(datasets, tmp_path / "on", "--beta", "0", "--adversarial", "on") == EXIT_OK
        assert run_train(datasets, tmp_path / "off", "--beta", "0", "--adversarial", "off") == EXIT_OK
        for name in ("metrics.jsonl", "metrics.csv"):
            assert (tmp_path / "on" / name).read_text() == (tmp_path / "off" / name).read_text()

    def test_sft_mode(self, tmp_path, datasets):
        """Test that SFT metrics replace the reward columns."""
        out = tmp_path / "sft"
        assert run_train(datasets, out, "--mode", "sft") == EXIT_OK
        rows = read_csv_rows(out / "metrics.csv")
        assert "sft_loss" in rows[0] and "mean_total_reward" not in rows[0]

    def test_config_file(self, tmp_path, datasets):
        """Test that flags override the config file, which overrides the recipe."""
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# small run\nbeta = 0.5\ngroup_size = 8\n")
        out = tmp_path / "run"
        assert run_train(datasets, out, "--config", str(cfg), "--beta", "0.25") == EXIT_OK
        text = (out / "config.cfg").read_text()
        assert "beta = 0.25" in text
        assert "group_size = 4" in text

    def test_bad_config_key(self, tmp_path, datasets):
        """Test that an unknown config key is a data error."""
        cfg = tmp_path / "run.cfg"
        cfg.write_text("betta = 0\n")
        assert run_train(datasets, tmp_path / "run", "--config", str(cfg)) == EXIT_DATA

    def test_resume(self, tmp_path, datasets):
        """Test that a resumed run ends where the straight run does."""
        assert run_train(datasets, tmp_path / "straight") == EXIT_OK
        assert run_train(datasets, tmp_path / "part", "--until-step", "2") == EXIT_OK
        resume = str(tmp_path / "part" / "policy.ckpt")
        assert run_train(datasets, tmp_path / "rest", "--resume", resume) == EXIT_OK
        straight = load_checkpoint(tmp_path / "straight" / "policy.ckpt")
        resumed = load_checkpoint(tmp_path / "rest" / "policy.ckpt")
        assert resumed.params.equal(straight.params)

    def test_eval(self, tmp_path, datasets):
        """Test reports with the resolution on and off."""
        out = tmp_path / "run"
        run_train(datasets, out)
        _, held_out = datasets
        checkpoint = str(out / "policy.ckpt")
        for resolution in ("on", "off"):
            args = ["eval", "--checkpoint", checkpoint, "--data", str(held_out), "--k-max", "3"]
            assert main(args + ["--resolution", resolution]) == EXIT_OK
        on = json.loads((out / "policy.eval.point.res-on.json").read_text())
        off = json.loads((out / "policy.eval.point.res-off.json").read_text())
        assert on["counts"] == off["counts"]
        assert sum(on["counts"].values()) == 6

    def test_eval_missing_checkpoint(self, tmp_path, datasets):
        """Test that a missing checkpoint fails."""
        _, held_out = datasets
        args = ["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(held_out)]
        assert main(args) == EXIT_DATA

    def test_eval_dimension_mismatch(self, tmp_path, datasets):
        """Test that evaluating with another encoder size fails."""
        out = tmp_path / "run"
        run_train(datasets, out)
        _, held_out = datasets
        args = ["eval", "--checkpoint", str(out / "policy.ckpt"), "--data", str(held_out), "--k-max", "5"]
        assert main(args) == EXIT_DATA


@pytest.mark.integration
class TestScore:
    """score subcommand."""

    def test_score(self, tmp_path, datasets):
        """Test scoring an external predictions file."""
        _, held_out = datasets
        tasks = load_dataset(held_out)
        predictions = tmp_path / "pred.jsonl"
        lines = []
        for task in tasks:
            c = task.gt.center
            lines.append(json.dumps({"id": task.id, "completion": f"<answer>[{c.x}, {c.y}]</answer>"}))
        predictions.write_text("\n".join(lines) + "\n")
        report = tmp_path / "report.json"
        args = ["score", "--predictions", str(predictions), "--annotations", str(held_out), "--out", str(report)]
        assert main(args) == EXIT_OK
        assert json.loads(report.read_text())["overall"] == 1.0

    def test_duplicates(self, tmp_path, datasets, capsys):
        """Test that duplicate ids fail naming the line."""
        _, held_out = datasets
        task_id = load_dataset(held_out)[0].id
        line = json.dumps({"id": task_id, "completion": "[1, 2]"})
        predictions = tmp_path / "pred.jsonl"
        predictions.write_text(f"{line}\n{line}\n")
        args = ["score", "--predictions", str(predictions), "--annotations", str(held_out)]
        assert main(args) == EXIT_DATA
        assert "pred.jsonl:2" in capsys.readouterr().err


@pytest.mark.integration
class TestAblate:
    """ablate subcommand."""

    def run_grid(self, tmp_path, datasets, grid_text):
        grid = tmp_path / "grid.txt"
        grid.write_text(grid_text)
        train, held_out = datasets
        out = tmp_path / "ablation.csv"
        code = main(
            ["ablate", "--grid-file", str(grid), "--data", str(train), "--eval-data", str(held_out), "--out", str(out)]
            + TINY
        )
        return code, out

    def test_grid(self, tmp_path, datasets):
        """Test one row per variant."""
        code, out = self.run_grid(
            tmp_path, datasets, "off: beta=0 adversarial=off\non: beta=0 adversarial=on\n"
        )
        assert code == EXIT_OK
        rows = read_csv_rows(out)
        assert [r["variant"] for r in rows] == ["off", "on"]
        assert rows[0]["reward_last"] == rows[1]["reward_last"]

    def test_empty_grid(self, tmp_path, datasets):
        """Test that an empty grid succeeds with an empty table."""
        code, out = self.run_grid(tmp_path, datasets, "# nothing yet\n")
        assert code == EXIT_OK
        assert read_csv_rows(out) == []

    def test_malformed_line(self, tmp_path, datasets):
        """Test that a line without assignments is a data error."""
        code, _ = self.run_grid(tmp_path, datasets, "beta0\n")
        assert code == EXIT_DATA
