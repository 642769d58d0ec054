"""Command-line interface: subcommands, flags, file outputs, exit codes."""

from __future__ import annotations

import json
import math

import pytest
from click.testing import CliRunner

from weavecache.cli import cli
from weavecache.reorder import read_examples_jsonl
from weavecache.simulator import CSV_COLUMNS

SMALL_FLAGS = [
    "--frames", "60", "--events", "4", "--dim", "8", "--tokens-per-frame", "3",
    "--noise-sigma", "0.2", "--queries", "12", "--horizon", "mixed", "--seed", "5",
]
RUN_FLAGS = ["--window-c", "6", "--k", "16", "--m-coarse", "32", "--tau", "0.2"]


@pytest.fixture()
def runner():
    return CliRunner()


def run_ok(runner, args, **kwargs):
    result = runner.invoke(cli, args, catch_exceptions=False, **kwargs)
    assert result.exit_code == 0, result.output
    return result


def gen_small(runner, tmp_path, extra=()):
    tmp_path.mkdir(parents=True, exist_ok=True)
    stream = tmp_path / "stream.jsonl"
    run_ok(runner, ["generate", *SMALL_FLAGS, *extra, "--out", str(stream)])
    return stream, tmp_path / "queries.jsonl"


class TestGenerate:
    def test_writes_both_files(self, runner, tmp_path):
        stream, queries = gen_small(runner, tmp_path)
        assert stream.exists()
        assert queries.exists()
        assert len(stream.read_text().splitlines()) == 60
        qlines = queries.read_text().splitlines()
        assert len(qlines) == 13  # header + 12 queries
        assert json.loads(qlines[0])["kind"] == "header"

    def test_byte_identical_rerun(self, runner, tmp_path):
        s1, q1 = gen_small(runner, tmp_path / "a")
        s2, q2 = gen_small(runner, tmp_path / "b")
        assert s1.read_bytes() == s2.read_bytes()
        assert q1.read_bytes() == q2.read_bytes()

    def test_seed_changes_output(self, runner, tmp_path):
        s1, _ = gen_small(runner, tmp_path / "a")
        stream2 = tmp_path / "b" / "stream.jsonl"
        (tmp_path / "b").mkdir()
        run_ok(runner, ["generate", *SMALL_FLAGS[:-2], "--seed", "6",
                        "--out", str(stream2)])
        assert s1.read_bytes() != stream2.read_bytes()

    def test_explicit_queries_path(self, runner, tmp_path):
        qpath = tmp_path / "custom_queries.jsonl"
        run_ok(runner, ["generate", *SMALL_FLAGS,
                        "--out", str(tmp_path / "s.jsonl"),
                        "--out-queries", str(qpath)])
        assert qpath.exists()

    def test_missing_out_is_usage_error(self, runner):
        result = runner.invoke(cli, ["generate"])
        assert result.exit_code == 2

    def test_bad_dim_is_domain_error(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["generate", "--dim", "1", "--out", str(tmp_path / "s.jsonl")]
        )
        assert result.exit_code == 1
        assert "ConfigError" in result.output
        assert "dim" in result.output

    def test_json_mode(self, runner, tmp_path):
        result = run_ok(runner, ["--json", "generate", *SMALL_FLAGS,
                                 "--out", str(tmp_path / "s.jsonl")])
        body = json.loads(result.output)
        assert body["n_frames"] == 60
        assert body["n_queries"] == 12


class TestSimulate:
    def test_csv_row(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = run_ok(runner, ["simulate", "--stream", str(stream),
                                 *RUN_FLAGS, "--delta", "0.6"])
        lines = result.output.strip().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        cells = lines[1].split(",")
        assert len(cells) == 6
        assert float(cells[0]) == 0.6

    def test_inline_generation_matches_files(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        via_files = run_ok(runner, ["simulate", "--stream", str(stream),
                                    *RUN_FLAGS, "--delta", "0.6"])
        inline = run_ok(runner, ["simulate", *SMALL_FLAGS,
                                 *RUN_FLAGS, "--delta", "0.6"])
        # Wall time differs run to run; all other columns agree.
        a = via_files.output.strip().splitlines()[1].split(",")[:5]
        b = inline.output.strip().splitlines()[1].split(",")[:5]
        assert a == b

    def test_local_only_equals_inf_delta(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        by_policy = run_ok(runner, ["simulate", "--stream", str(stream),
                                    "--policy", "local_only", *RUN_FLAGS])
        by_delta = run_ok(runner, ["simulate", "--stream", str(stream),
                                   *RUN_FLAGS, "--delta", "inf"])
        a = by_policy.output.strip().splitlines()[1].split(",")[:5]
        b = by_delta.output.strip().splitlines()[1].split(",")[:5]
        assert a == b
        assert a[0] == "inf"

    def test_always_recall_equals_zero_delta(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        by_policy = run_ok(runner, ["simulate", "--stream", str(stream),
                                    "--policy", "always_recall", *RUN_FLAGS])
        by_delta = run_ok(runner, ["simulate", "--stream", str(stream),
                                   *RUN_FLAGS, "--delta", "0"])
        a = by_policy.output.strip().splitlines()[1].split(",")[:5]
        b = by_delta.output.strip().splitlines()[1].split(",")[:5]
        assert a == b
        assert float(a[4]) == 1.0  # always triggers

    def test_trace_out(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        traces = tmp_path / "traces.jsonl"
        run_ok(runner, ["simulate", "--stream", str(stream), *RUN_FLAGS,
                        "--delta", "0.6", "--trace-out", str(traces)])
        lines = [json.loads(l) for l in traces.read_text().splitlines()]
        assert len(lines) == 12
        assert [t["qid"] for t in lines] == list(range(12))
        for t in lines:
            assert set(t) == {"qid", "horizon", "target_event", "correct",
                              "recall_at_k", "trace"}
            assert t["trace"]["v"] == 1
            assert t["trace"]["branch"] in ("local_answer", "recall")

    def test_json_mode(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = run_ok(runner, ["--json", "simulate", "--stream", str(stream),
                                 *RUN_FLAGS, "--delta", "0.6"])
        body = json.loads(result.output)
        assert set(body) == set(CSV_COLUMNS)

    def test_missing_stream_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["simulate", "--stream",
                                     str(tmp_path / "absent.jsonl")])
        assert result.exit_code == 2  # click validates the path


class TestSweep:
    def test_table_and_monotone_ops(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = run_ok(runner, ["sweep", "--stream", str(stream),
                                 "--deltas", "0,0.3,0.6,0.9,inf", *RUN_FLAGS])
        lines = result.output.strip().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 6
        ops = [float(l.split(",")[3]) for l in lines[1:]]
        assert all(a >= b for a, b in zip(ops, ops[1:]))
        assert lines[-1].split(",")[0] == "inf"

    def test_out_file_matches_stdout(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        out = tmp_path / "sweep.csv"
        result = run_ok(runner, ["sweep", "--stream", str(stream),
                                 "--deltas", "0,0.6", *RUN_FLAGS,
                                 "--out", str(out)])
        assert out.read_text() == result.output

    def test_duplicate_deltas_warn_and_drop(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = runner.invoke(
            cli,
            ["sweep", "--stream", str(stream), "--deltas", "0.6,0.6,0.3",
             *RUN_FLAGS],
            catch_exceptions=False,
        )
        assert result.exit_code == 0
        assert "duplicate delta 0.6 dropped" in result.stderr
        lines = result.stdout.strip().splitlines()
        assert [l.split(",")[0] for l in lines[1:]] == ["0.6", "0.3"]

    def test_empty_deltas_usage_error(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = runner.invoke(cli, ["sweep", "--stream", str(stream),
                                     "--deltas", ","])
        assert result.exit_code == 2
        assert "--deltas" in result.output

    def test_unparsable_delta_usage_error(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = runner.invoke(cli, ["sweep", "--stream", str(stream),
                                     "--deltas", "0.1,later"])
        assert result.exit_code == 2
        assert "later" in result.output

    def test_negative_delta_domain_error(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = runner.invoke(cli, ["sweep", "--stream", str(stream),
                                     "--deltas", "-1"])
        assert result.exit_code == 1
        assert "InvalidParameterError" in result.output

    def test_json_mode(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        result = run_ok(runner, ["--json", "sweep", "--stream", str(stream),
                                 "--deltas", "0,inf", *RUN_FLAGS])
        rows = json.loads(result.output)
        assert [r["delta"] for r in rows] == [0.0, "inf"]


class TestShuffle:
    def test_groups_of_four(self, runner, tmp_path):
        stream = tmp_path / "stream.jsonl"
        run_ok(runner, ["generate", "--frames", "16", "--events", "2",
                        "--dim", "4", "--tokens-per-frame", "1",
                        "--noise-sigma", "0.1", "--queries", "0",
                        "--horizon", "current", "--seed", "1",
                        "--out", str(stream)])
        out = tmp_path / "examples.jsonl"
        run_ok(runner, ["shuffle", "--in", str(stream), "--group", "4",
                        "--seed", "9", "--count", "3", "--out", str(out)])
        examples = read_examples_jsonl(out)
        assert len(examples) == 3
        for ex in examples:
            assert len(ex["target_ranges"]) == 4
            assert sorted(ex["pi"]) == [0, 1, 2, 3]
            assert [s["slot_ts"] for s in ex["slots"]] == [0.0, 4.0, 8.0, 12.0]
        # Different seeds across examples: not all permutations equal.
        assert len({tuple(ex["pi"]) for ex in examples}) > 1

    def test_prompt_instruction_first(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        out = tmp_path / "ex.jsonl"
        run_ok(runner, ["shuffle", "--in", str(stream), "--out", str(out)])
        ex = read_examples_jsonl(out)[0]
        assert ex["prompt"].splitlines()[0] == (
            "These video segments are shuffled. "
            "List each segment's true time range."
        )

    def test_empty_stream_fails(self, runner, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        result = runner.invoke(cli, ["shuffle", "--in", str(empty),
                                     "--out", str(tmp_path / "x.jsonl")])
        assert result.exit_code == 1
        assert "EmptyInputError" in result.output


class TestEvalReorder:
    def make_examples(self, runner, tmp_path, count=4):
        stream, _ = gen_small(runner, tmp_path)
        truth = tmp_path / "truth.jsonl"
        run_ok(runner, ["shuffle", "--in", str(stream), "--group", "10",
                        "--seed", "2", "--count", str(count),
                        "--out", str(truth)])
        return truth

    def test_identity_predictions_score_one(self, runner, tmp_path):
        truth = self.make_examples(runner, tmp_path)
        pred = tmp_path / "pred.jsonl"
        with open(pred, "w") as fp:
            for ex in read_examples_jsonl(truth):
                fp.write(json.dumps(
                    {"ranges": [list(r) for r in ex["target_ranges"]]}) + "\n")
        result = run_ok(runner, ["eval-reorder", "--pred", str(pred),
                                 "--truth", str(truth), "--bins", "5"])
        assert "mean exact match: 1.0000" in result.output
        assert "mean kendall tau: 1.0000" in result.output
        # All probability mass sits in the closed top bin.
        top_line = [l for l in result.output.splitlines() if "[0.80, 1.00]" in l]
        assert top_line and top_line[0].strip().endswith("4")

    def test_length_mismatch_exit_one(self, runner, tmp_path):
        truth = self.make_examples(runner, tmp_path, count=3)
        pred = tmp_path / "pred.jsonl"
        pred.write_text('{"ranges": [[0.0, 1.0]]}\n')
        result = runner.invoke(cli, ["eval-reorder", "--pred", str(pred),
                                     "--truth", str(truth)])
        assert result.exit_code == 1
        assert "ShapeError" in result.output

    def test_json_mode(self, runner, tmp_path):
        truth = self.make_examples(runner, tmp_path, count=2)
        pred = tmp_path / "pred.jsonl"
        with open(pred, "w") as fp:
            for ex in read_examples_jsonl(truth):
                fp.write(json.dumps(
                    {"ranges": [list(r) for r in ex["target_ranges"]]}) + "\n")
        result = run_ok(runner, ["--json", "eval-reorder", "--pred", str(pred),
                                 "--truth", str(truth)])
        body = json.loads(result.output)
        assert body["mean_exact_match"] == 1.0
        assert len(body["scores"]) == 2


class TestConfigFile:
    def test_file_overrides_defaults_flags_override_file(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[gate]\ndelta_nats = inf\n\n[retrieval]\nk = 16\n"
                       "m_coarse = 32\n\n[memory]\nwindow_c = 6\n\n"
                       "[answerer]\ntau = 0.2\n")
        from_file = run_ok(runner, ["--config", str(cfg), "simulate",
                                    "--stream", str(stream)])
        assert from_file.output.strip().splitlines()[1].split(",")[0] == "inf"
        overridden = run_ok(runner, ["--config", str(cfg), "simulate",
                                     "--stream", str(stream), "--delta", "0"])
        cells = overridden.output.strip().splitlines()[1].split(",")
        assert cells[0] == "0.0"
        assert float(cells[4]) == 1.0

    def test_simulator_section_feeds_generate(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[simulator]\nn_frames = 30\nn_events = 3\ndim = 8\n"
                       "tokens_per_frame = 2\nnoise_sigma = 0.2\n"
                       "n_queries = 4\nquery_horizon = 'current'\nseed = 2\n")
        out = tmp_path / "s.jsonl"
        run_ok(runner, ["--config", str(cfg), "generate", "--out", str(out)])
        assert len(out.read_text().splitlines()) == 30
        # A flag still wins over the file.
        out2 = tmp_path / "s2.jsonl"
        run_ok(runner, ["--config", str(cfg), "generate", "--frames", "40",
                        "--out", str(out2)])
        assert len(out2.read_text().splitlines()) == 40

    def test_unknown_config_key_fails(self, runner, tmp_path):
        stream, _ = gen_small(runner, tmp_path)
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[gate]\ndelta = 0.5\n")
        result = runner.invoke(cli, ["--config", str(cfg), "simulate",
                                     "--stream", str(stream)])
        assert result.exit_code == 1
        assert "unknown config key" in result.output

    def test_unknown_simulator_key_fails(self, runner, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[simulator]\nframes = 30\n")
        result = runner.invoke(cli, ["--config", str(cfg), "generate",
                                     "--out", str(tmp_path / "s.jsonl")])
        assert result.exit_code == 1


class TestBench:
    def test_table(self, runner):
        result = run_ok(runner, ["bench", "--frames", "200", "--events", "4",
                                 "--dim", "8", "--tokens-per-frame", "2",
                                 "--repeat", "1"])
        assert "coarse" in result.output
        assert "c2f" in result.output
        assert "fine" in result.output

    def test_json(self, runner):
        # m_coarse (256) well under n (1200) is where the two-stage
        # path actually saves ops over the oracle.
        result = run_ok(runner, ["--json", "bench", "--frames", "1200",
                                 "--events", "4", "--dim", "8",
                                 "--tokens-per-frame", "2", "--repeat", "1"])
        rows = {r["stage"]: r for r in json.loads(result.output)}
        assert set(rows) == {"coarse", "c2f", "fine"}
        for row in rows.values():
            assert row["sim_ops"] > 0
            assert row["best_ms"] >= 0.0
        assert rows["c2f"]["sim_ops"] < rows["fine"]["sim_ops"]


class TestGroupBasics:
    def test_help(self, runner):
        result = run_ok(runner, ["--help"])
        for sub in ("generate", "simulate", "sweep", "shuffle", "eval-reorder",
                    "bench"):
            assert sub in result.output

    def test_version(self, runner):
        result = run_ok(runner, ["--version"])
        assert "0.1.0" in result.output

    def test_no_args_shows_usage(self, runner):
        result = runner.invoke(cli, [])
        assert result.exit_code in (0, 2)
        assert "Usage" in result.output
