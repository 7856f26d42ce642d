"""End-to-end tests of the command surface.

These drive the real entry point (keycap.cli.run) in a temp directory with
a small synthetic corpus and a reduced model, checking outputs, exit
codes, and byte-level determinism.
"""

import json
import os
from pathlib import Path

import pytest

from keycap.cli import run
from keycap.data import load_dataset, split_records

DESK_ARGS = [
    "--encoder.embed_size", "24",
    "--encoder.hidden_size", "24",
    "--encoder.ffn_inner_size", "48",
    "--encoder.keyword_repr_size", "16",
    "--generator.word_embed_size", "24",
    "--generator.lstm_hidden", "32",
    "--generator.max_gen_len", "16",
    "--model.max_caption_len", "16",
    "--train.epochs", "3",
    "--train.batch_size", "8",
    "--train.learning_rate", "0.01",
    "--seed", "7",
]


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def synth(workdir, n=32, seed=7):
    assert run(["synth", "--synth.n", str(n), "--seed", str(seed)]) == 0
    return workdir / "dataset.jsonl"


class TestSynthCommand:
    def test_writes_loadable_dataset(self, workdir):
        path = synth(workdir)
        assert path.exists()
        assert len(load_dataset(path)) == 32

    def test_too_small_corpus_is_usage_error(self, workdir, capsys):
        assert run(["synth", "--synth.n", "2"]) == 1
        assert "synth.n" in capsys.readouterr().err


class TestTrainCommand:
    def test_writes_checkpoint_vocab_log_and_figure(self, workdir):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        assert (workdir / "model.kcap").exists()
        assert (workdir / "vocab.txt").exists()
        assert (workdir / "train_log.txt").exists()
        assert (workdir / "train_log.png").exists()
        log = (workdir / "train_log.txt").read_text().splitlines()
        assert any(line.startswith("epoch=") and "val_loss=" in line for line in log)
        assert any("batch=" in line and "loss=" in line for line in log)

    def test_missing_dataset_is_data_error(self, workdir, capsys):
        assert run(["train"] + DESK_ARGS) == 2
        assert "error" in capsys.readouterr().err

    def test_log_lines_are_flat_key_value(self, workdir):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        for line in (workdir / "train_log.txt").read_text().splitlines():
            for field in line.split():
                assert "=" in field


class TestGenerateCommand:
    def test_captions_cover_test_split_in_id_order(self, workdir):
        path = synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        assert run(["generate"] + DESK_ARGS) == 0
        lines = (workdir / "captions.tsv").read_text(encoding="utf-8").splitlines()
        ids = [line.split("\t")[0] for line in lines]
        test_ids = sorted(r.id for r in split_records(load_dataset(path, split_seed=7))["test"])
        assert ids == test_ids
        for line in lines:
            record_id, caption = line.split("\t", 1)
            assert caption.strip(), f"empty caption for {record_id}"

    def test_repeat_runs_are_byte_identical(self, workdir):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        assert run(["generate"] + DESK_ARGS) == 0
        first = (workdir / "captions.tsv").read_bytes()
        assert run(["generate"] + DESK_ARGS) == 0
        assert (workdir / "captions.tsv").read_bytes() == first

    def test_missing_checkpoint_is_explicit_data_error(self, workdir, capsys):
        synth(workdir)
        assert run(["generate"] + DESK_ARGS) == 2
        err = capsys.readouterr().err
        assert "checkpoint" in err

    def test_dimension_mismatch_names_both_values(self, workdir, capsys):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        args = list(DESK_ARGS)
        args[args.index("24") ] = "48"  # embed_size override
        assert run(["generate"] + args) == 1
        err = capsys.readouterr().err
        assert "24" in err and "48" in err and "encoder.embed_size" in err

    def test_wrong_vocab_file_is_data_error(self, workdir, capsys):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        (workdir / "vocab.txt").write_text("<pad>\n<unk>\n<s>\n</s>\n<sep>\nonly\n")
        assert run(["generate"] + DESK_ARGS) == 2
        assert "vocabulary" in capsys.readouterr().err


class TestEvaluateCommand:
    def test_report_has_all_fields_and_figure(self, workdir):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        assert run(["evaluate"] + DESK_ARGS) == 0
        blob = json.loads((workdir / "report.json").read_text())
        for field in ("bleu_1", "bleu_2", "bleu_3", "bleu_4",
                      "bleu_avg", "cider", "rouge_l", "meteor"):
            assert field in blob
            assert isinstance(blob[field], float)
        assert blob["corpus_size"] > 0
        assert (workdir / "report.png").exists()

    def test_candidates_equal_references_score_perfect_bleu(self, workdir):
        path = synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        test = split_records(load_dataset(path, split_seed=7))["test"]
        with open(workdir / "captions.tsv", "w", encoding="utf-8") as fh:
            for record in sorted(test, key=lambda r: r.id):
                fh.write(f"{record.id}\t{record.description}\n")
        assert run(["evaluate", "--evaluate.from_file", "true"] + DESK_ARGS) == 0
        blob = json.loads((workdir / "report.json").read_text())
        assert blob["bleu_1"] == pytest.approx(1.0, abs=1e-12)
        assert blob["rouge_l"] == pytest.approx(1.0, abs=1e-12)

    def test_from_file_missing_record_is_data_error(self, workdir, capsys):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        (workdir / "captions.tsv").write_text("synth-0000\tsomething\n")
        assert run(["evaluate", "--evaluate.from_file", "true"] + DESK_ARGS) == 2
        assert "no entry" in capsys.readouterr().err

    def test_report_runs_are_byte_identical(self, workdir):
        synth(workdir)
        assert run(["train"] + DESK_ARGS) == 0
        assert run(["evaluate"] + DESK_ARGS) == 0
        first = (workdir / "report.json").read_bytes()
        assert run(["evaluate"] + DESK_ARGS) == 0
        assert (workdir / "report.json").read_bytes() == first


class TestFullPipeline:
    def test_synth_train_generate_evaluate_end_to_end(self, workdir):
        synth(workdir, n=64)
        assert run(["train"] + DESK_ARGS) == 0
        assert run(["generate"] + DESK_ARGS) == 0
        assert run(["evaluate"] + DESK_ARGS) == 0
        blob = json.loads((workdir / "report.json").read_text())
        assert set(blob) >= {"bleu_1", "bleu_2", "bleu_3", "bleu_4",
                             "bleu_avg", "cider", "rouge_l", "meteor"}
        captions = (workdir / "captions.tsv").read_text(encoding="utf-8")
        assert len(captions.splitlines()) == blob["corpus_size"]

    def test_whole_pipeline_is_deterministic(self, workdir):
        synth(workdir, n=32)
        outputs = {}
        for attempt in ("a", "b"):
            assert run(["train"] + DESK_ARGS) == 0
            assert run(["generate"] + DESK_ARGS) == 0
            assert run(["evaluate"] + DESK_ARGS) == 0
            outputs[attempt] = tuple(
                (workdir / name).read_bytes()
                for name in ("model.kcap", "captions.tsv", "report.json")
            )
        assert outputs["a"] == outputs["b"]


class TestArgumentParsing:
    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        assert "keycap" in capsys.readouterr().out

    def test_no_args_is_usage_error(self, capsys):
        assert run([]) == 1

    def test_unknown_command_is_usage_error(self, capsys):
        assert run(["deploy"]) == 1
        assert "unknown command" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, capsys):
        assert run(["synth", "--bogus.key", "1"]) == 1
        assert "bogus.key" in capsys.readouterr().err

    def test_flag_missing_value_is_usage_error(self, capsys):
        assert run(["synth", "--synth.n"]) == 1
        assert "missing a value" in capsys.readouterr().err

    def test_positional_garbage_is_usage_error(self, capsys):
        assert run(["synth", "oops"]) == 1

    def test_config_file_feeds_run(self, workdir):
        (workdir / "run.cfg").write_text("synth.n=8\nseed=3\n")
        assert run(["synth", "--config", "run.cfg"]) == 0
        assert len(load_dataset(workdir / "dataset.jsonl")) == 8
