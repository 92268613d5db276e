from __future__ import annotations

import json

import pytest

from tunebridge.data import DatasetError, Example, encode_examples, load_dataset, pad_batch
from tunebridge.tokenizer import CharTokenizer
from tunebridge.training import TuneConfig

from conftest import write_copy_dataset


class TestLoadDataset:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "d.jsonl"
        records = write_copy_dataset(path, 5, seed=1)
        examples = load_dataset(path)
        assert len(examples) == 5
        assert examples[0].output == records[0]["output"]

    def test_missing_field_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        good = json.dumps({"instruction": "1,2", "input": "x", "output": "3"})
        bad = json.dumps({"instruction": "1,2", "input": "x"})
        path.write_text(good + "\n" + bad, encoding="utf-8")
        with pytest.raises(DatasetError, match=":2"):
            load_dataset(path)

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("{oops", encoding="utf-8")
        with pytest.raises(DatasetError, match=":1"):
            load_dataset(path)

    def test_empty_output_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps({"instruction": "1", "input": "x", "output": ""}))
        with pytest.raises(DatasetError, match="empty output"):
            load_dataset(path)

    def test_empty_dataset_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(DatasetError, match="no examples"):
            load_dataset(path)


class TestEncoding:
    def test_context_overflow_rejected(self):
        tok = CharTokenizer()
        long_example = Example("9" * 500, "x", "1")
        with pytest.raises(DatasetError, match="context"):
            encode_examples([long_example], tok, n_positions=64)

    def test_pad_batch_shape(self):
        tok = CharTokenizer()
        rows = [tok.encode("1,2"), tok.encode("1,2,3,4")]
        batch = pad_batch(rows, tok.pad_id)
        assert batch.shape[0] == 2
        assert batch.shape[1] == max(len(r) for r in rows)
        assert batch[0, -1].item() == tok.pad_id

    def test_tokenizer_round_trip(self):
        tok = CharTokenizer()
        text = "596,741\nPredict the next 8 points.\n123"
        assert tok.decode(tok.encode(text)) == text


class TestTuneConfig:
    def test_rank_12_rejected(self):
        with pytest.raises(ValueError, match="lora_rank"):
            TuneConfig(base_model_id="b", dataset_path="d", output_dir="o", lora_rank=12)

    def test_defaults_match_tuning_recipe(self):
        config = TuneConfig(base_model_id="b", dataset_path="d", output_dir="o")
        assert config.lora_rank in (8, 16)
        assert config.lora_alpha == 16
        assert config.learning_rate == pytest.approx(1e-4)

    def test_bad_steps_rejected(self):
        with pytest.raises(ValueError):
            TuneConfig(base_model_id="b", dataset_path="d", output_dir="o", max_steps=0)
