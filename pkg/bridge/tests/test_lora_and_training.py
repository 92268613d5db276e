from __future__ import annotations

import json

import pytest
import torch

from tunebridge.lora import apply_lora, load_adapter, lora_parameters, lora_state_dict
from tunebridge.model import load_model
from tunebridge.tokenizer import CharTokenizer
from tunebridge.training import TuneConfig, read_loss_log, tune

from conftest import write_copy_dataset


class TestLoRA:
    def test_wrapping_freezes_base_and_starts_at_identity(self, mini_base):
        model = load_model(mini_base)
        tok = CharTokenizer.load(mini_base / "tokenizer.json")
        ids = torch.tensor([tok.encode("123,456")])
        before = model(ids)

        wrapped = apply_lora(model, rank=8, alpha=16)
        assert wrapped, "no layers wrapped"
        after = model(ids)
        torch.testing.assert_close(before, after)  # B starts at zero

        trainable = lora_parameters(model)
        assert trainable
        total = sum(p.numel() for p in model.parameters())
        adapted = sum(p.numel() for p in trainable)
        assert adapted < total * 0.5  # only the low-rank factors train

    def test_adapter_round_trip(self, mini_base, tmp_path):
        model = load_model(mini_base)
        apply_lora(model, rank=8, alpha=16)
        with torch.no_grad():
            for p in lora_parameters(model):
                p.add_(torch.randn_like(p) * 0.01)
        state = lora_state_dict(model)
        torch.save(state, tmp_path / "adapter.pt")

        tok = CharTokenizer.load(mini_base / "tokenizer.json")
        ids = torch.tensor([tok.encode("987,654")])
        expected = model(ids)

        fresh = load_model(mini_base)
        apply_lora(fresh, rank=8, alpha=16)
        load_adapter(fresh, tmp_path / "adapter.pt")
        torch.testing.assert_close(fresh(ids), expected)


class TestTune:
    def tune_once(self, base, tmp_path, tag, **overrides):
        dataset = tmp_path / f"{tag}.jsonl"
        write_copy_dataset(dataset, 20, seed=3)
        settings = dict(
            base_model_id=str(base),
            dataset_path=str(dataset),
            output_dir=str(tmp_path / f"adapter-{tag}"),
            max_steps=40,
            batch_size=4,
            log_every=0,
        )
        settings.update(overrides)
        return tune(TuneConfig(**settings))

    def test_artifact_contents(self, mini_base, tmp_path):
        out = self.tune_once(mini_base, tmp_path, "a")
        assert (out / "adapter.pt").exists()
        assert (out / "tokenizer.json").exists()
        losses = read_loss_log(out)
        assert len(losses) == 40
        metadata = json.loads((out / "metadata.json").read_text())
        assert metadata["rank"] == 8
        assert metadata["alpha"] == 16
        assert metadata["lr"] == pytest.approx(1e-4)
        assert metadata["steps"] == 40
        assert "seed" in metadata and "base_model_id" in metadata

    def test_deterministic_under_seed(self, mini_base, tmp_path):
        out_a = self.tune_once(mini_base, tmp_path, "s1", seed=5)
        out_b = self.tune_once(mini_base, tmp_path, "s2", seed=5)
        assert read_loss_log(out_a) == read_loss_log(out_b)

    def test_missing_base_rejected(self, tmp_path):
        dataset = tmp_path / "d.jsonl"
        write_copy_dataset(dataset, 3, seed=0)
        config = TuneConfig(
            base_model_id=str(tmp_path / "nowhere"),
            dataset_path=str(dataset),
            output_dir=str(tmp_path / "out"),
        )
        with pytest.raises(FileNotFoundError, match="prepare-base"):
            tune(config)
