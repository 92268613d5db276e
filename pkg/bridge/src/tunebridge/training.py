"""Low-rank fine-tuning over the dataset contract.

The loss is the standard next-token objective over the concatenated
instruction/input/output text, matching the base model's pretraining
objective.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import torch

from .data import encode_examples, load_dataset, pad_batch
from .lora import apply_lora, lora_parameters, save_adapter
from .model import load_model
from .tokenizer import CharTokenizer

ALLOWED_RANKS = (8, 16)


@dataclass
class TuneConfig:
    base_model_id: str
    dataset_path: str
    output_dir: str
    lora_rank: int = 8
    lora_alpha: int = 16
    learning_rate: float = 1e-4
    max_steps: int = 500
    batch_size: int = 8
    seed: int = 0
    log_every: int = 20

    def __post_init__(self):
        if self.lora_rank not in ALLOWED_RANKS:
            raise ValueError(f"lora_rank must be one of {ALLOWED_RANKS}, got {self.lora_rank}")
        if self.lora_alpha <= 0:
            raise ValueError("lora_alpha must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def _batches(encoded: list[list[int]], batch_size: int, rng: random.Random):
    """Cycle through seeded shuffles of the dataset forever."""
    while True:
        order = list(range(len(encoded)))
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            yield [encoded[i] for i in order[start : start + batch_size]]


def tune(config: TuneConfig) -> Path:
    """Train adapters and save the artifact directory; returns its path."""
    base_dir = Path(config.base_model_id)
    if not (base_dir / "model.pt").exists():
        raise FileNotFoundError(
            f"base model not resolvable at {base_dir}; run `tunebridge prepare-base` first"
        )
    torch.manual_seed(config.seed)
    rng = random.Random(config.seed)

    model = load_model(base_dir)
    tokenizer = CharTokenizer.load(base_dir / "tokenizer.json")
    examples = load_dataset(config.dataset_path)
    encoded = encode_examples(examples, tokenizer, model.config.n_positions)

    wrapped = apply_lora(model, config.lora_rank, config.lora_alpha)
    if not wrapped:
        raise RuntimeError("no adapter targets found in the base model")
    optimizer = torch.optim.AdamW(lora_parameters(model), lr=config.learning_rate)

    losses: list[float] = []
    batch_size = config.batch_size
    batch_iter = _batches(encoded, batch_size, rng)
    model.train()
    step = 0
    while step < config.max_steps:
        rows = next(batch_iter)
        try:
            batch = pad_batch(rows, tokenizer.pad_id)
            loss = model.loss(batch, tokenizer.pad_id)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        except RuntimeError as e:
            if "out of memory" in str(e).lower() and batch_size > 1:
                batch_size = max(batch_size // 2, 1)  # documented reduced-batch fallback
                batch_iter = _batches(encoded, batch_size, rng)
                print(f"memory pressure: retrying with batch size {batch_size}")
                continue
            raise
        step += 1
        losses.append(float(loss.item()))
        if config.log_every and (step == 1 or step % config.log_every == 0):
            print(f"tune step {step:>5}  loss {losses[-1]:.4f}")

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_adapter(model, out_dir / "adapter.pt")
    tokenizer.save(out_dir / "tokenizer.json")
    metadata = {
        "base_model_id": str(base_dir.resolve()),
        "rank": config.lora_rank,
        "alpha": config.lora_alpha,
        "lr": config.learning_rate,
        "steps": config.max_steps,
        "seed": config.seed,
        "dataset": str(Path(config.dataset_path).resolve()),
        "examples": len(examples),
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    (out_dir / "metadata.json").write_text(json.dumps(metadata, indent=2), encoding="utf-8")
    with (out_dir / "loss_log.csv").open("w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for i, value in enumerate(losses, start=1):
            fh.write(f"{i},{value}\n")
    return out_dir


def read_loss_log(artifact_dir: str | Path) -> list[float]:
    lines = (Path(artifact_dir) / "loss_log.csv").read_text().splitlines()[1:]
    return [float(line.split(",")[1]) for line in lines if line]
