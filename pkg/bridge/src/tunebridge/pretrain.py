"""Build a desk-scale base checkpoint with basic digit-sequence competence.

The paper-scale setup adapts a pretrained 7B model that already handles digit
tokens; at desk scale we stand in a tiny model pretrained here on generic
periodic digit-continuation text (random values, varying periods and lengths,
never a task dataset). Fine-tuning then only has to adapt, like LoRA on a real
pretrained checkpoint.
"""

from __future__ import annotations

import random
from pathlib import Path

import torch

from .data import pad_batch
from .model import ModelConfig, TinyCausalLM, save_model
from .tokenizer import CharTokenizer

FILLERS = (
    "Predict the continuation.",
    "The region for prediction is R1.",
    "Based on the historical data, please predict the next day.",
    "The data frequency is 30 minutes per point.",
    "Continue the series.",
)

# word soup for arbitrary middle lines; the model must learn to continue the
# digits of line 1 after ANY line 2, so the filler distribution stays broad
_WORDS = (
    "region date frequency point day weekend weekday holiday public demand "
    "load series prediction historical next start data cover value minute "
    "hour NSW VIC QLD rate price volume news weather minimum maximum humidity "
    "pressure the is of on for not and a in"
).split()


def _random_filler(rng: random.Random, horizon: int) -> str:
    kind = rng.random()
    if kind < 0.3:
        return f"Predict the next {horizon} points. " + rng.choice(FILLERS)
    if kind < 0.55:
        return rng.choice(FILLERS)
    if kind < 0.8:
        words = rng.choices(_WORDS, k=rng.randint(3, 18))
        return " ".join(words) + "."
    # semicolon field-list style: "NSW; 2021-1-3; Weekday; not a public holiday."
    fields = [rng.choice(_WORDS) for _ in range(rng.randint(2, 6))]
    fields.insert(1, f"{rng.randint(2015, 2022)}-{rng.randint(1, 12)}-{rng.randint(1, 28)}")
    return "; ".join(fields) + "."


def _render(value, decimals: int) -> str:
    return str(value) if decimals == 0 else f"{value:.{decimals}f}"


def synth_corpus_sample(rng: random.Random, max_chars: int = 250) -> str:
    while True:
        period = rng.choice((4, 6, 8))
        decimals = rng.choice((0, 1))
        if decimals == 0:
            pattern = [rng.randint(100, 999) for _ in range(period)]
        else:
            pattern = [round(rng.uniform(100, 999), 1) for _ in range(period)]
        repeats = rng.choice((2, 3))
        # long continuations bias generation away from stopping mid-horizon
        horizon = rng.choice((2 * period, min(3 * period, 16)))
        history = [pattern[i % period] for i in range(period * repeats)]
        target = [pattern[(len(history) + i) % period] for i in range(horizon)]
        filler = _random_filler(rng, horizon)
        rendered = lambda vs: ",".join(_render(v, decimals) for v in vs)
        text = rendered(history) + "\n" + filler + "\n" + rendered(target)
        if len(text) <= max_chars:
            return text


def prepare_base(
    out_dir: str | Path,
    steps: int = 2000,
    batch_size: int = 16,
    seed: int = 0,
    n_embd: int = 96,
    n_layer: int = 2,
    n_head: int = 4,
    n_positions: int = 256,
    lr: float = 1e-3,
    log_every: int = 100,
) -> Path:
    """Pretrain the tiny base on synthetic digit text and save the checkpoint."""
    torch.manual_seed(seed)
    rng = random.Random(seed)
    tokenizer = CharTokenizer()
    config = ModelConfig(
        vocab_size=tokenizer.vocab_size,
        n_positions=n_positions,
        n_embd=n_embd,
        n_layer=n_layer,
        n_head=n_head,
    )
    model = TinyCausalLM(config)
    optimizer = torch.optim.AdamW(model.parameters(), lr=lr)
    model.train()
    for step in range(1, steps + 1):
        rows = []
        for _ in range(batch_size):
            ids = tokenizer.encode(synth_corpus_sample(rng)) + [tokenizer.eos_id]
            rows.append(ids[:n_positions])
        batch = pad_batch(rows, tokenizer.pad_id)
        loss = model.loss(batch, tokenizer.pad_id)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if log_every and (step == 1 or step % log_every == 0):
            print(f"pretrain step {step:>5}  loss {loss.item():.4f}")
    out_dir = Path(out_dir)
    save_model(model, out_dir)
    tokenizer.save(out_dir / "tokenizer.json")
    (out_dir / "pretrain.txt").write_text(
        f"steps={steps} batch={batch_size} seed={seed} lr={lr}\n", encoding="utf-8"
    )
    return out_dir
