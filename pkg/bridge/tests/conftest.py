from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from tunebridge.pretrain import prepare_base


@pytest.fixture(scope="session")
def mini_base(tmp_path_factory) -> Path:
    """A nearly untrained base for fast unit tests."""
    out = tmp_path_factory.mktemp("mini") / "base"
    return prepare_base(
        out, steps=25, batch_size=4, seed=0,
        n_embd=32, n_layer=1, n_head=2, n_positions=192, log_every=0,
    )


@pytest.fixture(scope="session")
def digit_base(tmp_path_factory) -> Path:
    """The real desk-scale base: pretrained until it copies periodic digit
    patterns (a few minutes, built once per session)."""
    out = tmp_path_factory.mktemp("real") / "base"
    return prepare_base(
        out, steps=1500, batch_size=12, seed=0,
        n_embd=96, n_layer=2, n_head=4, n_positions=256, lr=1e-3, log_every=500,
    )


def write_copy_dataset(path: Path, count: int, seed: int, period: int = 8) -> list[dict]:
    """Synthetic forecasting dataset in the emitted line-json contract:
    two periods of history, one period to predict."""
    rng = random.Random(seed)
    records = []
    for _ in range(count):
        pattern = [rng.randint(100, 999) for _ in range(period)]
        history = pattern * 2
        records.append({
            "instruction": ",".join(map(str, history)),
            "input": f"The region for prediction is R1. Predict the next {period} points.",
            "output": ",".join(map(str, pattern)),
        })
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(json.dumps(r) for r in records), encoding="utf-8")
    return records
