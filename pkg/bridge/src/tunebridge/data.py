"""Instruction-tuning dataset input: the line-json {instruction, input, output}
contract emitted by the forecasting pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .tokenizer import CharTokenizer

REQUIRED_FIELDS = ("instruction", "input", "output")


class DatasetError(Exception):
    """Schema violation; the message names the offending line."""


@dataclass(frozen=True)
class Example:
    instruction: str
    input: str
    output: str

    def text(self) -> str:
        return f"{self.instruction}\n{self.input}\n{self.output}"

    def prompt(self) -> str:
        return f"{self.instruction}\n{self.input}\n"


def load_dataset(path: str | Path) -> list[Example]:
    path = Path(path)
    examples: list[Example] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetError(f"{path}:{lineno}: not valid json ({e})")
            for field in REQUIRED_FIELDS:
                if field not in record or not isinstance(record[field], str):
                    raise DatasetError(f"{path}:{lineno}: missing or non-string field {field!r}")
            if not record["output"]:
                raise DatasetError(f"{path}:{lineno}: training example has an empty output")
            examples.append(Example(record["instruction"], record["input"], record["output"]))
    if not examples:
        raise DatasetError(f"{path}: dataset holds no examples")
    return examples


def encode_examples(
    examples: list[Example], tokenizer: CharTokenizer, n_positions: int
) -> list[list[int]]:
    encoded = []
    for i, ex in enumerate(examples):
        ids = tokenizer.encode(ex.text()) + [tokenizer.eos_id]
        if len(ids) > n_positions:
            raise DatasetError(
                f"example {i} needs {len(ids)} tokens but the model context is {n_positions}"
            )
        encoded.append(ids)
    return encoded


def pad_batch(rows: list[list[int]], pad_id: int) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor(
        [r + [pad_id] * (width - len(r)) for r in rows], dtype=torch.long
    )
