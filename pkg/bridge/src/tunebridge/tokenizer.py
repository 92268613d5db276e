"""Character-level tokenizer over printable ASCII.

Digit sequences tokenize one character at a time, which is exactly the
granularity the forecasting objective needs; a fixed vocabulary keeps every
base checkpoint compatible with every dataset.
"""

from __future__ import annotations

import json
import string
from pathlib import Path

PAD = "<pad>"
EOS = "<eos>"


class CharTokenizer:
    def __init__(self, chars: list[str] | None = None):
        if chars is None:
            chars = sorted(set(string.printable))
        self.chars = chars
        self.pad_id = 0
        self.eos_id = 1
        self._to_id = {c: i + 2 for i, c in enumerate(chars)}
        self._to_char = {i + 2: c for i, c in enumerate(chars)}

    @property
    def vocab_size(self) -> int:
        return len(self.chars) + 2

    def encode(self, text: str) -> list[int]:
        return [self._to_id[c] for c in text if c in self._to_id]

    def decode(self, ids: list[int]) -> str:
        return "".join(self._to_char.get(i, "") for i in ids)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps({"chars": self.chars}), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CharTokenizer":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["chars"])
