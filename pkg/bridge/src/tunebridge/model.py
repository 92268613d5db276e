"""A small GPT-style causal language model, sized for desk-scale training."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class ModelConfig:
    vocab_size: int
    n_positions: int = 256
    n_embd: int = 96
    n_layer: int = 3
    n_head: int = 4

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(asdict(self)), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelConfig":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _rotary(q: torch.Tensor, k: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Rotary position encoding on the head dimension (GPT-NeoX style)."""
    head_dim = q.size(-1)
    t = q.size(-2)
    half = head_dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(0, half, dtype=torch.float32) / half
    )
    angles = torch.arange(t, dtype=torch.float32)[:, None] * freqs[None, :]
    cos, sin = torch.cos(angles), torch.sin(angles)

    def rotate(x):
        x1, x2 = x[..., :half], x[..., half:]
        return torch.cat((x1 * cos - x2 * sin, x1 * sin + x2 * cos), dim=-1)

    return rotate(q), rotate(k)


class Attention(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_head = config.n_head
        self.qkv = nn.Linear(config.n_embd, 3 * config.n_embd)
        self.proj = nn.Linear(config.n_embd, config.n_embd)

    def forward(self, x):
        b, t, d = x.shape
        q, k, v = self.qkv(x).split(d, dim=2)
        heads = lambda m: m.view(b, t, self.n_head, d // self.n_head).transpose(1, 2)
        q, k = _rotary(heads(q), heads(k))
        out = F.scaled_dot_product_attention(q, k, heads(v), is_causal=True)
        return self.proj(out.transpose(1, 2).reshape(b, t, d))


class Block(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(config.n_embd)
        self.attn = Attention(config)
        self.ln2 = nn.LayerNorm(config.n_embd)
        self.fc = nn.Linear(config.n_embd, 4 * config.n_embd)
        self.proj = nn.Linear(4 * config.n_embd, config.n_embd)

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        x = x + self.proj(F.gelu(self.fc(self.ln2(x))))
        return x


class TinyCausalLM(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.n_embd)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layer))
        self.ln_f = nn.LayerNorm(config.n_embd)
        self.head = nn.Linear(config.n_embd, config.vocab_size, bias=False)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        b, t = ids.shape
        if t > self.config.n_positions:
            raise ValueError(f"sequence of {t} tokens exceeds context {self.config.n_positions}")
        x = self.tok_emb(ids)
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))

    def loss(self, ids: torch.Tensor, pad_id: int) -> torch.Tensor:
        """Next-token cross entropy over the full concatenated text."""
        logits = self.forward(ids[:, :-1])
        targets = ids[:, 1:]
        return F.cross_entropy(
            logits.reshape(-1, logits.size(-1)), targets.reshape(-1), ignore_index=pad_id
        )

    @torch.no_grad()
    def generate(self, ids: list[int], max_new_tokens: int, stop_ids: set[int]) -> list[int]:
        self.eval()
        context = list(ids)
        out: list[int] = []
        for _ in range(max_new_tokens):
            window = context[-(self.config.n_positions - 1):]
            logits = self.forward(torch.tensor([window], dtype=torch.long))
            next_id = int(torch.argmax(logits[0, -1]))
            if next_id in stop_ids:
                break
            out.append(next_id)
            context.append(next_id)
        return out


def save_model(model: TinyCausalLM, directory: str | Path):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    model.config.save(directory / "config.json")
    torch.save(model.state_dict(), directory / "model.pt")


def load_model(directory: str | Path) -> TinyCausalLM:
    directory = Path(directory)
    config = ModelConfig.load(directory / "config.json")
    model = TinyCausalLM(config)
    model.load_state_dict(torch.load(directory / "model.pt", map_location="cpu"))
    return model
