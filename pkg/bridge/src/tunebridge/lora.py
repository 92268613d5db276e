"""Low-rank adapters over the model's linear layers.

Base weights stay frozen; only the rank-r A/B factors train. At rank r and
scale alpha/r the adapted layer computes W x + (alpha/r) * B A x, with B
initialized to zero so training starts at the base function.
"""

from __future__ import annotations

from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

TARGET_SUFFIXES = ("attn.qkv", "attn.proj", "fc", "proj")


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: int):
        super().__init__()
        self.base = base
        self.rank = rank
        self.scale = alpha / rank
        self.lora_a = nn.Parameter(torch.randn(rank, base.in_features) * 0.02)
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x):
        return self.base(x) + F.linear(F.linear(x, self.lora_a), self.lora_b) * self.scale


def apply_lora(model: nn.Module, rank: int, alpha: int) -> list[str]:
    """Freeze the base model and wrap every target linear layer; returns the
    wrapped module paths."""
    for p in model.parameters():
        p.requires_grad_(False)
    wrapped = []
    for name, module in list(model.named_modules()):
        for child_name, child in list(module.named_children()):
            if isinstance(child, nn.Linear) and not isinstance(child, LoRALinear):
                path = f"{name}.{child_name}" if name else child_name
                if path == "head" or not path.startswith("blocks"):
                    continue
                setattr(module, child_name, LoRALinear(child, rank, alpha))
                wrapped.append(path)
    return wrapped


def lora_parameters(model: nn.Module):
    return [p for p in model.parameters() if p.requires_grad]


def lora_state_dict(model: nn.Module) -> dict:
    return {k: v for k, v in model.state_dict().items() if "lora_a" in k or "lora_b" in k}


def save_adapter(model: nn.Module, path: str | Path):
    torch.save(lora_state_dict(model), path)


def load_adapter(model: nn.Module, path: str | Path):
    state = torch.load(path, map_location="cpu")
    missing = model.load_state_dict(state, strict=False)
    unexpected = [k for k in missing.unexpected_keys]
    if unexpected:
        raise ValueError(f"adapter holds unknown tensors: {unexpected[:3]}")
