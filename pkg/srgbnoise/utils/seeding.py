"""Deterministic seed derivation for per-step and per-image random streams."""
import numpy as np
import torch


def derive_seed(*parts: int) -> int:
    """Mix non-negative integers into one 63-bit seed."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, dtype=np.uint64)
    return int(state[0]) >> 1


def torch_generator(*parts: int) -> torch.Generator:
    """CPU generator seeded from `parts`; draws are moved to the target device by callers."""
    return torch.Generator().manual_seed(derive_seed(*parts))
