"""Deterministic synthetic formulations for demos, smoke tests, gradchecks.

Molecules are random token strings over a 20-token alphabet chosen so that
concatenations re-tokenize to the same token list (no two alphabet entries
can merge into a longer token).  Targets come from a fixed pseudo-random
function of the formulation content, so regenerating the same formulations
always reproduces the same targets.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, ElectrolyteComponent, Formulation, _splitmix64

#: 20 tokens; stable under re-tokenization when concatenated in any order.
SYNTH_ALPHABET: tuple[str, ...] = (
    "C", "c", "N", "n", "O", "o", "S", "s", "F", "P",
    "=", "#", "(", ")", "1", "2", "Cl", "Br", "[Li+]", "[O-]",
)

_TARGET_LOW = 0.3
_TARGET_HIGH = 2.2


def _content_target(f: Formulation, seed: int) -> float:
    """Fixed random function of the formulation's content in LCE range."""
    state = seed & 0xFFFFFFFFFFFFFFFF
    for component in f.components:
        for byte in component.smiles.encode("utf-8"):
            state, _ = _splitmix64(state ^ byte)
        state, _ = _splitmix64(state ^ int(component.molar_ratio * 1e6))
    state, draw = _splitmix64(state)
    unit = draw / 2**64
    return _TARGET_LOW + unit * (_TARGET_HIGH - _TARGET_LOW)


def random_smiles(rng: np.random.Generator, min_tokens: int = 3, max_tokens: int = 12) -> str:
    length = int(rng.integers(min_tokens, max_tokens + 1))
    return "".join(rng.choice(SYNTH_ALPHABET, size=length))


def synthetic_dataset(
    n: int,
    seed: int = 0,
    components_range: tuple[int, int] = (2, 4),
    name: str = "synthetic",
) -> Dataset:
    """``n`` formulations with random molecules, ratios and fixed targets."""
    rng = np.random.default_rng(seed)
    formulations = []
    for i in range(n):
        count = int(rng.integers(components_range[0], components_range[1] + 1))
        components = tuple(
            ElectrolyteComponent(random_smiles(rng), float(rng.uniform(0.1, 4.0)))
            for _ in range(count)
        )
        partial = Formulation(id=f"syn{i:03d}", components=components)
        lce = _content_target(partial, seed)
        formulations.append(
            Formulation(
                id=partial.id,
                components=components,
                target_ce=1.0 - 10.0 ** (-lce),
                target_lce=lce,
            )
        )
    return Dataset(tuple(formulations), name=name, provenance=f"synthetic seed={seed}")
