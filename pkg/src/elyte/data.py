"""Electrolyte formulation datasets: ingestion, validation, transforms, stats.

A formulation is an ordered list of (SMILES, molar ratio) components plus a
Coulombic-efficiency target.  Targets are stored both as CE in [0, 1) and as
the logarithmic form LCE = -log10(1 - CE); LCE is the canonical training
target and the one written back to disk.

Storage is JSON Lines, one formulation per line:

    {"id": "f1", "components": [{"smiles": "CCO", "molar_ratio": 1.0}], "ce": 0.9}

Exactly one of ``ce``/``lce`` may appear on load; both are populated after
ingestion.  All values here are immutable once constructed, so every
operation is safe for concurrent use.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

from .tokenizer import tokenize

_LN10 = math.log(10.0)

MAX_COMPONENTS = 16
TYPICAL_COMPONENT_RANGE = (2, 7)


class DataError(ValueError):
    """Schema or value violation in a formulation dataset."""


def lce_from_ce(ce: float) -> float:
    """Logarithmic Coulombic efficiency, ``-log10(1 - ce)``.

    Strictly increasing on [0, 1).  Computed through ``log1p`` so the result
    keeps full relative precision for ce near 0 and near 1.
    """
    if not math.isfinite(ce) or ce < 0.0:
        raise ValueError(f"ce must be >= 0, got {ce!r}")
    if ce >= 1.0:
        raise ValueError(f"ce must be < 1 (LCE diverges at ce = 1), got {ce!r}")
    return -math.log1p(-ce) / _LN10

def ce_from_lce(lce: float) -> float:
    """Inverse transform, ``1 - 10**(-lce)``; round-trips with lce_from_ce."""
    if not math.isfinite(lce) or lce < 0.0:
        raise ValueError(f"lce must be >= 0, got {lce!r}")
    return -math.expm1(-lce * _LN10)


@dataclass(frozen=True)
class ElectrolyteComponent:
    """One molecule of a formulation with its dimensionless molar ratio."""

    smiles: str
    molar_ratio: float


@dataclass(frozen=True)
class Formulation:
    id: str
    components: tuple[ElectrolyteComponent, ...]
    target_ce: float | None = None
    target_lce: float | None = None

    def ratios(self) -> tuple[float, ...]:
        return tuple(c.molar_ratio for c in self.components)

    def smiles(self) -> tuple[str, ...]:
        return tuple(c.smiles for c in self.components)


@dataclass(frozen=True)
class Dataset:
    formulations: tuple[Formulation, ...]
    name: str = ""
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.formulations)

    def __iter__(self):
        return iter(self.formulations)


def _validate_components(raw, where: str) -> tuple[ElectrolyteComponent, ...]:
    if not isinstance(raw, list) or not raw:
        raise DataError(f"{where}: components must be a non-empty list")
    if len(raw) > MAX_COMPONENTS:
        raise DataError(f"{where}: more than {MAX_COMPONENTS} components")
    lo, hi = TYPICAL_COMPONENT_RANGE
    if not lo <= len(raw) <= hi:
        warnings.warn(
            f"{where}: {len(raw)} components is outside the typical "
            f"{lo}..{hi} range",
            stacklevel=3,
        )
    components = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or set(entry) != {"smiles", "molar_ratio"}:
            raise DataError(
                f"{where}: component {i} must be an object with exactly "
                "the keys smiles, molar_ratio"
            )
        smiles = entry["smiles"]
        ratio = entry["molar_ratio"]
        if not isinstance(smiles, str) or not smiles:
            raise DataError(f"{where}: component {i}: smiles must be non-empty text")
        try:
            tokenize(smiles)
        except ValueError as exc:
            raise DataError(f"{where}: component {i}: {exc}") from exc
        if not isinstance(ratio, (int, float)) or isinstance(ratio, bool):
            raise DataError(f"{where}: component {i}: molar_ratio must be a number")
        ratio = float(ratio)
        if not math.isfinite(ratio) or ratio < 0.0:
            raise DataError(f"{where}: component {i}: molar_ratio must be >= 0")
        components.append(ElectrolyteComponent(smiles, ratio))
    if not any(c.molar_ratio > 0.0 for c in components):
        raise DataError(f"{where}: at least one molar_ratio must be positive")
    return tuple(components)


def _parse_line(obj, where: str) -> Formulation:
    if not isinstance(obj, dict):
        raise DataError(f"{where}: each line must be a JSON object")
    unknown = set(obj) - {"id", "components", "ce", "lce"}
    if unknown:
        raise DataError(f"{where}: unknown keys {sorted(unknown)}")
    if "id" not in obj or not isinstance(obj["id"], str) or not obj["id"]:
        raise DataError(f"{where}: id must be non-empty text")
    if "components" not in obj:
        raise DataError(f"{where}: missing components")
    if ("ce" in obj) == ("lce" in obj):
        raise DataError(f"{where}: exactly one of ce, lce required")
    components = _validate_components(obj["components"], where)
    try:
        if "ce" in obj:
            ce = float(obj["ce"])
            lce = lce_from_ce(ce)
        else:
            lce = float(obj["lce"])
            ce = ce_from_lce(lce)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: {exc}") from exc
    return Formulation(obj["id"], components, target_ce=ce, target_lce=lce)


def load_dataset(path, name: str | None = None) -> Dataset:
    """Load and validate a JSON Lines formulation file.

    Malformed lines are reported with their line number; duplicate ids, CE
    outside [0, 1) and empty component lists are errors.  Both CE and LCE
    targets are populated on every returned formulation.
    """
    formulations: list[Formulation] = []
    ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            where = f"line {lineno}"
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON: {exc}") from exc
            formulation = _parse_line(obj, where)
            if formulation.id in ids:
                raise DataError(f"{where}: duplicate id {formulation.id!r}")
            ids.add(formulation.id)
            formulations.append(formulation)
    return Dataset(
        formulations=tuple(formulations),
        name=name if name is not None else str(path),
        provenance=f"loaded from {path}",
    )


def save_dataset(dataset: Dataset, path) -> None:
    """Re-emit a dataset in the JSONL schema (LCE as the stored target)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in dataset:
            obj = {
                "id": f.id,
                "components": [
                    {"smiles": c.smiles, "molar_ratio": c.molar_ratio}
                    for c in f.components
                ],
                "lce": f.target_lce,
            }
            fh.write(json.dumps(obj) + "\n")


def normalize_ratios(formulation: Formulation) -> Formulation:
    """Scale molar ratios to sum to 1, preserving component order.

    Idempotent, and invariant under pre-scaling of all ratios by any c > 0.
    """
    total = sum(formulation.ratios())
    if total <= 0.0:
        raise ValueError(f"formulation {formulation.id!r}: ratios sum to zero")
    return Formulation(
        id=formulation.id,
        components=tuple(
            ElectrolyteComponent(c.smiles, c.molar_ratio / total)
            for c in formulation.components
        ),
        target_ce=formulation.target_ce,
        target_lce=formulation.target_lce,
    )


_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One step of the SplitMix64 generator; returns (new_state, output).

    Fixed here (rather than delegating to a library PRNG) so that dataset
    splits are reproducible across implementations from the seed alone.
    """
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _shuffled_indices(n: int, seed: int) -> list[int]:
    """Fisher-Yates shuffle of range(n) driven by SplitMix64.

    Swap j is drawn as ``next() % (i + 1)``; the modulo bias is negligible
    for any realistic n.
    """
    order = list(range(n))
    state = seed & _MASK64
    for i in range(n - 1, 0, -1):
        state, draw = _splitmix64(state)
        j = draw % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def split_dataset(
    dataset: Dataset, train_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministic shuffle-and-partition under ``seed``.

    The train partition holds round(n * train_fraction) formulations
    (round-half-up); the two partitions are disjoint and their union is the
    input as a multiset.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    order = _shuffled_indices(n, seed)
    n_train = int(math.floor(n * train_fraction + 0.5))
    train = tuple(dataset.formulations[i] for i in order[:n_train])
    test = tuple(dataset.formulations[i] for i in order[n_train:])
    return (
        Dataset(train, name=f"{dataset.name}[train]", provenance=dataset.provenance),
        Dataset(test, name=f"{dataset.name}[test]", provenance=dataset.provenance),
    )


@dataclass(frozen=True)
class CleanReport:
    """Duplicates dropped by :func:`clean_dataset`: (removed id, kept id)."""

    removed: tuple[tuple[str, str], ...] = ()


def _duplicate_key(f: Formulation) -> tuple:
    normalized = normalize_ratios(f)
    return tuple(
        sorted((c.smiles, round(c.molar_ratio, 9)) for c in normalized.components)
    )


def clean_dataset(dataset: Dataset) -> tuple[Dataset, CleanReport]:
    """Drop formulations whose normalized component multiset repeats an
    earlier entry (first occurrence kept).  Idempotent."""
    kept: list[Formulation] = []
    removed: list[tuple[str, str]] = []
    first_by_key: dict[tuple, str] = {}
    for f in dataset:
        key = _duplicate_key(f)
        if key in first_by_key:
            removed.append((f.id, first_by_key[key]))
        else:
            first_by_key[key] = f.id
            kept.append(f)
    return (
        Dataset(tuple(kept), name=dataset.name, provenance=dataset.provenance),
        CleanReport(tuple(removed)),
    )


@dataclass(frozen=True)
class BoxplotStats:
    """Five-number summary plus 1.5 IQR outliers for one component count."""

    count: int
    minimum: float
    q25: float
    median: float
    q75: float
    maximum: float
    outliers: tuple[float, ...]


def boxplot_stats(dataset: Dataset) -> dict[int, BoxplotStats]:
    """Per-component-count LCE distribution summaries.

    Quartiles use linear interpolation; outliers are points beyond the
    standard 1.5 IQR whisker fences.
    """
    if len(dataset) == 0:
        raise ValueError("cannot summarize an empty dataset")
    groups: dict[int, list[float]] = {}
    for f in dataset:
        groups.setdefault(len(f.components), []).append(f.target_lce)
    stats: dict[int, BoxplotStats] = {}
    for count in sorted(groups):
        values = sorted(groups[count])
        q25, median, q75 = _quartiles(values)
        iqr = q75 - q25
        lo, hi = q25 - 1.5 * iqr, q75 + 1.5 * iqr
        stats[count] = BoxplotStats(
            count=count,
            minimum=values[0],
            q25=q25,
            median=median,
            q75=q75,
            maximum=values[-1],
            outliers=tuple(v for v in values if v < lo or v > hi),
        )
    return stats


def _quartiles(sorted_values: list[float]) -> tuple[float, float, float]:
    """25th/50th/75th percentiles with linear interpolation."""

    def pct(p: float) -> float:
        pos = p * (len(sorted_values) - 1)
        lo = int(math.floor(pos))
        hi = int(math.ceil(pos))
        if lo == hi:
            return sorted_values[lo]
        frac = pos - lo
        return sorted_values[lo] * (1.0 - frac) + sorted_values[hi] * frac

    return pct(0.25), pct(0.5), pct(0.75)
