"""
Categorical dataset loading, target selection and auxiliary dataset sampling
"""
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.exceptions import NotEnoughUniqueRecords, SchemaMismatch, SizeTooLarge

logger = logging.getLogger(__name__)

SYNTHETIC_SENSITIVE_NAME = "sensitive"


class Scenario(Enum):
    AUXILIARY = "auxiliary"
    EXACT_BUT_ONE = "exact-but-one"


@dataclass(frozen=True)
class Schema:
    """Ordered attribute names and cardinalities; the last attribute is the binary sensitive one"""
    attribute_names: Tuple[str, ...]
    cardinalities: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))
        object.__setattr__(self, "cardinalities", tuple(int(c) for c in self.cardinalities))
        if len(self.attribute_names) < 2:
            raise SchemaMismatch("Schema needs at least one known and one sensitive attribute")
        if len(self.attribute_names) != len(self.cardinalities):
            raise SchemaMismatch("Attribute names and cardinalities differ in length")
        if len(set(self.attribute_names)) != len(self.attribute_names):
            raise SchemaMismatch(f"Duplicate attribute names: {self.attribute_names}")
        if any(c < 1 for c in self.cardinalities):
            raise SchemaMismatch("Cardinalities must be positive")
        if self.cardinalities[-1] != 2:
            raise SchemaMismatch(
                f"Sensitive attribute '{self.attribute_names[-1]}' must be binary, "
                f"got cardinality {self.cardinalities[-1]}"
            )

    @property
    def n(self) -> int:
        return len(self.attribute_names)

    @property
    def sensitive_index(self) -> int:
        return self.n - 1

    def select(self, known: Sequence[int]) -> "Schema":
        """Keep the given known attributes (in order) plus the sensitive attribute"""
        keep = list(known) + [self.sensitive_index]
        return Schema(
            attribute_names=tuple(self.attribute_names[i] for i in keep),
            cardinalities=tuple(self.cardinalities[i] for i in keep),
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Multiset of integer-coded records; user ids are row positions"""
    schema: Schema
    rows: np.ndarray
    encoding: Optional[Dict[str, List[str]]] = field(default=None, repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        if rows.size == 0:
            rows = rows.reshape(0, self.schema.n)
        if rows.ndim != 2 or rows.shape[1] != self.schema.n:
            raise SchemaMismatch(f"Rows must have shape (N, {self.schema.n}), got {rows.shape}")
        if len(rows):
            limits = np.asarray(self.schema.cardinalities)
            if (rows < 0).any() or (rows >= limits).any():
                raise SchemaMismatch("Row codes fall outside the schema's cardinalities")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    @property
    def user_ids(self) -> np.ndarray:
        return np.arange(len(self))

    def with_rows(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.schema, rows, self.encoding)

    def to_bytes(self) -> bytes:
        return self.rows.tobytes()


@dataclass(frozen=True)
class TargetRecord:
    known_values: Tuple[int, ...]
    true_sensitive: int
    pool_index: int = -1

    def __post_init__(self):
        object.__setattr__(self, "known_values", tuple(int(v) for v in self.known_values))


def infer_schema(path: Union[str, Path], sensitive_column: Optional[str] = None) -> Schema:
    """Derive a schema from a CSV header and its per-column distinct values"""
    frame = _read_csv(path)
    columns = list(frame.columns)
    if sensitive_column is not None and sensitive_column not in columns:
        raise SchemaMismatch(f"Sensitive column '{sensitive_column}' not in CSV header")
    known = [c for c in columns if c != sensitive_column]
    cardinalities = [max(1, frame[c].nunique()) for c in known]
    if sensitive_column is None:
        name = SYNTHETIC_SENSITIVE_NAME
        while name in known:
            name = f"_{name}"
        return Schema(tuple(known) + (name,), tuple(cardinalities) + (2,))
    return Schema(tuple(known) + (sensitive_column,), tuple(cardinalities) + (2,))


def load_dataset(path: Union[str, Path], schema: Schema) -> Dataset:
    """
    Load a CSV into a dataset, dictionary-encoding each column in first-seen order

    A CSV lacking the schema's sensitive column gets an all-zero sensitive column;
    samplers randomize it per dataset.
    """
    frame = _read_csv(path)
    columns = list(frame.columns)
    sensitive_name = schema.attribute_names[-1]

    if not columns:
        return Dataset(schema, np.zeros((0, schema.n), dtype=np.int64), encoding={})

    synthetic_sensitive = sensitive_name not in columns
    expected = schema.attribute_names[:-1] if synthetic_sensitive else schema.attribute_names
    if len(columns) != len(expected) or set(columns) != set(expected):
        raise SchemaMismatch(f"CSV columns {columns} do not match schema {list(expected)}")

    codes = np.zeros((len(frame), schema.n), dtype=np.int64)
    encoding: Dict[str, List[str]] = {}
    for i, name in enumerate(expected):
        column_codes, uniques = pd.factorize(frame[name], sort=False)
        if len(uniques) > schema.cardinalities[i]:
            raise SchemaMismatch(
                f"Column '{name}' has {len(uniques)} distinct values, "
                f"schema allows {schema.cardinalities[i]}"
            )
        codes[:, i] = column_codes
        encoding[name] = [str(u) for u in uniques]
    if synthetic_sensitive:
        encoding[sensitive_name] = ["0", "1"]

    logger.info(f"Loaded {len(frame)} records with {schema.n} attributes from {path}")
    return Dataset(schema, codes, encoding)


def write_encoding(dataset: Dataset, path: Union[str, Path]) -> None:
    """Persist the string-to-code dictionaries as a JSON sidecar"""
    Path(path).write_text(json.dumps(dataset.encoding or {}, indent=2))


def synthesize_dataset(
    cardinalities: Sequence[int],
    num_records: int,
    seed: int,
    names: Optional[Sequence[str]] = None,
) -> Dataset:
    """Uniform random categorical dataset with a binary sensitive attribute appended"""
    rng = np.random.default_rng(seed)
    names = list(names) if names else [f"a{i + 1}" for i in range(len(cardinalities))]
    schema = Schema(tuple(names) + (SYNTHETIC_SENSITIVE_NAME,), tuple(cardinalities) + (2,))
    columns = [rng.integers(0, c, size=num_records) for c in schema.cardinalities]
    return Dataset(schema, np.column_stack(columns))


def partition_and_pick_targets(
    d: Dataset,
    known_attr_count: int,
    num_targets: int,
    rng_seed: int,
) -> Tuple[Dataset, Dataset, Dataset, List[TargetRecord]]:
    """
    Keep a random subset of known attributes, split rows into three equal pools
    and draw targets unique on the kept attributes from the test pool

    Args:
        d: Source dataset
        known_attr_count: Number of known attributes to keep
        num_targets: Number of target records to return
        rng_seed: Seed for attribute, split and target draws

    Returns:
        (train_pool, val_pool, test_pool, targets)
    """
    if len(d) == 0:
        raise NotEnoughUniqueRecords("Cannot partition an empty dataset")
    if known_attr_count < 1 or known_attr_count + 1 > d.schema.n:
        raise ValueError(
            f"known_attr_count must be in [1, {d.schema.n - 1}], got {known_attr_count}"
        )

    rng = np.random.default_rng(rng_seed)
    kept = np.sort(rng.choice(d.schema.n - 1, size=known_attr_count, replace=False))
    schema = d.schema.select(kept.tolist())
    rows = d.rows[:, list(kept) + [d.schema.sensitive_index]]

    perm = rng.permutation(len(rows))
    size = len(rows) // 3
    pools = [Dataset(schema, rows[perm[k * size:(k + 1) * size]], d.encoding) for k in range(3)]
    test_pool = pools[2]

    unique_rows = unique_known_indices(test_pool)
    if len(unique_rows) < num_targets:
        raise NotEnoughUniqueRecords(
            f"Test pool has {len(unique_rows)} unique records, {num_targets} requested"
        )
    chosen = rng.choice(unique_rows, size=num_targets, replace=False)
    targets = [
        TargetRecord(
            known_values=tuple(test_pool.rows[i, :-1]),
            true_sensitive=int(test_pool.rows[i, -1]),
            pool_index=int(i),
        )
        for i in chosen
    ]
    logger.info(
        f"Kept attributes {list(schema.attribute_names[:-1])}; pools of {size} rows; "
        f"{len(unique_rows)} unique candidates, {num_targets} targets"
    )
    return pools[0], pools[1], pools[2], targets


def unique_known_indices(d: Dataset) -> np.ndarray:
    """Row positions whose known-attribute values occur exactly once"""
    if len(d) == 0:
        return np.zeros(0, dtype=np.int64)
    _, inverse, counts = np.unique(
        d.rows[:, :-1], axis=0, return_inverse=True, return_counts=True
    )
    return np.flatnonzero(counts[inverse.reshape(-1)] == 1)


@dataclass(frozen=True)
class AuxSampler:
    """
    Deterministic generator of datasets containing the target

    AUXILIARY draws records from a pool and appends the target; EXACT_BUT_ONE
    reuses one fixed dataset and only re-randomizes the target's sensitive bit.
    """
    scenario: Scenario
    source_pool: Dataset
    target: TargetRecord
    dataset_size: int
    seed: int
    randomize_sensitive: bool = True
    target_row: int = field(default=-1, init=False)

    def __post_init__(self):
        if self.dataset_size < 1:
            raise ValueError("dataset_size must be positive")
        if self.scenario is Scenario.AUXILIARY:
            if self.dataset_size > len(self.source_pool) + 1:
                raise SizeTooLarge(
                    f"dataset_size {self.dataset_size} exceeds pool of {len(self.source_pool)} + target"
                )
        else:
            hits = np.flatnonzero(self._target_mask(self.source_pool.rows))
            if len(hits) != 1:
                raise NotEnoughUniqueRecords(
                    f"Fixed dataset holds {len(hits)} copies of the target, expected 1"
                )
            object.__setattr__(self, "target_row", int(hits[0]))

    def _target_mask(self, rows: np.ndarray) -> np.ndarray:
        return np.all(rows[:, :-1] == np.asarray(self.target.known_values), axis=1)

    def draw(self, draw_index: int) -> Tuple[Dataset, int]:
        """Dataset for this draw and the target's sensitive bit in it"""
        rng = np.random.default_rng([self.seed, draw_index])
        if self.scenario is Scenario.EXACT_BUT_ONE:
            rows = self.source_pool.rows.copy()
            label = int(rng.integers(0, 2))
            rows[self.target_row, -1] = label
            return self.source_pool.with_rows(rows), label

        picked = rng.choice(len(self.source_pool), size=self.dataset_size - 1, replace=False)
        rows = self.source_pool.rows[np.sort(picked)]
        rows = rows[~self._target_mask(rows)]
        if self.randomize_sensitive:
            rows[:, -1] = rng.integers(0, 2, size=len(rows))
        label = int(rng.integers(0, 2))
        target_row = np.asarray(self.target.known_values + (label,), dtype=np.int64)
        rows = np.vstack([rows, target_row[None, :]])
        return self.source_pool.with_rows(rows), label


def sample_aux(s: AuxSampler, draw_index: int) -> Dataset:
    return s.draw(draw_index)[0]


def build_private_dataset(
    test_pool: Dataset,
    target: TargetRecord,
    dataset_size: int,
    seed: int,
    randomize_sensitive: bool = True,
) -> Dataset:
    """The fixed dataset D shared by all EXACT-BUT-ONE samplers"""
    sampler = AuxSampler(
        Scenario.AUXILIARY, test_pool, target, dataset_size, seed, randomize_sensitive
    )
    return sample_aux(sampler, 0)


def _read_csv(path: Union[str, Path]) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame()
