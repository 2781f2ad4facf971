"""
Fleet service: repetition splits, seed discipline and QBS fleets per target
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.attack.rule import AuxFleet, FleetPart
from src.config.experiment_config import ExperimentConfig
from src.data.dataset import (
    AuxSampler,
    Dataset,
    Scenario,
    TargetRecord,
    build_private_dataset,
    infer_schema,
    load_dataset,
    partition_and_pick_targets,
    synthesize_dataset,
)
from src.qbs.mechanisms import QbsKind, create_qbs

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 62) - 1


@dataclass
class RepetitionContext:
    repetition: int
    train_pool: Dataset
    val_pool: Dataset
    test_pool: Dataset
    targets: List[TargetRecord]


@dataclass(frozen=True)
class TargetSeeds:
    train_sampler: int
    val_sampler: int
    test_sampler: int
    private_dataset: int
    search: int
    instance_base: int


@dataclass
class TargetFleets:
    target: TargetRecord
    aux: AuxFleet
    test: FleetPart
    samplers: Dict[str, AuxSampler]
    seeds: TargetSeeds
    private_dataset: Optional[Dataset] = None


class FleetService:
    """Service building per-target auxiliary and test fleets"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.kind: QbsKind = config.qbs.to_kind()
        self._source: Optional[Dataset] = None
        self._contexts: Dict[int, RepetitionContext] = {}

    def load_source(self) -> Dataset:
        if self._source is None:
            dataset_config = self.config.dataset
            if dataset_config.path is not None:
                schema = infer_schema(dataset_config.path, dataset_config.sensitive_column)
                self._source = load_dataset(dataset_config.path, schema)
            else:
                synthetic = dataset_config.synthetic
                self._source = synthesize_dataset(synthetic.cardinalities, synthetic.num_records, synthetic.seed)
        return self._source

    @property
    def randomize_sensitive(self) -> bool:
        dataset_config = self.config.dataset
        return dataset_config.randomize_sensitive or dataset_config.sensitive_column is None

    def prepare_repetition(self, repetition: int) -> RepetitionContext:
        """Attribute draw, pool split and targets for one repetition"""
        context = self._contexts.get(repetition)
        if context is None:
            seed = int(np.random.SeedSequence([self.config.master_seed, repetition]).generate_state(1, np.uint64)[0])
            counts = self.config.counts
            train_pool, val_pool, test_pool, targets = partition_and_pick_targets(
                self.load_source(), counts.known_attr_count, counts.num_targets, seed
            )
            context = RepetitionContext(repetition, train_pool, val_pool, test_pool, targets)
            self._contexts[repetition] = context
        return context

    def seeds_for(self, repetition: int, target_index: int) -> TargetSeeds:
        state = np.random.SeedSequence(
            [self.config.master_seed, repetition, target_index]
        ).generate_state(6, np.uint64)
        values = [int(v) & SEED_MASK for v in state]
        return TargetSeeds(*values)

    def instance_seed_ranges(self, seeds: TargetSeeds) -> Tuple[range, range, range]:
        """Consecutive, pairwise disjoint instance seed ranges for train, val and test"""
        counts = self.config.counts
        base = seeds.instance_base
        train = range(base, base + counts.n_train_datasets)
        val = range(train.stop, train.stop + counts.n_val_datasets)
        test = range(val.stop, val.stop + counts.n_test_datasets)
        return train, val, test

    def build_samplers(
        self, context: RepetitionContext, target: TargetRecord, seeds: TargetSeeds
    ) -> Tuple[Dict[str, AuxSampler], Optional[Dataset]]:
        size = self.config.counts.dataset_size
        randomize = self.randomize_sensitive
        if self.config.scenario_enum is Scenario.EXACT_BUT_ONE:
            private = build_private_dataset(context.test_pool, target, size, seeds.private_dataset, randomize)
            pools = {"train": private, "val": private, "test": private}
        else:
            private = None
            pools = {"train": context.train_pool, "val": context.val_pool, "test": context.test_pool}
        sampler_seeds = {"train": seeds.train_sampler, "val": seeds.val_sampler, "test": seeds.test_sampler}
        samplers = {
            split: AuxSampler(self.config.scenario_enum, pool, target, size, sampler_seeds[split], randomize)
            for split, pool in pools.items()
        }
        return samplers, private

    def build_part(self, sampler: AuxSampler, seeds: range) -> FleetPart:
        members = []
        for draw_index, instance_seed in enumerate(seeds):
            dataset, label = sampler.draw(draw_index)
            members.append((create_qbs(self.kind, dataset, instance_seed), label))
        return FleetPart(members)

    def build_fleets(self, repetition: int, target_index: int) -> TargetFleets:
        context = self.prepare_repetition(repetition)
        target = context.targets[target_index]
        seeds = self.seeds_for(repetition, target_index)
        samplers, private = self.build_samplers(context, target, seeds)
        train_seeds, val_seeds, test_seeds = self.instance_seed_ranges(seeds)

        aux = AuxFleet(
            target=target,
            train=self.build_part(samplers["train"], train_seeds),
            val=self.build_part(samplers["val"], val_seeds),
            test_seeds=tuple(test_seeds),
        )
        test = self.build_part(samplers["test"], test_seeds)
        logger.debug(
            f"Fleets for repetition {repetition} target {target_index}: "
            f"{len(aux.train)}/{len(aux.val)}/{len(test)} instances of {self.kind.label()}"
        )
        return TargetFleets(target, aux, test, samplers, seeds, private)
