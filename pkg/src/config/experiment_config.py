"""
Typed experiment configuration
"""
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from src.attack.baselines import BASELINES
from src.attack.rule import RuleHyper
from src.attack.search import SearchConfig, default_rates
from src.data.dataset import Scenario
from src.qbs.mechanisms import QbsKind, QbsName, ThresholdMode

STRATEGIES = ("querysnout", "random-search", "random-solution")


class SyntheticDataConfig(BaseModel):
    num_records: int = Field(default=30000, ge=3)
    cardinalities: List[int] = Field(default_factory=lambda: [9, 16, 7, 15, 6, 5, 2, 42])
    seed: int = 0


class DatasetConfig(BaseModel):
    path: Optional[str] = None
    sensitive_column: Optional[str] = None
    randomize_sensitive: bool = True
    synthetic: Optional[SyntheticDataConfig] = None

    @model_validator(mode="after")
    def check_source(self):
        if self.path is None and self.synthetic is None:
            self.synthetic = SyntheticDataConfig()
        return self


class QbsConfig(BaseModel):
    kind: Literal["diffix", "tablebuilder", "simpleqbs", "dplaplace"] = "diffix"
    tau: int = Field(default=0, ge=0)
    sigma: float = Field(default=0.0, ge=0.0)
    epsilon: float = Field(default=1.0, gt=0.0)
    diffix_threshold_mode: Literal["noisy-floor", "as-printed"] = "noisy-floor"

    def to_kind(self) -> QbsKind:
        return QbsKind(
            name=QbsName(self.kind),
            tau=self.tau,
            sigma=self.sigma,
            epsilon=self.epsilon,
            threshold_mode=ThresholdMode(self.diffix_threshold_mode),
        )


class CountsConfig(BaseModel):
    n_train_datasets: int = Field(default=2000, ge=1)
    n_val_datasets: int = Field(default=1000, ge=1)
    n_test_datasets: int = Field(default=500, ge=0)
    dataset_size: int = Field(default=8000, ge=2)
    num_targets: int = Field(default=100, ge=1)
    repetitions: int = Field(default=5, ge=1)
    known_attr_count: int = Field(default=5, ge=1)


class SearchSettings(BaseModel):
    population: int = Field(default=100, ge=1)
    elites: int = Field(default=10, ge=0)
    generations: int = Field(default=200, ge=1)
    m: int = Field(default=100, ge=1)
    auto_rates: bool = True
    p_copy: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    p_modify: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    p_change: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    p_swap: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    stop_fitness: float = 0.9999
    stop_patience: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def check_ranges(self):
        if self.elites >= self.population:
            raise ValueError(f"elites ({self.elites}) must be smaller than population ({self.population})")
        if (self.p_copy or 0.0) + (self.p_modify or 0.0) > 1.0:
            raise ValueError("p_copy + p_modify must not exceed 1")
        if (self.p_change or 0.0) + (self.p_swap or 0.0) > 1.0:
            raise ValueError("p_change + p_swap must not exceed 1")
        if not self.auto_rates and None in (self.p_copy, self.p_modify, self.p_change, self.p_swap):
            raise ValueError("auto_rates is off, so every mutation rate must be given")
        return self

    def to_search_config(self, n: int, kind: QbsKind, rng_seed: int) -> SearchConfig:
        rates = default_rates(n, self.m, kind.budgeted) if self.auto_rates else {}
        for name in ("p_copy", "p_modify", "p_change", "p_swap"):
            value = getattr(self, name)
            if value is not None:
                rates[name] = value
        return SearchConfig(
            population=self.population,
            elites=self.elites,
            generations=self.generations,
            m=self.m,
            qbs_deterministic=kind.deterministic,
            stop_fitness=self.stop_fitness,
            stop_patience=self.stop_patience,
            rng_seed=rng_seed,
            **rates,
        )


class RuleConfig(BaseModel):
    l2: float = Field(default=1.0, gt=0.0)
    max_iters: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)

    def to_hyper(self) -> RuleHyper:
        return RuleHyper(l2=self.l2, max_iters=self.max_iters, tol=self.tol)


class BaselineConfig(BaseModel):
    oracle_samples: int = Field(default=100, ge=1)
    min_pair_score: float = Field(default=0.8, ge=0.0, le=1.0)


class LoggingConfig(BaseModel):
    log_level: Literal["DEBUG", "INFO", "WARNING", "WARN", "ERROR"] = "INFO"
    structured_logging: bool = False


class ExperimentConfig(BaseModel):
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    qbs: QbsConfig = Field(default_factory=QbsConfig)
    scenario: Literal["auxiliary", "exact-but-one"] = "auxiliary"
    counts: CountsConfig = Field(default_factory=CountsConfig)
    search: SearchSettings = Field(default_factory=SearchSettings)
    rule: RuleConfig = Field(default_factory=RuleConfig)
    baselines: BaselineConfig = Field(default_factory=BaselineConfig)
    strategy: str = "querysnout"
    master_seed: int = Field(default=0, ge=0)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @field_validator("strategy")
    @classmethod
    def check_strategy(cls, value: str) -> str:
        if value in STRATEGIES:
            return value
        if value.startswith("baseline:") and value.split(":", 1)[1] in BASELINES:
            return value
        raise ValueError(
            f"Unknown strategy '{value}'; choose from {list(STRATEGIES)} "
            f"or baseline:<{'|'.join(sorted(BASELINES))}>"
        )

    @model_validator(mode="after")
    def check_baseline_kind(self):
        if self.baseline_name is not None:
            expected = BASELINES[self.baseline_name][0]
            if expected.value != self.qbs.kind:
                raise ValueError(f"Baseline '{self.baseline_name}' attacks {expected.value}, not {self.qbs.kind}")
        return self

    @property
    def baseline_name(self) -> Optional[str]:
        if self.strategy.startswith("baseline:"):
            return self.strategy.split(":", 1)[1]
        return None

    @property
    def scenario_enum(self) -> Scenario:
        return Scenario(self.scenario)

    def resolved(self) -> Dict[str, object]:
        """Every field with defaults expanded, for provenance"""
        return self.model_dump(mode="json")
