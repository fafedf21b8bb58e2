import logging
import os
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

from ecosystem._constants import (
    AN__BASELINE_FLOOR,
    EST__PROX_MAX_ITER,
    EST__RANK_TOL,
    NL__EXTINCTION_TOL,
    SOL__PB_MAX_TERMS,
    SOL__PB_TOL,
    THREAD_POOL_SIZE,
)
from ecosystem.core_model import assemble_generator
from ecosystem.exceptions import ScheduleError
from ecosystem.graphs import build_graph
from ecosystem.models.network import CrowdingMatrix, DecayVector, Generator, InteractionMatrix
from ecosystem.models.results import PerceptionParams
from ecosystem.models.signals import GeneratorPath, InputSignal, Schedule, Segment

logger = logging.getLogger(__name__)

Matrix = List[List[float]]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class InputConfig(_Block):
    breakpoints: List[float]
    values: Matrix


class SegmentConfig(_Block):
    """One schedule segment; unset fields inherit the model block."""

    t_start: float
    t_end: float
    lambda_: Optional[Matrix] = Field(default=None, alias="lambda")
    delta: Optional[List[float]] = None
    u: Optional[List[float]] = None


class ModulationConfig(_Block):
    amplitude: float = Field(ge=-1.0, le=1.0)
    period: PositiveFloat


class ModelConfig(_Block):
    n: PositiveInt
    lambda_: Matrix = Field(alias="lambda")
    delta: Optional[List[float]] = None
    delta_base: Optional[List[float]] = None
    delta_sensitivity: Optional[List[float]] = None
    costs: Optional[List[float]] = None
    u: Optional[InputConfig] = None
    alpha0: List[float]
    t0: float = 0.0
    horizon: PositiveFloat
    crowding: Optional[Matrix] = None
    segments: Optional[List[SegmentConfig]] = None
    modulation: Optional[ModulationConfig] = None

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ModelConfig":
        n = self.n
        cost_form = (self.delta_base, self.delta_sensitivity, self.costs)
        if (self.delta is None) == all(v is None for v in cost_form):
            raise ValueError("give either delta or delta_base, delta_sensitivity and costs")
        if self.delta is None and any(v is None for v in cost_form):
            raise ValueError("cost-based decay needs delta_base, delta_sensitivity and costs")
        for name, value in (("lambda", self.lambda_), ("crowding", self.crowding)):
            if value is not None and (len(value) != n or any(len(row) != n for row in value)):
                raise ValueError(f"{name} must be {n}x{n}")
        for name, value in (
            ("delta", self.delta),
            ("delta_base", self.delta_base),
            ("delta_sensitivity", self.delta_sensitivity),
            ("costs", self.costs),
            ("alpha0", self.alpha0),
        ):
            if value is not None and len(value) != n:
                raise ValueError(f"{name} must have length {n}")
        if self.u is not None and any(len(row) != n for row in self.u.values):
            raise ValueError(f"u values must have length {n}")
        if self.segments and self.modulation:
            raise ValueError("segments and modulation are mutually exclusive")
        return self

    @property
    def t_end(self) -> float:
        return self.t0 + self.horizon

    def build_interactions(self, override: Optional[Matrix] = None) -> InteractionMatrix:
        return InteractionMatrix(entries=override if override is not None else self.lambda_)

    def build_decay(self, override: Optional[List[float]] = None) -> DecayVector:
        if override is not None:
            return DecayVector(rates=override)
        if self.delta is not None:
            return DecayVector(rates=self.delta)
        return DecayVector.from_costs(self.delta_base, self.delta_sensitivity, self.costs)

    def build_crowding(self) -> CrowdingMatrix:
        return CrowdingMatrix(entries=self.crowding) if self.crowding is not None else CrowdingMatrix.zeros(self.n)

    def build_generator(self) -> Generator:
        return assemble_generator(self.build_interactions(), self.build_decay())

    def build_input(self) -> InputSignal:
        if self.u is None:
            return InputSignal.zeros(self.n, self.t0)
        return InputSignal(breakpoints=self.u.breakpoints, values=self.u.values)

    def build_schedule(self) -> Schedule:
        """
        Piecewise-constant schedule over [t0, t0 + horizon].

        Explicit segments are used as given; otherwise the horizon is cut at
        the input breakpoints and every segment shares the model generator.
        """
        signal = self.build_input()
        if not self.segments:
            generator = self.build_generator()
            inner = [float(t) for t in signal.breakpoints if self.t0 < t < self.t_end]
            edges = [self.t0, *inner, self.t_end]
            return Schedule(
                segments=tuple(
                    Segment(t_start=a, t_end=b, generator=generator, input=signal.at(a))
                    for a, b in zip(edges[:-1], edges[1:])
                )
            )

        scale = max(1.0, abs(self.t_end))
        first, last = self.segments[0].t_start, self.segments[-1].t_end
        if abs(first - self.t0) > 1e-12 * scale or abs(last - self.t_end) > 1e-12 * scale:
            raise ScheduleError(f"segments must cover [{self.t0}, {self.t_end}] exactly")
        segments = []
        for seg in self.segments:
            generator = assemble_generator(self.build_interactions(seg.lambda_), self.build_decay(seg.delta))
            push = seg.u if seg.u is not None else signal.at(seg.t_start)
            segments.append(Segment(t_start=seg.t_start, t_end=seg.t_end, generator=generator, input=push))
        try:
            return Schedule(segments=tuple(segments))
        except ValueError as e:
            raise ScheduleError(str(e)) from e

    def build_path(self) -> GeneratorPath:
        if self.modulation is not None:
            return GeneratorPath.modulated(
                self.lambda_,
                self.build_decay().rates,
                self.modulation.amplitude,
                self.modulation.period,
                self.t0,
                self.t_end,
            )
        if self.segments:
            return GeneratorPath.from_schedule(self.build_schedule())
        return GeneratorPath.constant(self.build_generator(), self.t0, self.t_end)


class RunConfig(_Block):
    mode: Literal["constant", "schedule", "time-varying", "saturating"] = "constant"
    sample_dt: PositiveFloat = 0.1
    pb_tol: PositiveFloat = SOL__PB_TOL
    max_terms: PositiveInt = SOL__PB_MAX_TERMS
    method: Literal["auto", "commuting", "peano_baker", "product"] = "auto"
    substeps: Optional[PositiveInt] = None
    step: Optional[PositiveFloat] = None


class PerceptionConfig(_Block):
    kappa: PositiveFloat = 1.0
    beta_addon: PositiveFloat

    def build(self) -> PerceptionParams:
        return PerceptionParams(kappa=self.kappa, beta_addon=self.beta_addon)


class FrequencyConfig(_Block):
    beta_addon: NonNegativeFloat
    n_g: PositiveInt
    steps: List[PositiveInt]


class PolicyConfig(_Block):
    dlambda_deta: Matrix
    ddelta_deta: List[float]


class AnalysisConfig(_Block):
    weights: Optional[List[NonNegativeFloat]] = None
    d_lambda: Optional[Matrix] = None
    d_delta: Optional[List[float]] = None
    edge_costs: Optional[Matrix] = None
    perception: Optional[PerceptionConfig] = None
    frequency: Optional[FrequencyConfig] = None
    policy: Optional[PolicyConfig] = None
    floor: PositiveFloat = AN__BASELINE_FLOOR


class GraphConfig(_Block):
    family: Literal["star", "path", "cycle", "complete", "erdos_renyi", "matrix"]
    size: Optional[PositiveInt] = None
    p: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    seed: int = 0
    matrix: Optional[Matrix] = None

    def build(self) -> np.ndarray:
        return build_graph(self.family, size=self.size, matrix=self.matrix, p=self.p, seed=self.seed)


class TauRange(_Block):
    start: PositiveFloat
    stop: PositiveFloat
    step: PositiveFloat

    @model_validator(mode="after")
    def _check_order(self) -> "TauRange":
        if self.stop < self.start:
            raise ValueError("tau stop must be >= start")
        return self

    def grid(self) -> np.ndarray:
        count = int(np.floor((self.stop - self.start) / self.step + 1e-9))
        return self.start + self.step * np.arange(count + 1)


class SweepConfig(_Block):
    graph: GraphConfig
    tau: Union[TauRange, List[PositiveFloat]]
    delta: PositiveFloat = 1.0
    x0: Union[float, List[float]] = 0.01
    horizon: PositiveFloat
    extinction_tol: PositiveFloat = NL__EXTINCTION_TOL
    step: Optional[PositiveFloat] = None
    workers: PositiveInt = THREAD_POOL_SIZE
    refine_width: Optional[PositiveFloat] = None

    def tau_grid(self) -> np.ndarray:
        return self.tau.grid() if isinstance(self.tau, TauRange) else np.asarray(self.tau, dtype=float)


class EstimationConfig(_Block):
    input_csv: str
    l1_weight: NonNegativeFloat = 0.0
    l1_grid: Optional[List[NonNegativeFloat]] = None
    rank_tol: PositiveFloat = EST__RANK_TOL
    max_iter: PositiveInt = EST__PROX_MAX_ITER
    window: Optional[PositiveInt] = None


class ScenarioConfig(_Block):
    model: Optional[ModelConfig] = None
    run: RunConfig = Field(default_factory=RunConfig)
    analysis: Optional[AnalysisConfig] = None
    sweep: Optional[SweepConfig] = None
    estimation: Optional[EstimationConfig] = None

    @model_validator(mode="after")
    def _check_analysis(self) -> "ScenarioConfig":
        if self.analysis is None:
            return self
        if self.model is None:
            raise ValueError("analysis needs a model block")
        n = self.model.n
        a = self.analysis
        for name, value in (("weights", a.weights), ("d_delta", a.d_delta)):
            if value is not None and len(value) != n:
                raise ValueError(f"analysis.{name} must have length {n}")
        for name, value in (("d_lambda", a.d_lambda), ("edge_costs", a.edge_costs)):
            if value is not None and (len(value) != n or any(len(row) != n for row in value)):
                raise ValueError(f"analysis.{name} must be {n}x{n}")
        if a.policy is not None and (
            len(a.policy.ddelta_deta) != n or len(a.policy.dlambda_deta) != n
        ):
            raise ValueError(f"analysis.policy derivatives must have dimension {n}")
        return self


def load_scenario(path: str) -> ScenarioConfig:
    """
    Read and validate a JSON scenario file.

    Relative snapshot paths are resolved against the scenario's directory.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            config = ScenarioConfig.model_validate_json(f.read())
    except Exception as e:
        logger.error(f"Error loading scenario {path}: {str(e)}")
        raise

    if config.estimation is not None and not os.path.isabs(config.estimation.input_csv):
        base = os.path.dirname(os.path.abspath(path))
        config.estimation.input_csv = os.path.join(base, config.estimation.input_csv)
    return config
