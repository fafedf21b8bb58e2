from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import field_validator, model_validator

from ecosystem._constants import (
    POSITIVITY_TOL,
    SOL__COMMUTING_SAMPLES,
    SOL__COMMUTING_TOL,
    SOL__INPUT_PANELS,
    SOL__NORM_SAMPLES,
)
from ecosystem.exceptions import ModelError
from ecosystem.models.base import ArrayModel, FloatArray
from ecosystem.models.network import Generator
from ecosystem.utils import gauss_legendre_panels, split_interval


class InputSignal(ArrayModel):
    """
    Piecewise-constant exogenous push u(t).

    values[k] holds on [breakpoints[k], breakpoints[k + 1]); the last value
    holds from the last breakpoint onwards.
    """

    breakpoints: FloatArray
    values: FloatArray

    @model_validator(mode="after")
    def _validate_signal(self) -> "InputSignal":
        self.require_vector("breakpoints", self.breakpoints)
        if self.breakpoints.size == 0:
            raise ValueError("input signal needs at least one breakpoint")
        if np.any(np.diff(self.breakpoints) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.values.ndim != 2 or self.values.shape[0] != self.breakpoints.shape[0]:
            raise ValueError("values must be one n-vector per breakpoint")
        if np.any(self.values < 0.0):
            raise ValueError("input values must be >= 0")
        return self

    @classmethod
    def constant(cls, u, t0: float = 0.0) -> "InputSignal":
        return cls(breakpoints=[t0], values=[np.asarray(u, dtype=float)])

    @classmethod
    def zeros(cls, n: int, t0: float = 0.0) -> "InputSignal":
        return cls.constant(np.zeros(n), t0)

    @classmethod
    def scalar(cls, breakpoints, values) -> "InputSignal":
        return cls(breakpoints=breakpoints, values=np.asarray(values, dtype=float).reshape(-1, 1))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def at(self, t: float) -> np.ndarray:
        scale = max(1.0, abs(float(self.breakpoints[0])))
        if t < self.breakpoints[0] - 1e-12 * scale:
            raise ModelError(f"input signal is undefined before t={self.breakpoints[0]}")
        idx = max(int(np.searchsorted(self.breakpoints, t, side="right")) - 1, 0)
        return self.values[idx]

    def pieces(self, a: float, b: float) -> List[Tuple[float, float, np.ndarray]]:
        """Constant pieces (lo, hi, value) covering [a, b]."""
        edges = split_interval(a, b, self.breakpoints)
        return [(lo, hi, self.at(0.5 * (lo + hi))) for lo, hi in zip(edges[:-1], edges[1:])]


class InfluenceState(ArrayModel):
    time: float
    values: FloatArray
    saturating: bool = False

    @model_validator(mode="after")
    def _validate_state(self) -> "InfluenceState":
        self.require_vector("influence state", self.values)
        scale = max(1.0, float(np.max(np.abs(self.values)))) if self.values.size else 1.0
        if np.any(self.values < -POSITIVITY_TOL * scale):
            raise ValueError("influence entries must be >= 0")
        if self.saturating and np.any(self.values > 1.0 + POSITIVITY_TOL):
            raise ValueError("saturating influence entries must be <= 1")
        return self


class Segment(ArrayModel):
    t_start: float
    t_end: float
    generator: Generator
    input: FloatArray

    @model_validator(mode="after")
    def _validate_segment(self) -> "Segment":
        if not self.t_end > self.t_start:
            raise ValueError(f"segment [{self.t_start}, {self.t_end}] must have positive length")
        self.require_vector("segment input", self.input, self.generator.n)
        if np.any(self.input < 0.0):
            raise ValueError("segment input must be >= 0")
        return self

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


class Schedule(ArrayModel):
    """Contiguous, time-ordered piecewise-constant (M_k, u_k) segments."""

    segments: Tuple[Segment, ...]

    @field_validator("segments")
    @classmethod
    def _validate_segments(cls, value: Tuple[Segment, ...]) -> Tuple[Segment, ...]:
        if not value:
            raise ValueError("schedule must contain at least one segment")
        n = value[0].generator.n
        for prev, nxt in zip(value[:-1], value[1:]):
            scale = max(1.0, abs(prev.t_end))
            if abs(prev.t_end - nxt.t_start) > 1e-12 * scale:
                raise ValueError(
                    f"segments must be contiguous: gap or overlap between {prev.t_end} and {nxt.t_start}"
                )
            if nxt.generator.n != n:
                raise ValueError("all segments must share the same dimension")
        return value

    @classmethod
    def constant(cls, generator: Generator, u, t0: float, horizon: float) -> "Schedule":
        return cls(segments=(Segment(t_start=t0, t_end=t0 + horizon, generator=generator, input=u),))

    @classmethod
    def uniform(cls, generators, inputs, t0: float, dt: float) -> "Schedule":
        return cls(
            segments=tuple(
                Segment(t_start=t0 + k * dt, t_end=t0 + (k + 1) * dt, generator=g, input=u)
                for k, (g, u) in enumerate(zip(generators, inputs))
            )
        )

    @property
    def n(self) -> int:
        return self.segments[0].generator.n

    @property
    def t0(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    @property
    def boundaries(self) -> np.ndarray:
        return np.array([s.t_start for s in self.segments] + [self.t_end])

    def coalesced(self) -> "Schedule":
        """Merge consecutive segments that share the same generator and input."""
        merged = [self.segments[0]]
        for seg in self.segments[1:]:
            last = merged[-1]
            if np.array_equal(last.generator.matrix, seg.generator.matrix) and np.array_equal(
                last.input, seg.input
            ):
                merged[-1] = Segment(
                    t_start=last.t_start, t_end=seg.t_end, generator=last.generator, input=last.input
                )
            else:
                merged.append(seg)
        return Schedule(segments=tuple(merged))

    def segment_index(self, t: float) -> int:
        starts = np.array([s.t_start for s in self.segments])
        return int(np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.segments) - 1))

    def input_signal(self) -> InputSignal:
        return InputSignal(
            breakpoints=[s.t_start for s in self.segments], values=[s.input for s in self.segments]
        )


class GeneratorPath(ArrayModel):
    """
    Time-varying generator M(t) on [t0, t_end].

    breakpoints lists the times where M jumps; piecewise_constant paths are
    constant between breakpoints. antiderivative, when given, returns a
    primitive F(t) of M used for exact integrals of the commuting case.
    """

    evaluator: Callable[[float], np.ndarray]
    t0: float
    t_end: float
    commuting_hint: bool = False
    breakpoints: Tuple[float, ...] = ()
    piecewise_constant: bool = False
    antiderivative: Optional[Callable[[float], np.ndarray]] = None

    @model_validator(mode="after")
    def _validate_domain(self) -> "GeneratorPath":
        if not self.t_end >= self.t0:
            raise ValueError("path domain must satisfy t_end >= t0")
        return self

    @classmethod
    def constant(cls, m, t0: float, t_end: float) -> "GeneratorPath":
        matrix = Generator(matrix=m).matrix if not isinstance(m, Generator) else m.matrix
        return cls(
            evaluator=lambda t: matrix,
            t0=t0,
            t_end=t_end,
            commuting_hint=True,
            piecewise_constant=True,
            antiderivative=lambda t: matrix * t,
        )

    @classmethod
    def scaled(
        cls,
        profile: Callable[[float], float],
        m0,
        t0: float,
        t_end: float,
        profile_integral: Optional[Callable[[float], float]] = None,
    ) -> "GeneratorPath":
        """Commuting family M(t) = profile(t) * M0 with profile >= 0."""
        base = np.asarray(m0.matrix if isinstance(m0, Generator) else m0, dtype=float)
        return cls(
            evaluator=lambda t: profile(t) * base,
            t0=t0,
            t_end=t_end,
            commuting_hint=True,
            antiderivative=(lambda t: profile_integral(t) * base) if profile_integral else None,
        )

    @classmethod
    def modulated(
        cls, interactions, decay, amplitude: float, period: float, t0: float, t_end: float
    ) -> "GeneratorPath":
        """M(t) = (1 + a sin(2 pi t / P)) Lambda - diag(delta); non-commuting in general."""
        lam = np.asarray(interactions, dtype=float)
        leak = np.diag(np.asarray(decay, dtype=float))
        if abs(amplitude) > 1.0:
            raise ValueError("modulation amplitude must lie in [-1, 1] to stay Metzler")
        return cls(
            evaluator=lambda t: (1.0 + amplitude * np.sin(2.0 * np.pi * t / period)) * lam - leak,
            t0=t0,
            t_end=t_end,
        )

    @classmethod
    def from_schedule(cls, schedule: Schedule) -> "GeneratorPath":
        matrices = [s.generator.matrix for s in schedule.segments]
        return cls(
            evaluator=lambda t: matrices[schedule.segment_index(t)],
            t0=schedule.t0,
            t_end=schedule.t_end,
            breakpoints=tuple(float(s.t_start) for s in schedule.segments[1:]),
            piecewise_constant=True,
        )

    @property
    def n(self) -> int:
        return self.matrix(self.t0).shape[0]

    def matrix(self, t: float) -> np.ndarray:
        scale = max(1.0, abs(self.t0), abs(self.t_end))
        if t < self.t0 - 1e-12 * scale or t > self.t_end + 1e-12 * scale:
            raise ModelError(f"t={t} lies outside the path domain [{self.t0}, {self.t_end}]")
        value = np.asarray(self.evaluator(t), dtype=float)
        if np.any(ArrayModel.off_diagonal(value) < 0.0):
            raise ModelError(f"generator at t={t} is not Metzler")
        return value

    def generator(self, t: float) -> Generator:
        return Generator(matrix=self.matrix(t))

    def integrate(self, a: float, b: float, panels: int = 2 * SOL__INPUT_PANELS) -> np.ndarray:
        """Integral of M over [a, b]."""
        if self.antiderivative is not None:
            return np.asarray(self.antiderivative(b), dtype=float) - np.asarray(self.antiderivative(a), dtype=float)
        if b == a:
            return np.zeros_like(self.matrix(a))
        nodes, weights = gauss_legendre_panels(a, b, panels, self.breakpoints)
        return np.einsum("k,kij->ij", weights, np.stack([self.matrix(t) for t in nodes]))

    def max_norm(self, a: float, b: float) -> float:
        """Largest 1-norm of M sampled on [a, b] (Gauss nodes of every smooth piece)."""
        nodes, _ = gauss_legendre_panels(a, b, max(1, SOL__NORM_SAMPLES // 3), self.breakpoints)
        samples = np.concatenate([[a, b], nodes])
        return max(float(np.linalg.norm(self.matrix(t), 1)) for t in samples)

    def verify_commuting(self, samples: int = SOL__COMMUTING_SAMPLES, seed: int = 0) -> bool:
        """Check ||[M(s), M(t)]|| <= tol ||M(s)|| ||M(t)|| on sampled time pairs."""
        rng = np.random.default_rng(seed)
        for s, t in rng.uniform(self.t0, self.t_end, size=(samples, 2)):
            ms, mt = self.matrix(s), self.matrix(t)
            commutator = np.linalg.norm(ms @ mt - mt @ ms)
            if commutator > SOL__COMMUTING_TOL * np.linalg.norm(ms) * np.linalg.norm(mt):
                return False
        return True

    def augmented(self, u) -> "GeneratorPath":
        """Path of [[M(t), u], [0, 0]], whose transition carries the input response."""
        push = np.asarray(u, dtype=float)
        n = push.shape[0]

        def evaluate(t: float) -> np.ndarray:
            block = np.zeros((n + 1, n + 1))
            block[:n, :n] = self.evaluator(t)
            block[:n, n] = push
            return block

        return GeneratorPath(
            evaluator=evaluate,
            t0=self.t0,
            t_end=self.t_end,
            breakpoints=self.breakpoints,
            piecewise_constant=self.piecewise_constant,
        )
