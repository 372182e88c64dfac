"""Scalar distribution specs used inside config models.

Each spec is a small pydantic model with a ``sample`` method so that config
files can choose between families (``dist=uniform`` vs ``dist=lognormal``)
without code changes.
"""
from __future__ import annotations

from typing import Annotated, Literal, Union

import numpy as np
from pydantic import ConfigDict, BaseModel, Field, model_validator


class UniformDist(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dist: Literal["uniform"] = "uniform"
    low: float
    high: float

    @model_validator(mode="after")
    def _check_bounds(self) -> "UniformDist":
        if not self.high > self.low:
            raise ValueError(f"uniform requires high > low, got [{self.low}, {self.high}]")
        return self

    def sample(self, gen: np.random.Generator) -> float:
        return float(gen.uniform(self.low, self.high))


class LogNormalDist(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dist: Literal["lognormal"] = "lognormal"
    mu: float = 0.0
    sigma: float = Field(gt=0.0)

    def sample(self, gen: np.random.Generator) -> float:
        return float(gen.lognormal(self.mu, self.sigma))


class FixedDist(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dist: Literal["fixed"] = "fixed"
    value: float

    def sample(self, gen: np.random.Generator) -> float:
        return self.value


ScalarDist = Annotated[Union[UniformDist, LogNormalDist, FixedDist], Field(discriminator="dist")]


def strictly_positive(d: UniformDist | LogNormalDist | FixedDist) -> bool:
    """Whether every draw from the distribution is > 0 (lognormal support is
    open at zero, so it always qualifies)."""
    if isinstance(d, UniformDist):
        return d.low > 0.0
    if isinstance(d, FixedDist):
        return d.value > 0.0
    return True
