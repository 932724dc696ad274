"""Validated run configurations.  Unknown keys are rejected."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FlowSettings(_Strict):
    q: int = Field(ge=1)
    dt: float = Field(gt=0)
    steps: int = Field(ge=0)
    seed: int = 0
    integrator: Literal["euler", "rk4"] = "euler"
    record_every: int = Field(default=1, ge=1)
    snapshot_every: int = Field(default=0, ge=0)
    symmetry_degree: int = Field(default=3, ge=0)
    init_scale: float = Field(default=1.0, gt=0)
    max_abs_z: float = Field(default=1e6, gt=0)
    max_h_increase: float = Field(default=1e-3, gt=0)


class DecoupleConfig(FlowSettings):
    monomials: list[list[int]] = Field(min_length=1, description="Hermite multi-indices, one per family member")
    targets: list[float]
    weights: list[float] | None = None
    symmetrize_init: bool = False

    @model_validator(mode="after")
    def _shapes(self):
        dims = {len(a) for a in self.monomials}
        if len(dims) != 1:
            raise ValueError("all multi-indices must have the same length")
        if any(x < 0 for a in self.monomials for x in a):
            raise ValueError("multi-index entries must be non-negative")
        if len(self.targets) != len(self.monomials):
            raise ValueError("need one target per monomial")
        if self.weights is not None and len(self.weights) != len(self.monomials):
            raise ValueError("need one weight per monomial")
        return self

    @property
    def d(self) -> int:
        return len(self.monomials[0])


class AbelianConfig(FlowSettings):
    n: int = Field(ge=2)
    calibrate: bool = True
    record_gram: bool = True


class DecomposeCheckConfig(_Strict):
    n: int = Field(ge=2)
    q: int = Field(ge=1)
    seeds: int = Field(default=20, ge=1)
    seed0: int = 0
    scale: float = Field(default=1.0, gt=0)
    rtol: float = Field(default=1e-8, gt=0)


class MaxEntConfig(_Strict):
    monomials: list[list[int]] = Field(min_length=1, description="0-based variable index lists")
    targets: list[float]
    box: float = Field(gt=0)
    dim: int = Field(ge=1, le=4)
    nodes: int = Field(default=40, ge=2)
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _shapes(self):
        if len(self.targets) != len(self.monomials):
            raise ValueError("need one target per monomial")
        for mono in self.monomials:
            if not mono or any(not 0 <= i < self.dim for i in mono):
                raise ValueError(f"monomial {mono} has indices outside 0..{self.dim - 1}")
        return self


class HermiteCheckConfig(_Strict):
    seed: int = 0
    samples: int = Field(default=200_000, ge=100)
    kmax: int = Field(default=10, ge=1)
    max_degree: int = Field(default=3, ge=1)
    dim: int = Field(default=3, ge=1, le=3)


def load_config(model: type[BaseModel], path: str | Path | None, overrides: dict) -> BaseModel:
    """Read a JSON config (if given) and apply non-None command-line overrides."""
    data: dict = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return model.model_validate(data)
