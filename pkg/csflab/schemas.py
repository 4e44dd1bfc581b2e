from __future__ import annotations

from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

STAGE_ORDER = ("init", "evolve", "energy", "peel", "ratios", "identities")
NEEDS_EVOLVE = {"energy", "peel"}
RECIPES = ("zero", "charged-gaussian", "real-pulse", "coulomb", "plane-wave", "manufactured")


class WeightParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    s: float = Field(default=0.75, gt=0.5, le=1.0)
    gamma: float = Field(default=0.5, gt=0.0)
    eps: float = Field(default=0.05, gt=0.0)
    # 4ε <= s − 1/2 を要求する
    strict: bool = False
    # w_γ = τ_−^{2γ} χ_{t<r}
    sharp: bool = False

    @model_validator(mode="after")
    def _check_ranges(self) -> "WeightParams":
        bound = self.s - 0.5
        if self.strict and 4.0 * self.eps > bound + 1e-15:
            raise ValueError(f"strict mode needs 4*eps <= s - 1/2 (eps={self.eps}, s={self.s})")
        if self.eps > bound + 1e-15:
            raise ValueError(f"eps <= s - 1/2 violated (eps={self.eps}, s={self.s})")
        if self.s + self.gamma >= 1.5:
            raise ValueError(f"s + gamma < 3/2 violated (s={self.s}, gamma={self.gamma})")
        return self


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: Literal["sph1d", "box3d"] = "sph1d"
    # sph1d: セル数 N（0 なら R_max / h から決める）、box3d: 一辺 n
    N: int = Field(default=0, ge=0)
    n: int = Field(default=32, ge=8, le=96)
    h: float = Field(default=0.05, gt=0.0)
    cfl: float = Field(default=0.5, gt=0.0)
    T: float = Field(default=100.0, ge=0.0)
    cadence: float = Field(default=1.0, gt=0.0)
    R_max: float = Field(default=160.0, gt=0.0)
    weights: WeightParams = Field(default_factory=WeightParams)
    recipe: str = "charged-gaussian"
    chi_offset: float = 2.0
    amplitude: float = 0.05
    r0: float = Field(default=10.0, ge=0.0)
    width: float = Field(default=2.0, gt=0.0)
    charge_rate: float = 1.0
    gauge: Literal["outer", "origin"] = "outer"
    free_field: bool = False
    sponge: float = Field(default=0.1, ge=0.0, lt=0.5)
    seed: int = 0

    @model_validator(mode="after")
    def _check_invariants(self) -> "RunConfig":
        # recipe 名の検証は init 側（RecipeUnknown）
        if self.cfl > 0.9:
            raise ValueError(f"CFL invariant violated: cfl={self.cfl} > 0.9")
        if self.scheme == "sph1d":
            need = self.T + self.data_radius + 5.0
            if need > self.R_max:
                raise ValueError(
                    f"causal disconnection violated: T + support + 5 = {need:g} > R_max = {self.R_max:g}"
                )
        return self

    @property
    def dt(self) -> float:
        return self.cfl * self.h

    @property
    def data_radius(self) -> float:
        if self.recipe in ("zero", "coulomb", "manufactured", "plane-wave"):
            return 0.0
        return self.r0 + 5.0 * self.width

    @property
    def cells(self) -> int:
        return self.N if self.N > 0 else int(round(self.R_max / self.h))


class Pipeline(BaseModel):
    model_config = ConfigDict(frozen=True)

    stages: List[str] = Field(default_factory=lambda: ["init", "evolve", "energy", "peel"])
    config_path: str = ""
    output_dir: str = ""
    seed: int = 0

    @model_validator(mode="after")
    def _check_order(self) -> "Pipeline":
        unknown = [s for s in self.stages if s not in STAGE_ORDER]
        if unknown:
            raise ValueError(f"unknown stages: {unknown}")
        idx = [STAGE_ORDER.index(s) for s in self.stages]
        if idx != sorted(idx) or len(set(idx)) != len(idx):
            raise ValueError(f"stages out of order: {self.stages}")
        if NEEDS_EVOLVE & set(self.stages) and "evolve" not in self.stages:
            raise ValueError("energy/peel stages need the evolve stage")
        return self
