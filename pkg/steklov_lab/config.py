"""
Run configuration and manifest models.
"""
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import steklov_lab.views.settings as settings
from steklov_lab import __version__
from steklov_lab.modules.fields import FIELD_FAMILIES, MATRIX_FAMILIES, SCALAR_FAMILIES
from steklov_lab.modules.forms import Variant

ARTIFACT_VERSION = __version__


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- building blocks ---

class FieldSpec(_Model):
    family: str
    params: dict = Field(default_factory=dict)


class DisplacementSpec(FieldSpec):
    @field_validator("family")
    @classmethod
    def known_family(cls, value):
        if value not in FIELD_FAMILIES:
            raise ValueError(f"unknown field family {value!r}")
        return value


class ScalarSpec(FieldSpec):
    @field_validator("family")
    @classmethod
    def known_family(cls, value):
        if value not in SCALAR_FAMILIES:
            raise ValueError(f"unknown scalar field family {value!r}")
        return value


class MatrixSpec(FieldSpec):
    @field_validator("family")
    @classmethod
    def known_family(cls, value):
        if value not in MATRIX_FAMILIES:
            raise ValueError(f"unknown matrix field family {value!r}")
        return value


class DomainConfig(_Model):
    family: Literal["annulus", "rectangle", "file"] = "annulus"
    r_inner: float = Field(0.5, gt=0)
    r_outer: float = Field(1.0, gt=0)
    n_radial: int = Field(8, ge=1)
    n_angular: int = Field(64, ge=8)
    steklov: Literal["outer", "inner"] = "outer"
    width: float = Field(1.0, gt=0)
    height: float = Field(1.0, gt=0)
    nx: int = Field(8, ge=1)
    ny: int = Field(8, ge=1)
    steklov_sides: list[Literal["bottom", "right", "top", "left"]] = Field(default_factory=lambda: ["top"])
    path: Optional[str] = None

    @model_validator(mode="after")
    def consistent(self):
        if self.family == "annulus" and self.r_inner >= self.r_outer:
            raise ValueError("r_inner must be smaller than r_outer")
        if self.family == "file" and not self.path:
            raise ValueError("a file domain needs 'path'")
        return self


class ProblemConfig(_Model):
    variant: str = "P1"
    potential: Optional[ScalarSpec] = None
    conductivity: Optional[MatrixSpec] = None
    quad_order: int = Field(settings.VOLUME_QUAD_ORDER, ge=1)
    boundary_points: int = Field(settings.BOUNDARY_QUAD_POINTS, ge=1)

    @field_validator("variant")
    @classmethod
    def known_variant(cls, value):
        names = [v.value for v in Variant]
        if value not in names:
            raise ValueError(f"unknown variant {value!r}; expected one of {names}")
        return value


class SolverConfig(_Model):
    k: int = Field(settings.DEFAULT_EIGEN_COUNT, ge=0)
    cluster_tol: float = Field(settings.CLUSTER_TOL, gt=0)
    minmax: bool = False
    minmax_trials: int = Field(settings.MINMAX_TRIALS, ge=2)
    export_matrices: bool = False


# --- experiments ---

class SolveExperiment(_Model):
    kind: Literal["solve"] = "solve"


class DerivCheckExperiment(_Model):
    kind: Literal["deriv-check"] = "deriv-check"
    fields: list[DisplacementSpec] = Field(default_factory=list)
    steps: list[Annotated[float, Field(gt=0)]] = Field(default_factory=lambda: list(settings.FD_STEPS))
    group: Optional[int] = Field(None, ge=0)
    ibp: bool = True


class SplitExperiment(_Model):
    kind: Literal["split"] = "split"
    group: int = Field(1, ge=0)
    budget: float = Field(0.05, gt=0)
    support: Literal["S", "W", "interior", "any"] = "S"
    perturbation: Optional[DisplacementSpec] = None
    gap_tol: float = Field(settings.GAP_TOL, gt=0)
    candidates: int = Field(settings.CANDIDATE_COUNT, ge=1)


class SimplifyExperiment(_Model):
    kind: Literal["simplify"] = "simplify"
    N: int = Field(6, ge=1)
    budget: float = Field(0.05, gt=0)
    gap_tol: float = Field(settings.GAP_TOL, gt=0)
    support: Literal["S", "W", "interior", "any"] = "S"
    max_steps: int = Field(settings.MAX_STEPS, ge=1)
    candidates: int = Field(settings.CANDIDATE_COUNT, ge=1)


class CoeffExperiment(_Model):
    kind: Literal["coeff"] = "coeff"
    N: int = Field(6, ge=1)
    budget: float = Field(0.05, gt=0)
    gap_tol: float = Field(settings.GAP_TOL, gt=0)
    perturbation_kind: Literal["boundary_potential", "volume_potential", "matrix_field"] = "boundary_potential"
    region: Literal["all", "S", "W"] = "all"
    max_steps: int = Field(settings.MAX_STEPS, ge=1)
    candidates: int = Field(settings.CANDIDATE_COUNT, ge=1)


class OracleExperiment(_Model):
    kind: Literal["oracle-compare"] = "oracle-compare"
    k_max: int = Field(8, ge=0)
    count: int = Field(8, ge=1)


class WScanExperiment(_Model):
    kind: Literal["w-scan"] = "w-scan"
    group: int = Field(1, ge=0)


Experiment = Annotated[
    Union[
        SolveExperiment,
        DerivCheckExperiment,
        SplitExperiment,
        SimplifyExperiment,
        CoeffExperiment,
        OracleExperiment,
        WScanExperiment,
    ],
    Field(discriminator="kind"),
]

class RunConfig(_Model):
    domain: DomainConfig = Field(default_factory=DomainConfig)
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    experiment: Experiment = Field(default_factory=SolveExperiment)
    seed: int = 0
    output: Optional[str] = None


class RunManifest(_Model):
    config: dict
    version: str = ARTIFACT_VERSION
    started: str
    finished: Optional[str] = None
    input_hash: str
    files: list[str] = Field(default_factory=list)
    metrics: dict = Field(default_factory=dict)
    status: str = "running"
    exit_code: Optional[int] = None
