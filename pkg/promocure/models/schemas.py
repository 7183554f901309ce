"""Typed configuration records for promocure runs"""

from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_FIXED_KNOTS = [0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.1, 2.4, 2.7, 3.0]


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SamplerConfig(_Record):
    """Adaptive Metropolis-Hastings schedule"""

    iterations: int = Field(default=70000, gt=0)
    burn_in: int = Field(default=10000, ge=0)
    thin: int = Field(default=15, gt=0)
    adapt_interval: int = Field(default=500, gt=0)
    adapt_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    seed: int = Field(default=20240601, ge=0, lt=2**64)
    n_chains: int = Field(default=1, gt=0)
    adapt: bool = True

    @model_validator(mode="after")
    def _check_schedule(self) -> "SamplerConfig":
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.retained < 1:
            raise ValueError("schedule retains no draws; lower thin or burn_in")
        return self

    @property
    def retained(self) -> int:
        """Number of retained draws m0"""
        return (self.iterations - self.burn_in) // self.thin


class GompertzParams(_Record):
    """Gompertz baseline with survivor function exp(-(b/a)(e^{at}-1))"""

    a: float = Field(default=0.5, gt=0.0)
    b: float = Field(default=1.1, gt=0.0)


class FixedScheme(_Record):
    kind: Literal["fixed"] = "fixed"
    knots: List[float] = Field(default_factory=lambda: list(DEFAULT_FIXED_KNOTS))

    @field_validator("knots")
    @classmethod
    def _strictly_increasing(cls, knots: List[float]) -> List[float]:
        if not knots:
            raise ValueError("at least one monitoring time is required")
        if knots[0] <= 0:
            raise ValueError("monitoring times must be positive")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("monitoring times must be strictly increasing")
        return knots


class RandomScheme(_Record):
    kind: Literal["random"] = "random"
    count: int = Field(default=10, ge=1)
    upper: float = Field(default=3.0, gt=0.0)


MonitoringScheme = Annotated[Union[FixedScheme, RandomScheme], Field(discriminator="kind")]


class Ar1Spec(_Record):
    """scale * Sigma(rho) with Sigma(rho)_ij = rho^|i-j|"""

    scale: float = Field(default=1.0, gt=0.0)
    rho: float = Field(default=0.3, gt=0.0, lt=1.0)


EtaMeanSource = Literal["npmle", "gompertz", "baseline_survival"]


class EtaPriorConfig(_Record):
    mean: Union[EtaMeanSource, List[float]] = "npmle"
    covariance: Union[Ar1Spec, List[List[float]]] = Field(default_factory=Ar1Spec)
    # baseline_survival source: estimates of S_pop(s_l | X = 0) at the grid knots
    survival: Optional[List[float]] = None
    # gompertz source; defaults to the scenario law inside studies
    gompertz: Optional[GompertzParams] = None

    @model_validator(mode="after")
    def _check_source(self) -> "EtaPriorConfig":
        if self.mean == "baseline_survival" and not self.survival:
            raise ValueError("mean 'baseline_survival' needs the 'survival' values")
        return self


class PriorConfig(_Record):
    """Normal priors on theta (independent) and eta"""

    theta_mean: List[float]
    theta_sd: List[float]
    eta: EtaPriorConfig = Field(default_factory=EtaPriorConfig)

    @field_validator("theta_sd")
    @classmethod
    def _positive(cls, sds: List[float]) -> List[float]:
        if any(s <= 0 for s in sds):
            raise ValueError("prior standard deviations must be positive")
        return sds

    @model_validator(mode="after")
    def _same_length(self) -> "PriorConfig":
        if len(self.theta_mean) != len(self.theta_sd):
            raise ValueError("theta_mean and theta_sd must have the same length")
        if not self.theta_mean:
            raise ValueError("theta needs at least the intercept")
        return self


def vague_study_prior(n_theta: int = 3) -> PriorConfig:
    """N(1, 10^2) on every coefficient, Gompertz-elicited eta mean, AR(1) rho = 0.3"""
    return PriorConfig(
        theta_mean=[1.0] * n_theta,
        theta_sd=[10.0] * n_theta,
        eta=EtaPriorConfig(mean="gompertz", covariance=Ar1Spec(scale=1.0, rho=0.3)),
    )


class ScenarioConfig(_Record):
    """Simulation design: data law, monitoring scheme, replicates and fitting setup"""

    n: int = Field(default=200, gt=0)
    theta_true: List[float] = Field(default_factory=lambda: [0.6, -0.5, 0.7])
    gompertz: GompertzParams = Field(default_factory=GompertzParams)
    scheme: MonitoringScheme = Field(default_factory=FixedScheme)
    replicates: int = Field(default=100, ge=1)
    seed: int = Field(default=20240601, ge=0, lt=2**64)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    prior: PriorConfig = Field(default_factory=vague_study_prior)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)

    @field_validator("theta_true")
    @classmethod
    def _three_coefficients(cls, theta: List[float]) -> List[float]:
        if len(theta) != 3:
            raise ValueError("theta_true holds an intercept and two slopes")
        return theta

    @model_validator(mode="after")
    def _prior_matches(self) -> "ScenarioConfig":
        if len(self.prior.theta_mean) != len(self.theta_true):
            raise ValueError("prior.theta_mean must match theta_true in length")
        return self


class DataConfig(_Record):
    """Where a current status table lives and which columns to use"""

    path: Path
    time_col: str = "u"
    status_col: str = "delta"
    covariate_cols: List[str] = Field(default_factory=list)
    delimiter: Optional[str] = None


class FitConfig(_Record):
    data: DataConfig
    prior: PriorConfig
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    # named covariate profiles, intercept excluded, e.g. {"CE": [0], "GE": [1]}
    profiles: Dict[str, List[float]] = Field(default_factory=dict)
    functional_mean: bool = False
    max_lag: int = Field(default=50, ge=1)
    output_dir: Optional[Path] = None

    @model_validator(mode="after")
    def _dimensions(self) -> "FitConfig":
        k1 = len(self.data.covariate_cols) + 1
        if len(self.prior.theta_mean) != k1:
            raise ValueError(
                f"prior.theta_mean has {len(self.prior.theta_mean)} entries, "
                f"expected {k1} (intercept + covariate_cols)"
            )
        for name, values in self.profiles.items():
            if len(values) != k1 - 1:
                raise ValueError(f"profile '{name}' needs {k1 - 1} covariate values")
        return self


class SimulateConfig(_Record):
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    rep_index: int = Field(default=0, ge=0)
    output_dir: Optional[Path] = None


class StudyConfig(_Record):
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    workers: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[Path] = None


class DiagnoseConfig(_Record):
    chains: List[Path]
    max_lag: int = Field(default=50, ge=1)
    output_dir: Optional[Path] = None

    @field_validator("chains")
    @classmethod
    def _nonempty(cls, chains: List[Path]) -> List[Path]:
        if not chains:
            raise ValueError("at least one chain file is required")
        return chains
