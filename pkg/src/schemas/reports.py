from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import List, Optional
from enum import Enum

class SystemName(str, Enum):
    GPLDA = "GPLDA"
    SUV_GPLDA = "SUV-GPLDA"

class CostParams(BaseModel):
    """Detection cost parameters (old NIST DCF)."""
    model_config = ConfigDict(frozen=True)

    c_miss: float = Field(10.0, gt=0.0, description="Cost of a missed target")
    c_fa: float = Field(1.0, gt=0.0, description="Cost of a false alarm")
    p_target: float = Field(0.01, gt=0.0, lt=1.0, description="Prior probability of a target trial")

    @property
    def default_cost(self) -> float:
        """Cost of the best trivial system, used for normalization."""
        return min(self.c_miss * self.p_target, self.c_fa * (1.0 - self.p_target))

class EvalReport(BaseModel):
    """Evaluation report for one score set."""
    eer: float = Field(..., ge=0.0, le=1.0)
    eer_threshold: float
    min_dcf: float = Field(..., ge=0.0, description="Normalized minimum detection cost")
    min_dcf_threshold: float
    n_target: int = Field(..., gt=0)
    n_nontarget: int = Field(..., gt=0)
    cost: CostParams = Field(default_factory=CostParams)

class ConditionResult(BaseModel):
    """One row of the comparison table."""
    system: SystemName
    partitioned: bool = Field(..., description="Utterance-partitioning enrollment")
    condition: str = Field(..., description='Enrollment/test durations, e.g. "10sec(2)-10sec"')
    eer: float = Field(..., description="EER averaged over seeds")
    min_dcf: float = Field(..., description="Normalized minDCF averaged over seeds")
    eer_per_seed: List[float]
    min_dcf_per_seed: List[float]
    relative_eer_improvement: Optional[float] = Field(
        None, description="Relative EER gain over the GPLDA 10sec-10sec baseline"
    )

class ExperimentReport(BaseModel):
    """Comparison of GPLDA and SUV-GPLDA with and without utterance partitioning."""
    seeds: List[int]
    snorm: bool
    n_target: int
    n_nontarget: int
    rows: List[ConditionResult]

    @model_validator(mode="after")
    def _rows_present(self):
        if not self.rows:
            raise ValueError("experiment report needs at least one row")
        return self

    def row(self, system: SystemName, condition: str) -> ConditionResult:
        for row in self.rows:
            if row.system == system and row.condition == condition:
                return row
        raise KeyError(f"{system.value} / {condition}")
