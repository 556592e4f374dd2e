from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


# Base schemas
class BaseSchema(BaseModel):
    model_config = ConfigDict(from_attributes=True)


# Event schemas
class AccidentEvent(BaseSchema):
    model_config = ConfigDict(frozen=True)

    region_index: int = Field(..., ge=0, description="Row in the region catalog")
    time_index: int = Field(..., ge=0, description="Interval index on the common time axis")
    severity: int = Field(..., ge=1, le=3, description="1=slight, 2=serious, 3=fatal")


class RejectedRow(BaseSchema):
    line: int
    reason: str
    raw: str = ""


class IngestIssues(BaseSchema):
    """Non-fatal problems collected while loading one source."""

    unknown_regions: List[str] = Field(default_factory=list)
    rejected_rows: List[RejectedRow] = Field(default_factory=list)
    imputed_regions: List[str] = Field(default_factory=list)
    self_loops: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)

    def merge(self, other: "IngestIssues") -> "IngestIssues":
        return IngestIssues(
            unknown_regions=sorted(set(self.unknown_regions) | set(other.unknown_regions)),
            rejected_rows=self.rejected_rows + other.rejected_rows,
            imputed_regions=sorted(set(self.imputed_regions) | set(other.imputed_regions)),
            self_loops=self.self_loops + other.self_loops,
            notes=self.notes + other.notes,
        )


class SparsitySummary(BaseSchema):
    n_regions: int
    n_steps: int
    nonzero_fraction: float = Field(..., ge=0, le=1)
    zero_region_fraction: float = Field(..., ge=0, le=1)
    total_risk: float
    max_cell: float


# Loss schemas
class LossBreakdown(BaseSchema):
    mse: float
    contrastive: float
    l2: float
    total: float
    lambda1: float
    lambda2: float


# Evaluation schemas
class RecallResult(BaseSchema):
    value: Optional[float] = Field(None, description="None when every step was skipped")
    n_retained: int = 0
    n_skipped: int = 0

    @property
    def defined(self) -> bool:
        return self.n_retained > 0


class StepMetrics(BaseSchema):
    step: int = Field(..., ge=1)
    rmse: float
    mae: float
    recall_at_k: Optional[float] = None
    n_retained: int = 0


class GroupMetrics(BaseSchema):
    group: Literal["non-risk", "low-risk", "high-risk"]
    n_regions: int
    rmse: Optional[float] = None
    mae: Optional[float] = None


class EvalReport(BaseSchema):
    rmse: float
    mae: float
    recall_at_k: Optional[float] = Field(None, ge=0, le=1)
    k_fraction: float
    per_step: List[StepMetrics]
    n_windows: int
    split: str = "test"
    source: str = "model"
    group_metrics: List[GroupMetrics] = Field(default_factory=list)


class CheckpointMeta(BaseSchema):
    format_version: int
    epoch: int
    best_val_rmse: Optional[float] = None
    epochs_without_improvement: int = 0
    global_step: int = 0
    dims: Dict[str, int] = Field(default_factory=dict)
