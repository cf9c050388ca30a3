"""
Report Models
Pydantic models for loss breakdowns, training history, evaluation reports and results tables
"""

from typing import Dict, List, Literal, Optional

import pandas as pd
from pydantic import BaseModel, Field, PrivateAttr

from mfsb.utils.errors import ContractError

REPORT_COLUMNS = ["method", "world", "S", "U", "HM", "AUC"]


def percent(ratio: float) -> str:
    """Ratio as a percentage with two decimals (0.4933 -> '49.33')"""
    return f"{ratio * 100:.2f}"


class LossBreakdown(BaseModel):
    """Scalar value of every present loss term and their weighted total"""
    terms: Dict[str, float] = Field(default_factory=dict)
    total: float

    _objective = PrivateAttr(default=None)

    def attach(self, objective) -> None:
        self._objective = objective

    @property
    def objective(self):
        """Differentiable total (the tape tensor) of a training step"""
        if self._objective is None:
            raise ContractError("Loss breakdown carries no differentiable objective")
        return self._objective

    def to_row(self, step: int) -> Dict[str, float]:
        return {"step": step, **self.terms, "total": self.total}


class CurvePoint(BaseModel):
    bias: float
    seen: float = Field(..., ge=0.0, le=1.0)
    unseen: float = Field(..., ge=0.0, le=1.0)


class EvalReport(BaseModel):
    """S, U, HM and AUC of one world setting plus the curve behind them"""
    method: str = ""
    world: Literal["open", "closed"]
    seen_acc: float = Field(..., ge=0.0, le=1.0)
    unseen_acc: float = Field(..., ge=0.0, le=1.0)
    harmonic_mean: float = Field(..., ge=0.0, le=1.0)
    auc: float = Field(..., ge=0.0, le=1.0)
    curve: List[CurvePoint] = Field(default_factory=list)
    best_bias: float = 0.0
    hm_seen: float = Field(default=0.0, ge=0.0, le=1.0)
    hm_unseen: float = Field(default=0.0, ge=0.0, le=1.0)
    attr_acc: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    obj_acc: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    def csv_row(self) -> Dict[str, str]:
        return {
            "method": self.method,
            "world": self.world,
            "S": percent(self.seen_acc),
            "U": percent(self.unseen_acc),
            "HM": percent(self.harmonic_mean),
            "AUC": percent(self.auc),
        }


class TrainHistory(BaseModel):
    """Per-step loss breakdowns and per-epoch validation reports"""
    steps: List[LossBreakdown] = Field(default_factory=list)
    epoch_reports: List[EvalReport] = Field(default_factory=list)
    epoch_mean_totals: List[float] = Field(default_factory=list)

    @property
    def totals(self) -> List[float]:
        return [step.total for step in self.steps]

    def to_frame(self) -> pd.DataFrame:
        """One row per step: step, one column per term, total"""
        rows = [b.to_row(i) for i, b in enumerate(self.steps)]
        if not rows:
            return pd.DataFrame(columns=["step", "total"])
        frame = pd.DataFrame(rows)
        terms = [c for c in frame.columns if c not in ("step", "total")]
        return frame[["step", *terms, "total"]]


class ResultsRow(BaseModel):
    """One method's ratios in a results table"""
    method: str = Field(..., min_length=1)
    seen: float = Field(..., ge=0.0, le=1.0)
    unseen: float = Field(..., ge=0.0, le=1.0)
    hm: float = Field(..., ge=0.0, le=1.0)
    auc: float = Field(..., ge=0.0, le=1.0)

    @classmethod
    def from_report(cls, report: EvalReport, method: Optional[str] = None) -> "ResultsRow":
        return cls(
            method=method or report.method,
            seen=report.seen_acc,
            unseen=report.unseen_acc,
            hm=report.harmonic_mean,
            auc=report.auc,
        )


class ResultsTable(BaseModel):
    """Rows of (method, S, U, HM, AUC) for one world"""
    world: Literal["open", "closed"]
    rows: List[ResultsRow] = Field(default_factory=list)
    per_seed: Dict[str, List[ResultsRow]] = Field(default_factory=dict)
