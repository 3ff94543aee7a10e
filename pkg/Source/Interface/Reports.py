#!/usr/bin/env python3
"""
File: Reports.py
Path: ClassroomPeers/Source/Interface/Reports.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Report assembly and emission for ClassroomPeers

Purpose: Builds the EstimateReport from a GMM result and its inference,
serializes reports as JSON with 17 significant digits (NaN as null), as TSV
through pandas, and as prettytable text rounded to 3 decimals. Every file is
written atomically: temporary file in the target directory, then os.replace.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from prettytable import PrettyTable

from ..Core.Configuration import EstimatorConfig
from ..Core.Errors import ParameterBoundsError, PeerEffectsError
from ..Core.Model import UnpackDelta
from ..Estimation.EfficientGMM import GmmResult
from ..Estimation.Inference import InferenceReport, LambdaOfRho

PathLike = Union[str, Path]


# ===== SERIALIZATION =====

def _JsonScalar(Value: Any) -> str:
    if Value is None:
        return "null"
    if isinstance(Value, (bool, np.bool_)):
        return "true" if Value else "false"
    if isinstance(Value, (int, np.integer)):
        return str(int(Value))
    if isinstance(Value, (float, np.floating)):
        Number = float(Value)
        if not math.isfinite(Number):
            return "null"
        Text = format(Number, ".17g")
        # keep floats recognizable as floats
        if all(Char not in Text for Char in ".eEn"):
            Text += ".0"
        return Text
    return json.dumps(str(Value), ensure_ascii=False)


def ToJson(Value: Any, Indent: int = 2, Level: int = 0) -> str:
    """JSON text with every float at 17 significant digits and NaN/inf as null"""
    Pad = " " * (Indent * (Level + 1))
    Close = " " * (Indent * Level)
    if isinstance(Value, pd.DataFrame):
        Value = Value.to_dict(orient="records")
    if isinstance(Value, np.ndarray):
        Value = Value.tolist()
    if isinstance(Value, dict):
        if not Value:
            return "{}"
        Items = [f"{Pad}{json.dumps(str(Key))}: {ToJson(Item, Indent, Level + 1)}" for Key, Item in Value.items()]
        return "{\n" + ",\n".join(Items) + "\n" + Close + "}"
    if isinstance(Value, (list, tuple)):
        if not Value:
            return "[]"
        Items = [f"{Pad}{ToJson(Item, Indent, Level + 1)}" for Item in Value]
        return "[\n" + ",\n".join(Items) + "\n" + Close + "]"
    return _JsonScalar(Value)


def AtomicWrite(FilePath: PathLike, Text: str) -> Path:
    """Write Text to FilePath through a temporary file and os.replace"""
    Target = Path(FilePath)
    Target.parent.mkdir(parents=True, exist_ok=True)
    Handle, Temporary = tempfile.mkstemp(dir=Target.parent, prefix=f".{Target.name}.", suffix=".tmp")
    try:
        with os.fdopen(Handle, "w", encoding="utf-8", newline="") as File:
            File.write(Text)
        os.replace(Temporary, Target)
    except BaseException:
        if os.path.exists(Temporary):
            os.unlink(Temporary)
        raise
    return Target


def WriteJson(FilePath: PathLike, Value: Any) -> Path:
    return AtomicWrite(FilePath, ToJson(Value) + "\n")


def WriteTsv(FilePath: PathLike, Frame: pd.DataFrame) -> Path:
    return AtomicWrite(FilePath, Frame.to_csv(sep="\t", index=False, float_format="%.17g", na_rep=""))


def RenderTable(Rows: Sequence[Dict[str, Any]], Columns: Optional[Sequence[str]] = None,
                Title: Optional[str] = None) -> str:
    """prettytable text with numbers rounded to 3 decimals"""
    Rows = list(Rows)
    Columns = list(Columns or (Rows[0].keys() if Rows else []))
    Table = PrettyTable()
    Table.field_names = Columns
    for Row in Rows:
        Table.add_row([_Cell(Row.get(Column)) for Column in Columns])
    Table.align = "r"
    if Columns:
        Table.align[Columns[0]] = "l"
    if Title:
        Table.title = Title
    return Table.get_string()


def _Cell(Value: Any) -> str:
    if Value is None:
        return ""
    if isinstance(Value, (bool, np.bool_)):
        return "yes" if Value else "no"
    if isinstance(Value, (float, np.floating)):
        return "" if not math.isfinite(float(Value)) else f"{float(Value):.3f}"
    return str(Value)


# ===== ESTIMATE REPORT =====

@dataclass(frozen=True, eq=False)
class EstimateReport:
    """Everything `estimate` emits: estimates, SEs, gamma, lambda, fit and convergence"""

    Parameters: List[Dict[str, Any]]
    ThetaTilde: Dict[str, Any]
    GammaHat: Dict[str, float]
    Lambda: Dict[str, float]
    PseudoR2: Dict[str, float]
    RankCorrelations: Dict[str, float]
    Convergence: Dict[str, Any]
    Sample: Dict[str, Any]
    Structural: Dict[str, List[float]] = field(default_factory=dict)
    Settings: Dict[str, Any] = field(default_factory=dict)

    def ToDict(self) -> Dict[str, Any]:
        return {
            "parameters": self.Parameters,
            "theta_tilde": self.ThetaTilde,
            "gamma_hat": self.GammaHat,
            "lambda": self.Lambda,
            "pseudo_r2": self.PseudoR2,
            "rank_correlations": self.RankCorrelations,
            "convergence": self.Convergence,
            "sample": self.Sample,
            "structural": self.Structural,
            "config": self.Settings,
        }

    def ParameterFrame(self) -> pd.DataFrame:
        return pd.DataFrame(self.Parameters)

    def RenderText(self) -> str:
        Blocks = [
            RenderTable(self.Parameters, ["parameter", "estimate", "se", "ci_lower", "ci_upper"],
                        Title="Efficient GMM estimates"),
            RenderTable([{"group": Label, "gamma_hat": Value, "pseudo_r2": self.PseudoR2.get(Label)}
                         for Label, Value in self.GammaHat.items()], Title="Variance groups"),
            RenderTable([{"statistic": Key, "value": Value} for Key, Value in
                         [("lambda", self.Lambda["estimate"]), ("se(lambda)", self.Lambda["se"]),
                          *self.RankCorrelations.items()]], Title="Derived statistics"),
            RenderTable([{"item": Key, "value": Value} for Key, Value in self.Convergence.items()],
                        Title="Convergence"),
        ]
        return "\n".join(Blocks)


def BuildEstimateReport(Result: GmmResult, Inference: InferenceReport,
                        Config: Optional[EstimatorConfig] = None) -> EstimateReport:
    Design = Result.Design
    Labels = list(Design.TypeLabels)
    Tilde = Result.ThetaTilde
    Structural: Dict[str, List[float]] = {}
    try:
        Coefficients = UnpackDelta(Result.ThetaHat.Delta, Design.RoleCounts, Result.ThetaHat.F1)
        Structural = {
            "delta_v_class": Coefficients.DeltaVClass.tolist(),
            "beta_w1_class": Coefficients.BetaW1Class.tolist(),
            "beta_w2_class": Coefficients.BetaW2Class.tolist(),
            "delta_v_student": Coefficients.DeltaVStudent.tolist(),
            "beta_w1_student": Coefficients.BetaW1Student.tolist(),
            "beta_w2_student": Coefficients.BetaW2Student.tolist(),
        }
    except ParameterBoundsError:
        Structural = {}

    return EstimateReport(
        Parameters=Inference.AsTable(),
        ThetaTilde={"rho": Tilde.Rho, "f1": Tilde.F1, "delta": dict(zip(Design.Labels, Tilde.Delta.tolist()))}
        if Tilde is not None else {},
        GammaHat=dict(zip(Labels, Result.GammaHat.Gamma.tolist())),
        Lambda={"estimate": Inference.Lambda, "se": Inference.SeLambda},
        PseudoR2=Inference.PseudoR2,
        RankCorrelations=Inference.RankCorrs,
        Convergence={
            "converged": Result.Converged,
            "iterations": Result.Iterations,
            "qn_at_min": Result.QnAtMin,
            "j_statistic": Result.JStatistic,
            "moment_norm": Result.MomentNorm,
            "scaled_gradient": Result.ScaledGradient,
            "boundary": Result.Boundary,
            "method": Result.Method,
            "covariance": Inference.CovarianceType,
        },
        Sample={
            "students": Design.NumRows,
            "classrooms": Design.NumClassrooms,
            "variance_groups": Labels,
            "covariates": list(Design.Labels),
            "dropped_classrooms": list(Design.Report.get("dropped_classrooms", [])),
            "dropped_students": dict(Design.Report.get("dropped_students", {})),
        },
        Structural=Structural,
        Settings=Config.model_dump() if Config is not None else {},
    )


def PartialEstimateReport(Error: PeerEffectsError, Config: Optional[EstimatorConfig] = None) -> EstimateReport:
    """First-step values carried by a pipeline failure, in the estimate report layout"""
    Partial = Error.Details.get("partial") or {}
    Missing = float("nan")
    Tilde: Dict[str, Any] = {}
    Rows: List[Dict[str, Any]] = []
    if "rho_tilde" in Partial:
        Tilde["rho"] = Partial["rho_tilde"]
    if "f1_tilde" in Partial:
        Tilde["f1"] = Partial["f1_tilde"]
    Tilde["delta"] = dict(Partial.get("delta_tilde", {}))
    Values = [(Name, Tilde[Name]) for Name in ("rho", "f1") if Name in Tilde]
    Values += [(f"delta[{Label}]", Value) for Label, Value in Tilde["delta"].items()]
    for Name, Value in Values:
        Rows.append({"parameter": Name, "estimate": float(Value), "se": Missing,
                     "ci_lower": Missing, "ci_upper": Missing})
    Lambda = LambdaOfRho(Tilde["rho"]) if "rho" in Tilde else (Missing, Missing)

    return EstimateReport(
        Parameters=Rows,
        ThetaTilde=Tilde,
        GammaHat={},
        Lambda={"estimate": Lambda[0], "se": Lambda[1]},
        PseudoR2={},
        RankCorrelations={},
        Convergence={
            "converged": False,
            "status": "partial",
            "stage": Error.Stage,
            "error": type(Error).__name__,
            "message": Error.Message,
        },
        Sample={},
        Settings=Config.model_dump() if Config is not None else {},
    )
