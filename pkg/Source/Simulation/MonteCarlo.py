#!/usr/bin/env python3
"""
File: MonteCarlo.py
Path: ClassroomPeers/Source/Simulation/MonteCarlo.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Monte Carlo harness for the two-step GMM estimator

Purpose: Runs R seeded replications of simulate -> estimate -> inference,
in parallel through joblib with a tqdm progress bar, and summarizes each
parameter by mean bias, RMSE, Monte Carlo standard deviation, mean
estimated standard error and 95% confidence-interval coverage. A failed
replication is recorded with its error class and never stops the run.
"""

import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from ..Core.Configuration import DgpConfig, EstimatorConfig
from ..Core.Errors import ParameterBoundsError, PeerEffectsError
from ..Core.Logger import GetLogger
from ..Estimation.EfficientGMM import EstimatePipeline
from ..Estimation.Inference import ComputeInference, NORMAL_975
from .DataGenerator import ReplicationSeed, SimulateSample

Log = GetLogger("MonteCarlo")


def RunReplication(Dgp: DgpConfig, Estimator: EstimatorConfig, Replication: int,
                   ClusterSe: bool = False) -> Dict[str, Any]:
    """One replication as a flat record: estimates, standard errors and true values"""
    Started = time.perf_counter()
    Record: Dict[str, Any] = {"replication": Replication, "status": "ok", "message": ""}
    try:
        Data, Truth = SimulateSample(Dgp, ReplicationSeed(Dgp.seed, Replication))
        Result = EstimatePipeline(Data, Estimator)
        Report = ComputeInference(Result, ClusterSe or Estimator.cluster_se)
    except PeerEffectsError as Error:
        Record.update(status=type(Error).__name__, message=Error.Message, stage=Error.Stage)
        Record["seconds"] = time.perf_counter() - Started
        return Record
    except Exception as Error:
        Record.update(status=type(Error).__name__, message=str(Error))
        Record["seconds"] = time.perf_counter() - Started
        return Record

    Truths = {"rho": Truth.Theta0.Rho, "f1": Truth.Theta0.F1}
    Truths.update({f"delta[{Label}]": Value for Label, Value in zip(Truth.DeltaLabels, Truth.Theta0.Delta)})
    for Index, Label in enumerate(Report.Labels):
        if Label not in Truths:
            continue
        Record[f"est_{Label}"] = float(Report.Estimates[Index])
        Record[f"se_{Label}"] = float(Report.Se[Index])
        Record[f"true_{Label}"] = float(Truths[Label])
    Record["rho_tilde"] = Result.ThetaTilde.Rho
    Record["converged"] = Result.Converged
    Record["boundary"] = Result.Boundary
    Record["qn"] = Result.QnAtMin
    Record["seconds"] = time.perf_counter() - Started
    return Record


@dataclass(frozen=True, eq=False)
class McSummary:
    Summary: pd.DataFrame
    Replications: pd.DataFrame
    NumReplications: int
    NumFailed: int
    NumNotConverged: int

    def Row(self, Parameter: str) -> Dict[str, float]:
        Match = self.Summary.loc[self.Summary["parameter"] == Parameter]
        if Match.empty:
            raise KeyError(f"No summary row for '{Parameter}'")
        return Match.iloc[0].to_dict()

    def ToDict(self) -> Dict[str, Any]:
        return {
            "replications": self.NumReplications,
            "failed": self.NumFailed,
            "not_converged": self.NumNotConverged,
            "parameters": self.Summary.to_dict(orient="records"),
        }


def Summarize(Replications: pd.DataFrame) -> pd.DataFrame:
    """Bias, RMSE, MC sd, mean se and coverage over the converged replications"""
    Usable = Replications
    if "converged" in Usable.columns:
        Usable = Usable.loc[(Usable["status"] == "ok") & (Usable["converged"] == True)]  # noqa: E712
    Parameters = [Column[4:] for Column in Replications.columns if Column.startswith("est_")]
    Rows: List[Dict[str, Any]] = []
    for Parameter in Parameters:
        Estimates = Usable[f"est_{Parameter}"].to_numpy(dtype=float)
        Errors = Usable[f"se_{Parameter}"].to_numpy(dtype=float)
        Truth = Usable[f"true_{Parameter}"].to_numpy(dtype=float)
        Deviation = Estimates - Truth
        Rows.append({
            "parameter": Parameter,
            "true": float(np.mean(Truth)) if Truth.size else np.nan,
            "mean": float(np.mean(Estimates)) if Estimates.size else np.nan,
            "bias": float(np.mean(Deviation)) if Deviation.size else np.nan,
            "rmse": float(np.sqrt(np.mean(Deviation ** 2))) if Deviation.size else np.nan,
            "mc_sd": float(np.std(Estimates, ddof=1)) if Estimates.size > 1 else np.nan,
            "mean_se": float(np.mean(Errors)) if Errors.size else np.nan,
            "coverage": float(np.mean(np.abs(Deviation) <= NORMAL_975 * Errors)) if Errors.size else np.nan,
            "n": int(Estimates.size),
        })
    Table = pd.DataFrame(Rows)
    if not Table.empty:
        Table["se_ratio"] = Table["mean_se"] / Table["mc_sd"]
    return Table


def MonteCarlo(Dgp: DgpConfig, Replications: int, Estimator: Optional[EstimatorConfig] = None,
               Jobs: int = 1, ClusterSe: bool = False, Progress: bool = True) -> McSummary:
    """R independent replications seeded from Dgp.seed"""
    if Replications < 2:
        raise ParameterBoundsError(f"Monte Carlo needs at least 2 replications, got {Replications}")
    Estimator = Estimator or EstimatorConfig()
    Log.Info(f"Monte Carlo: R = {Replications}, C = {Dgp.num_classrooms}, rho0 = {Dgp.rho0}, "
             f"selection = {Dgp.selection}, jobs = {Jobs}")

    Runner = Parallel(n_jobs=Jobs, return_as="generator")
    Records = list(tqdm(
        Runner(delayed(RunReplication)(Dgp, Estimator, Index, ClusterSe) for Index in range(Replications)),
        total=Replications, desc="Replications", disable=not Progress))

    Table = pd.DataFrame(Records).sort_values("replication").reset_index(drop=True)
    Failed = int((Table["status"] != "ok").sum())
    NotConverged = int(((Table["status"] == "ok") & (Table.get("converged", True) == False)).sum())  # noqa: E712
    if Failed:
        Log.Warning(f"{Failed} of {Replications} replications failed: "
                    f"{Table.loc[Table['status'] != 'ok', 'status'].value_counts().to_dict()}")
    Summary = Summarize(Table)
    return McSummary(Summary, Table, Replications, Failed, NotConverged)
