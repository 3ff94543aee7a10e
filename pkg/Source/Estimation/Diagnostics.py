#!/usr/bin/env python3
"""
File: Diagnostics.py
Path: ClassroomPeers/Source/Estimation/Diagnostics.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Fit statistics and identification diagnostics

Purpose: Pseudo R^2 per variance group, Spearman rank correlations of the raw
and covariate-adjusted scores, standard deviations of Q_X y, 2SLS pseudo
R^2, descriptive statistics, the population quadratic moment in rho, and a
runtime report of the identification conditions. RunDiagnostics drives the
`diagnose` command and stops after the first step.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..Core.BlockMatrix import BuildOperator
from ..Core.Configuration import EstimatorConfig
from ..Core.Errors import IdentificationError, NumericError
from ..Core.Logger import GetLogger
from ..Core.Model import (
    BuildDesign,
    DesignMatrix,
    DecorrelationOperator,
    EpsPlus,
    ParamTheta,
    RANK_TOLERANCE,
    ResolveInstrument,
    Sample,
    VarGamma,
)
from .FirstStep import FirstStepFDelta, FirstStepResult, FirstStepRho, GammaHat, Projection

Log = GetLogger("Diagnostics")

IDENTIFICATION_GRID = 101


# ===== FIT STATISTICS =====

def PseudoR2(Design: DesignMatrix, Theta: ParamTheta, Transform: str = "omega_obs") -> Dict[str, float]:
    """1 - var(eps+(theta)) / var(y1 - f1 y2) within each variance group"""
    Eps = EpsPlus(Design, Theta, Transform)
    Raw = Design.Y1 - Theta.F1 * Design.Y2
    Result = {}
    for Index, Label in enumerate(Design.TypeLabels):
        Rows = Design.RowTypes == Index
        if not Rows.any():
            continue
        Denominator = float(np.var(Raw[Rows]))
        if Denominator <= 0:
            raise NumericError(f"y1 - f1 y2 has zero variance in group '{Label}'")
        Result[str(Label)] = 1.0 - float(np.var(Eps[Rows])) / Denominator
    return Result


def SpearmanCorrelation(First: np.ndarray, Second: np.ndarray) -> float:
    """Spearman rank correlation, ties given average ranks; NaN for constant input"""
    First = np.asarray(First, dtype=float)
    Second = np.asarray(Second, dtype=float)
    if np.ptp(First) == 0 or np.ptp(Second) == 0:
        Log.Warning("Spearman correlation of a constant vector is undefined")
        return float("nan")
    return float(stats.spearmanr(First, Second).statistic)


def RankCorrelations(Design: DesignMatrix) -> Dict[str, float]:
    Projector = Projection(Design.X)
    return {
        "y1_y2": SpearmanCorrelation(Design.Y1, Design.Y2),
        "qx_y1_qx_y2": SpearmanCorrelation(Projector.Residual(Design.Y1), Projector.Residual(Design.Y2)),
    }


def QxStatistics(Design: DesignMatrix, F1: float) -> Dict[str, float]:
    """Standard deviations of the covariate-adjusted scores Q_X y"""
    Projector = Projection(Design.X)
    QY1 = Projector.Residual(Design.Y1)
    QY2 = Projector.Residual(Design.Y2)
    return {
        "sd_qx_y1": float(np.std(QY1, ddof=1)),
        "sd_qx_y2": float(np.std(QY2, ddof=1)),
        "sd_qx_quasi_difference": float(np.std(QY1 - F1 * QY2, ddof=1)),
    }


def TwoStageR2(Design: DesignMatrix, Forward: FirstStepResult, Reversed: FirstStepResult) -> Dict[str, float]:
    """Spearman(y1, f1~ y2 + X delta~) and the same for the reversed fit"""
    Fitted1 = Forward.F1 * Design.Y2 + Design.X @ Forward.Delta
    Fitted2 = Reversed.F1 * Design.Y1 + Design.X @ Reversed.Delta
    return {"y1": SpearmanCorrelation(Design.Y1, Fitted1), "y2": SpearmanCorrelation(Design.Y2, Fitted2)}


def DescriptiveStatistics(Data: Sample) -> pd.DataFrame:
    """Mean, standard deviation and observed count of the scores and covariates"""
    Columns = ["y1", "y2"] + [Column for Column in Data.Students.columns
                              if Column.startswith(("sv_", "sw1_", "sw2_", "cv_", "cw1_", "cw2_", "z_"))]
    Frame = Data.Students[Columns].apply(pd.to_numeric, errors="coerce")
    Table = pd.DataFrame({
        "variable": Columns,
        "mean": Frame.mean().to_numpy(),
        "sd": Frame.std(ddof=1).to_numpy(),
        "observed": Frame.notna().sum().to_numpy(),
    })
    Counts = pd.DataFrame({"variable": ["students", "classrooms"], "mean": [np.nan, np.nan],
                           "sd": [np.nan, np.nan], "observed": [Data.NumStudents, Data.NumClassrooms]})
    return pd.concat([Table, Counts], ignore_index=True)


# ===== IDENTIFICATION =====

def PopulationQuadraticMoment(Sizes: Sequence[int], Rho: float, Rho0: float, AChoice: str = "M",
                              Types: Optional[np.ndarray] = None, Gamma: Optional[VarGamma] = None,
                              Gamma0: Optional[VarGamma] = None) -> float:
    """tr(W(rho) Omega^-1/2 A Omega^-1/2 W(rho) Omega_0) with W(rho) = (I + rho M)^-1 (I + rho0 M)

    Per classroom this is (gamma0_c / gamma_c)^2 o_c (n_c - 1)(m2^2 - m1^2), which is
    strictly decreasing in rho and vanishes only at rho0.
    """
    Sizes = np.asarray(Sizes, dtype=np.int64)
    Mixing = BuildOperator("inv_I_plus_rhoM", Sizes, Rho=Rho).Compose(
        BuildOperator("I_plus_rhoM", Sizes, Rho=Rho0))
    A = BuildOperator("A_choice", Sizes, AChoice=AChoice)
    Ratio = np.ones(Sizes.size)
    if Gamma is not None or Gamma0 is not None:
        ClassTypes = np.zeros(Sizes.size, dtype=np.int64) if Types is None else np.asarray(Types)
        Current = Gamma.Gamma if Gamma is not None else np.ones(1)
        Truth = Gamma0.Gamma if Gamma0 is not None else np.ones(1)
        Ratio = Truth[ClassTypes] ** 2 / Current[ClassTypes] ** 2
    return Mixing.Compose(A).Compose(Mixing).Scale(Ratio).Trace()


def SampleQuadraticMoment(Design: DesignMatrix, F1: float, Delta: np.ndarray, Rho: float,
                          AChoice: str = "M", Transform: str = "omega_obs") -> float:
    """Signed eps(rho)'A eps(rho) / n at the first-step f1 and delta"""
    Residual = Design.Y1 - F1 * Design.Y2 - Design.X @ np.asarray(Delta, dtype=float)
    A = BuildOperator("A_choice", Design.Sizes, AChoice=AChoice, ObservedSizes=Design.ObservedSizes)
    Eps = DecorrelationOperator(Design, Rho, Transform).Apply(Residual)
    return A.QuadForm(Eps, Eps) / Design.NumRows


def _Check(Name: str, Value: float, Threshold: float, Passed: bool) -> Dict[str, Any]:
    return {"check": Name, "value": float(Value), "threshold": float(Threshold), "passed": bool(Passed)}


def IdentificationReport(Design: DesignMatrix, Z: np.ndarray, Config: EstimatorConfig,
                         Rho0: float = 0.0, First: Optional[FirstStepResult] = None,
                         RhoTilde: Optional[float] = None) -> List[Dict[str, Any]]:
    """Sample counterparts of the identification conditions

    rho_population_sign_changes evaluates the population moment with Rho0 as the
    hypothesized truth; with Rho0 = rho~ it is a self-consistency check only.
    rho_sample_root_bracket counts sign changes of the sample moment on the grid
    and requires rho~ to lie in the bracketing cell.
    """
    Checks = [_Check("min_class_size", Design.Sizes.min(), 2, Design.Sizes.min() >= 2)]

    A = BuildOperator("A_choice", Design.Sizes, AChoice=Config.a_choice, ObservedSizes=Design.ObservedSizes)
    Diagonal = float(np.max(np.abs(A.Diagonal())))
    Checks.append(_Check("a_zero_diagonal", Diagonal, 1e-12, Diagonal <= 1e-12))
    MeanA = float(np.sum(A.Q * A.Sizes)) / Design.NumRows
    Checks.append(_Check("a_mean_positive", MeanA, 0.0, MeanA > 0))

    if Design.NumCovariates:
        Eigen = np.linalg.eigvalsh(Design.X.T @ Design.X)
        Ratio = Eigen[0] / Eigen[-1] if Eigen[-1] > 0 else 0.0
    else:
        Ratio = 1.0
    Checks.append(_Check("xtx_eigen_ratio", Ratio, RANK_TOLERANCE, Ratio >= RANK_TOLERANCE))

    if First is None:
        Projector = Projection(Design.X)
        Direction = Projector.Residual(np.asarray(Z, dtype=float).reshape(Design.NumRows, -1))[:, 0]
        Strength = abs(float(Direction @ Projector.Residual(Design.Y2))) / Design.NumRows
        Threshold = Config.weak_instrument_tol * float(np.sqrt(np.mean(Design.Y2 ** 2))) * \
            float(np.sqrt(np.mean(Direction ** 2)))
    else:
        Strength, Threshold = First.Strength, First.Threshold
    Checks.append(_Check("instrument_strength", Strength, Threshold, Strength > Threshold))

    Counts = np.bincount(Design.RowTypes, minlength=Design.NumTypes)
    Needed = Design.NumCovariates + 1
    Checks.append(_Check("min_type_count", Counts.min(), Needed, Counts.min() > Needed))

    Grid = np.linspace(-Config.k_rho, Config.k_rho, IDENTIFICATION_GRID)
    Values = np.array([PopulationQuadraticMoment(Design.Sizes, Rho, Rho0, Config.a_choice) for Rho in Grid])
    Signs = np.sign(Values[np.abs(Values) > 1e-12])
    Changes = int(np.sum(Signs[1:] != Signs[:-1]))
    Checks.append(_Check("rho_population_sign_changes", Changes, 1, Changes == 1))

    if First is None:
        try:
            First = FirstStepFDelta(Design, Z, Config.weak_instrument_tol)
        except IdentificationError:
            First = None
    if First is None:
        Checks.append(_Check("rho_sample_root_bracket", np.nan, 1, False))
    else:
        Moments = np.array([SampleQuadraticMoment(Design, First.F1, First.Delta, Rho, Config.a_choice,
                                                  Config.missing_transform) for Rho in Grid])
        Crossings = np.flatnonzero(np.sign(Moments[1:]) != np.sign(Moments[:-1]))
        Passed = Crossings.size == 1
        if Passed and RhoTilde is not None:
            Lower, Upper = Grid[Crossings[0]], Grid[Crossings[0] + 1]
            Passed = Lower - 1e-8 <= RhoTilde <= Upper + 1e-8
        Checks.append(_Check("rho_sample_root_bracket", Crossings.size, 1, Passed))

    for Check in Checks:
        if not Check["passed"]:
            Log.Warning(f"Identification check '{Check['check']}' failed: {Check['value']:.4g}")
    return Checks


# ===== DIAGNOSE =====

@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    ThetaTilde: ParamTheta
    GammaTilde: Optional[VarGamma]
    ReversedF1: float
    PseudoR2: Dict[str, float]
    RankCorrs: Dict[str, float]
    QxStats: Dict[str, float]
    TwoStageR2: Dict[str, float]
    Descriptives: pd.DataFrame
    Identification: List[Dict[str, Any]]
    Labels: List[str] = field(default_factory=list)


def RunDiagnostics(Data: Sample, Config: Optional[EstimatorConfig] = None) -> DiagnosticsReport:
    """First-step fit and data statistics without the efficient GMM step"""
    Config = Config or EstimatorConfig()
    Design = BuildDesign(Data, Config.missing_policy, Config.fixed_effects)
    Z, Label = ResolveInstrument(Design, Config.instrument)
    Forward = FirstStepFDelta(Design, Z, Config.weak_instrument_tol, Label)
    Reversed = FirstStepFDelta(Design.Swapped(), Z, Config.weak_instrument_tol, Label)
    RhoSearch = FirstStepRho(Design, Forward.F1, Forward.Delta, Config.a_choice, Config.k_rho,
                             Config.grid_points, Config.missing_transform)
    Theta = ParamTheta(RhoSearch.Rho, Forward.F1, Forward.Delta)
    try:
        Gamma = GammaHat(Design, EpsPlus(Design, Theta, Config.missing_transform), Design.NumCovariates,
                         Config.k_gamma)
    except IdentificationError as Error:
        Log.Warning(f"gamma~ unavailable: {Error.Message}")
        Gamma = None

    return DiagnosticsReport(
        ThetaTilde=Theta,
        GammaTilde=Gamma,
        ReversedF1=Reversed.F1,
        PseudoR2=PseudoR2(Design, Theta, Config.missing_transform),
        RankCorrs=RankCorrelations(Design),
        QxStats=QxStatistics(Design, Forward.F1),
        TwoStageR2=TwoStageR2(Design, Forward, Reversed),
        Descriptives=DescriptiveStatistics(Data),
        Identification=IdentificationReport(Design, Z, Config, RhoSearch.Rho, Forward, RhoSearch.Rho),
        Labels=["rho", "f1"] + [f"delta[{Name}]" for Name in Design.Labels],
    )
