#!/usr/bin/env python3
"""
File: FirstStep.py
Path: ClassroomPeers/Source/Estimation/FirstStep.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: First-step estimators of the two-step GMM procedure

Purpose: Just-identified 2SLS for (f1, delta) with y2 instrumented by z,
the quadratic-moment grid search for rho, and the class-type variance
estimator gamma_hat used to weight the efficient GMM step.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from ..Core.BlockMatrix import BuildOperator
from ..Core.Errors import (
    CollinearityError,
    DegenerateVarianceError,
    InsufficientTypeCountError,
    NumericError,
    WeakInstrumentError,
)
from ..Core.Logger import GetLogger
from ..Core.Model import DecorrelationOperator, DesignMatrix, ParamTheta, RANK_TOLERANCE, VarGamma

Log = GetLogger("FirstStep")


class Projection:
    """Residual maker Q_X = I - X(X'X)^-1 X' via an economic QR factorization"""

    def __init__(self, X: np.ndarray):
        self.NumColumns = X.shape[1]
        self.Basis = linalg.qr(X, mode="economic")[0] if self.NumColumns else None

    def Residual(self, V: np.ndarray) -> np.ndarray:
        if self.Basis is None:
            return np.array(V, dtype=float, copy=True)
        return V - self.Basis @ (self.Basis.T @ V)


@dataclass(frozen=True, eq=False)
class FirstStepResult:
    F1: float
    Delta: np.ndarray
    Strength: float
    Threshold: float
    InstrumentLabel: str = "const"


def _Rms(Values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(Values))))


def FirstStepFDelta(Design: DesignMatrix, Z: np.ndarray, WeakInstrumentTol: float = 1e-6,
                    InstrumentLabel: str = "const") -> FirstStepResult:
    """f1~ = z'Q_X y1 / z'Q_X y2 and delta~ = (X'X)^-1 X'(y1 - f1~ y2)

    With several excluded instruments the 2SLS formula uses the projection of
    Q_X y2 on Q_X Z in place of Q_X z.
    """
    Z = np.asarray(Z, dtype=float).reshape(Design.NumRows, -1)
    N = Design.NumRows
    Projector = Projection(Design.X)

    QZ = Projector.Residual(Z)
    Retained = np.sum(QZ ** 2, axis=0) / np.maximum(np.sum(Z ** 2, axis=0), 1e-300)
    if np.any(Retained < RANK_TOLERANCE):
        raise CollinearityError(f"Instrument '{InstrumentLabel}' lies in the column space of X",
                                Details={"retained_share": Retained.tolist()})

    QY1 = Projector.Residual(Design.Y1)
    QY2 = Projector.Residual(Design.Y2)
    if Z.shape[1] == 1:
        Direction = QZ[:, 0]
    else:
        Coefficients = linalg.lstsq(QZ, QY2)[0]
        Direction = QZ @ Coefficients

    Denominator = float(Direction @ QY2)
    Strength = abs(Denominator) / N
    Threshold = WeakInstrumentTol * _Rms(Design.Y2) * _Rms(Direction)
    if not Strength > Threshold:
        raise WeakInstrumentError(
            f"Weak instrument: |z'Q_X y2|/n = {Strength:.3g} below {Threshold:.3g}",
            Details={"strength": Strength, "threshold": Threshold})

    F1 = float(Direction @ QY1) / Denominator
    if Design.NumCovariates:
        Delta = linalg.lstsq(Design.X, Design.Y1 - F1 * Design.Y2)[0]
    else:
        Delta = np.zeros(0)
    Log.Info(f"First step: f1~ = {F1:.6g}, instrument strength {Strength:.3g}")
    return FirstStepResult(F1, Delta, Strength, Threshold, InstrumentLabel)


@dataclass(frozen=True, eq=False)
class RhoSearchResult:
    Rho: float
    Objective: float
    Grid: np.ndarray
    Values: np.ndarray


def FirstStepRho(Design: DesignMatrix, F1: float, Delta: np.ndarray, AChoice: str = "M",
                 KRho: float = 0.99, GridPoints: int = 512, Transform: str = "omega_obs") -> RhoSearchResult:
    """Scan [-K_rho, K_rho] then refine the best grid cell with bounded Brent to 1e-10"""
    Residual = Design.Y1 - F1 * Design.Y2 - Design.X @ np.asarray(Delta, dtype=float)
    A = BuildOperator("A_choice", Design.Sizes, AChoice=AChoice, ObservedSizes=Design.ObservedSizes)
    N = Design.NumRows

    def Objective(Rho: float) -> float:
        Eps = DecorrelationOperator(Design, Rho, Transform).Apply(Residual)
        return (A.QuadForm(Eps, Eps) / N) ** 2

    Grid = np.linspace(-KRho, KRho, GridPoints)
    Values = np.array([Objective(Rho) for Rho in Grid])
    if not np.all(np.isfinite(Values)):
        raise NumericError("Quadratic-moment objective is not finite on the rho grid")

    Best = int(np.argmin(Values))
    Lower = Grid[max(Best - 1, 0)]
    Upper = Grid[min(Best + 1, GridPoints - 1)]
    Refined = optimize.minimize_scalar(Objective, bounds=(Lower, Upper), method="bounded",
                                       options={"xatol": 1e-10, "maxiter": 500})
    Rho, Value = float(Grid[Best]), float(Values[Best])
    if Refined.success and np.isfinite(Refined.fun) and Refined.fun <= Value:
        Rho, Value = float(Refined.x), float(Refined.fun)
    if abs(Rho) >= KRho - 1e-8:
        Log.Warning(f"First-step rho on the boundary of [-{KRho}, {KRho}]")
    Log.Info(f"First step: rho~ = {Rho:.6g} (objective {Value:.3g})")
    return RhoSearchResult(Rho, Value, Grid, Values)


def GammaHat(Design: DesignMatrix, EpsTilde: np.ndarray, NumCovariates: Optional[int] = None,
             KGamma: float = 1e6) -> VarGamma:
    """gamma_j^2 = sum of squared eps~ over type-j rows / (N_j - p_x - 1)"""
    Px = Design.NumCovariates if NumCovariates is None else NumCovariates
    Types = Design.RowTypes
    J = Design.NumTypes
    Counts = np.bincount(Types, minlength=J)
    SumSquares = np.bincount(Types, weights=np.square(EpsTilde), minlength=J)

    Short = np.flatnonzero(Counts <= Px + 1)
    if Short.size:
        Labels = [Design.TypeLabels[Index] for Index in Short]
        raise InsufficientTypeCountError(
            f"Variance group(s) {Labels} have N_j <= p_x + 1 = {Px + 1}",
            Details={"counts": Counts.tolist(), "p_x": Px})

    Gamma = np.sqrt(SumSquares / (Counts - Px - 1))
    if np.any(~np.isfinite(Gamma)) or np.any(Gamma <= 0):
        raise DegenerateVarianceError(f"Degenerate variance estimate gamma_hat = {Gamma}")
    if np.any(Gamma < 1.0 / KGamma) or np.any(Gamma > KGamma):
        Log.Warning(f"gamma_hat {Gamma} outside [1/K_gamma, K_gamma]")
    Log.Info(f"gamma_hat = {np.array2string(Gamma, precision=4)}")
    return VarGamma(Gamma)


def FirstStepTheta(First: FirstStepResult, Rho: RhoSearchResult) -> ParamTheta:
    return ParamTheta(Rho.Rho, First.F1, First.Delta)
