#!/usr/bin/env python3
"""
File: Inference.py
Path: ClassroomPeers/Source/Estimation/Inference.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Moment Jacobian, optimal weight and sandwich covariance

Purpose: Analytic derivatives of the transformed residual u+ with respect to
theta = (rho, f1, delta), the moment vector g = n^-1 (H'u+, u+'A u+), its
Jacobian G, the weight Xi = n^-1 diag(H'H, 2 tr(A^2)), model-implied and
classroom-clustered V, the sandwich Psi, and the rho -> lambda conversion.
All operators are applied blockwise; nothing here forms an n x n matrix.
"""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from ..Core.Errors import CollinearityError, IdentificationError, ParameterBoundsError
from ..Core.Logger import GetLogger
from ..Core.Model import (
    DecorrelationDerivative,
    DecorrelationOperator,
    DesignMatrix,
    ParamTheta,
    QuasiDifference,
    RANK_TOLERANCE,
    RowGamma,
    VarGamma,
)

if TYPE_CHECKING:
    from .EfficientGMM import GmmResult, MomentSpec

Log = GetLogger("Inference")

INFORMATION_CONDITION_LIMIT = 1e12
NORMAL_975 = 1.959963984540054


# ===== MOMENTS AND DERIVATIVES =====

def ResidualAndDerivatives(Design: DesignMatrix, Theta: ParamTheta, Gamma: VarGamma,
                           Transform: str = "omega_obs") -> Tuple[np.ndarray, np.ndarray]:
    """u+ and the n x (2 + p_x) matrix of its partial derivatives"""
    Residual = QuasiDifference(Design, Theta)
    Operator = DecorrelationOperator(Design, Theta.Rho, Transform)
    Derivative = DecorrelationDerivative(Design, Theta.Rho, Transform)
    Scale = 1.0 / RowGamma(Design, Gamma)

    U = Operator.Apply(Residual) * Scale
    DU = np.empty((Design.NumRows, Theta.Size))
    DU[:, 0] = Derivative.Apply(Residual) * Scale
    DU[:, 1] = -Operator.Apply(Design.Y2) * Scale
    if Design.NumCovariates:
        DU[:, 2:] = -Operator.Apply(Design.X) * Scale[:, None]
    return U, DU


def MomentVector(Design: DesignMatrix, Spec: "MomentSpec", Theta: ParamTheta,
                 Gamma: VarGamma, U: Optional[np.ndarray] = None) -> np.ndarray:
    if U is None:
        U = ResidualAndDerivatives(Design, Theta, Gamma, Spec.Transform)[0]
    Linear = Spec.H.T @ U
    Quadratic = Spec.A.QuadForm(U, U)
    return np.concatenate([Linear, [Quadratic]]) / Design.NumRows


def GradientG(Design: DesignMatrix, Spec: "MomentSpec", Theta: ParamTheta, Gamma: VarGamma,
              Derivatives: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> np.ndarray:
    """G = n^-1 [H' du+/dtheta'; 2 u+' A du+/dtheta']"""
    U, DU = Derivatives if Derivatives is not None else ResidualAndDerivatives(
        Design, Theta, Gamma, Spec.Transform)
    Linear = Spec.H.T @ DU
    Quadratic = 2.0 * (Spec.A.Apply(U) @ DU)
    return np.vstack([Linear, Quadratic[None, :]]) / Design.NumRows


def WeightXi(Spec: "MomentSpec") -> np.ndarray:
    """Xi = n^-1 diag(H'H, 2 tr(A^2))"""
    N = Spec.H.shape[0]
    HtH = Spec.H.T @ Spec.H
    Eigen = np.linalg.eigvalsh(HtH)
    if Eigen[-1] <= 0 or Eigen[0] / Eigen[-1] < RANK_TOLERANCE:
        raise CollinearityError("Instrument matrix H is rank deficient",
                                Details={"columns": list(Spec.HLabels)})
    if Spec.TraceA2 <= 0:
        raise IdentificationError("tr(A^2) is zero; the quadratic moment carries no information")
    Q = HtH.shape[0]
    Xi = np.zeros((Q + 1, Q + 1))
    Xi[:Q, :Q] = HtH
    Xi[Q, Q] = 2.0 * Spec.TraceA2
    return Xi / N


# ===== COVARIANCE =====

def ClusteredV(Design: DesignMatrix, Spec: "MomentSpec", UPlusHat: np.ndarray) -> np.ndarray:
    """Classroom sums of moment contributions; linear/quadratic cross block set to zero"""
    Layout = Design.Layout
    Linear = np.asarray(Layout.Indicator.T @ (Spec.H * UPlusHat[:, None]))
    Quadratic = Spec.A.BlockQuadForms(UPlusHat, UPlusHat)
    Q = Spec.H.shape[1]
    V = np.zeros((Q + 1, Q + 1))
    V[:Q, :Q] = Linear.T @ Linear
    V[Q, Q] = Quadratic @ Quadratic
    return V / Design.NumRows


def ModelImpliedV(Design: DesignMatrix, Spec: "MomentSpec", GammaUsed: VarGamma,
                  GammaTrue: VarGamma) -> np.ndarray:
    """Variance of sqrt(n) g when u+ is built with GammaUsed but the errors have scale GammaTrue

    Equals WeightXi when the two coincide.
    """
    Ratio = (GammaTrue.Gamma / GammaUsed.Gamma) ** 2
    RowRatio = Ratio[Design.RowTypes]
    ClassRatio = Ratio[Design.TypeIndex]
    Q = Spec.H.shape[1]
    V = np.zeros((Q + 1, Q + 1))
    V[:Q, :Q] = Spec.H.T @ (Spec.H * RowRatio[:, None])
    V[Q, Q] = 2.0 * float(np.sum(ClassRatio ** 2 * Spec.A.Compose(Spec.A).BlockTraces()))
    return V / Design.NumRows


def SandwichPsi(G: np.ndarray, Xi: np.ndarray, V: Optional[np.ndarray] = None) -> np.ndarray:
    """(G'Xi^-1 G)^-1 G'Xi^-1 V Xi^-1 G (G'Xi^-1 G)^-1, or (G'Xi^-1 G)^-1 when V is None"""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    Xi = np.atleast_2d(np.asarray(Xi, dtype=float))
    XiInvG = linalg.solve(Xi, G, assume_a="pos")
    Information = G.T @ XiInvG
    Condition = np.linalg.cond(Information)
    if not np.isfinite(Condition) or Condition > INFORMATION_CONDITION_LIMIT:
        raise IdentificationError(f"Information matrix G'Xi^-1 G is not invertible (condition {Condition:.3g})")
    Bread = linalg.inv(Information)
    if V is None:
        Psi = Bread
    else:
        V = np.atleast_2d(np.asarray(V, dtype=float))
        Psi = Bread @ (XiInvG.T @ V @ XiInvG) @ Bread
    return 0.5 * (Psi + Psi.T)


# ===== LAMBDA =====

def LambdaOfRho(Rho: float, SeRho: float = float("nan")) -> Tuple[float, float]:
    """lambda = rho / (1 + rho) with delta-method se_rho / (1 + rho)^2"""
    if Rho <= -1.0:
        raise ParameterBoundsError(f"lambda is undefined for rho <= -1, got {Rho}")
    return Rho / (1.0 + Rho), SeRho / (1.0 + Rho) ** 2


def RhoOfLambda(Lambda: float) -> float:
    if Lambda >= 1.0:
        raise ParameterBoundsError(f"rho is undefined for lambda >= 1, got {Lambda}")
    return Lambda / (1.0 - Lambda)


# ===== REPORT =====

@dataclass(frozen=True, eq=False)
class InferenceReport:
    Labels: List[str]
    Estimates: np.ndarray
    Se: np.ndarray
    Vcov: np.ndarray
    GHat: np.ndarray
    XiHat: np.ndarray
    VHat: np.ndarray
    Lambda: float
    SeLambda: float
    PseudoR2: Dict[str, float] = field(default_factory=dict)
    RankCorrs: Dict[str, float] = field(default_factory=dict)
    CovarianceType: str = "efficient"

    def ConfidenceInterval(self, Index: int = 0) -> Tuple[float, float]:
        Half = NORMAL_975 * self.Se[Index]
        return self.Estimates[Index] - Half, self.Estimates[Index] + Half

    def AsTable(self) -> List[Dict[str, float]]:
        Rows = []
        for Index, Label in enumerate(self.Labels):
            Lower, Upper = self.ConfidenceInterval(Index)
            Rows.append({"parameter": Label, "estimate": float(self.Estimates[Index]),
                         "se": float(self.Se[Index]), "ci_lower": float(Lower), "ci_upper": float(Upper)})
        return Rows


def ComputeInference(Result: "GmmResult", ClusterSe: bool = False) -> InferenceReport:
    """Standard errors of theta_hat: se = sqrt(diag(Psi) / n)"""
    from .Diagnostics import PseudoR2, RankCorrelations

    Design, Spec = Result.Design, Result.Spec
    Theta, Gamma = Result.ThetaHat, Result.GammaUsed
    Derivatives = ResidualAndDerivatives(Design, Theta, Gamma, Spec.Transform)
    G = GradientG(Design, Spec, Theta, Gamma, Derivatives)
    Xi = WeightXi(Spec)

    if ClusterSe:
        V = ClusteredV(Design, Spec, Derivatives[0])
        Psi = SandwichPsi(G, Xi, V)
        CovarianceType = "clustered"
    elif np.allclose(Gamma.Gamma, Result.GammaHat.Gamma, rtol=1e-12, atol=0.0):
        V = Xi
        Psi = SandwichPsi(G, Xi)
        CovarianceType = "efficient"
    else:
        V = ModelImpliedV(Design, Spec, Gamma, Result.GammaHat)
        Psi = SandwichPsi(G, Xi, V)
        CovarianceType = "sandwich"

    Se = np.sqrt(np.clip(np.diag(Psi), 0.0, None) / Design.NumRows)
    Lambda, SeLambda = LambdaOfRho(Theta.Rho, Se[0])
    Labels = ["rho", "f1"] + [f"delta[{Label}]" for Label in Design.Labels]
    Log.Info(f"Inference ({CovarianceType}): se(rho) = {Se[0]:.4g}, se(f1) = {Se[1]:.4g}")
    return InferenceReport(
        Labels=Labels,
        Estimates=Theta.ToVector(),
        Se=Se,
        Vcov=Psi,
        GHat=G,
        XiHat=Xi,
        VHat=V,
        Lambda=Lambda,
        SeLambda=SeLambda,
        PseudoR2=PseudoR2(Design, Theta, Spec.Transform),
        RankCorrs=RankCorrelations(Design),
        CovarianceType=CovarianceType,
    )
