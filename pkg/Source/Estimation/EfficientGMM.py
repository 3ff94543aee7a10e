#!/usr/bin/env python3
"""
File: EfficientGMM.py
Path: ClassroomPeers/Source/Estimation/EfficientGMM.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Efficient GMM on linear and quadratic moments, and the two-step pipeline

Purpose: Minimizes
    Q_n(theta, gamma) = n^-1 u+'H(H'H)^-1 H'u+ + n^-1 (u+'A u+)^2 / (2 tr(A^2))
over the compact parameter box with L-BFGS-B and the analytic gradient,
polishes with Gauss-Newton steps on the moment vector, and falls back to
Nelder-Mead when the gradient path fails. EstimatePipeline chains design ->
first step (f1, delta) -> first step rho -> gamma_hat -> efficient GMM and
labels any failure with the stage it happened in.
"""

from contextlib import contextmanager
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from ..Core.BlockMatrix import BlockDiag, BuildOperator
from ..Core.Configuration import EstimatorConfig
from ..Core.Errors import IdentificationError, NumericError, PeerEffectsError
from ..Core.Logger import GetLogger
from ..Core.Model import (
    BuildDesign,
    DecorrelationOperator,
    DesignMatrix,
    EpsPlus,
    ParamTheta,
    ResolveInstrument,
    RowGamma,
    Sample,
    VarGamma,
)
from .FirstStep import FirstStepFDelta, FirstStepResult, FirstStepRho, GammaHat, RhoSearchResult
from .Inference import GradientG, MomentVector, ResidualAndDerivatives, WeightXi

Log = GetLogger("EfficientGMM")

BOUNDARY_TOLERANCE = 1e-8
STEP_TOLERANCE = 1e-10


# ===== MOMENT SPECIFICATION =====

@dataclass(frozen=True, eq=False)
class MomentSpec:
    """H = [X, z] and the zero-diagonal quadratic-moment operator A on the observed rows"""

    H: np.ndarray
    A: BlockDiag
    AChoice: str
    Transform: str
    HLabels: Tuple[str, ...]

    @classmethod
    def Build(cls, Design: DesignMatrix, Z: np.ndarray, AChoice: str = "M",
              Transform: str = "omega_obs", ZLabels: Sequence[str] = ("const",)) -> "MomentSpec":
        Z = np.asarray(Z, dtype=float).reshape(Design.NumRows, -1)
        H = np.hstack([Design.X, Z])
        A = BuildOperator("A_choice", Design.Sizes, AChoice=AChoice, ObservedSizes=Design.ObservedSizes)
        Spec = cls(H, A, AChoice, Transform, tuple(Design.Labels) + tuple(ZLabels))
        Spec.Validate()
        return Spec

    @cached_property
    def TraceA2(self) -> float:
        return self.A.Compose(self.A).Trace()

    @property
    def NumMoments(self) -> int:
        return self.H.shape[1] + 1

    def Validate(self) -> None:
        if np.max(np.abs(self.A.Diagonal())) > 1e-12:
            raise IdentificationError("Quadratic-moment operator must have a zero diagonal")
        # 1'A_c 1 = q_c m_c
        if float(np.sum(self.A.Q * self.A.Sizes)) <= 0:
            raise IdentificationError(f"1'A1/n is not positive for A = {self.AChoice}; "
                                      "the quadratic moment does not identify rho")


# ===== RESULT =====

@dataclass(frozen=True, eq=False)
class GmmResult:
    ThetaHat: ParamTheta
    GammaHat: VarGamma
    QnAtMin: float
    Iterations: int
    Converged: bool
    MomentNorm: float
    ScaledGradient: float = float("nan")
    Boundary: bool = False
    Method: str = "L-BFGS-B"
    GammaUsed: Optional[VarGamma] = None
    ThetaTilde: Optional[ParamTheta] = None
    FirstStep: Optional[FirstStepResult] = None
    RhoSearch: Optional[RhoSearchResult] = None
    Design: Optional[DesignMatrix] = None
    Spec: Optional[MomentSpec] = None

    @property
    def JStatistic(self) -> float:
        """n * Q_n at the minimum"""
        if self.Design is None:
            return float("nan")
        return self.Design.NumRows * self.QnAtMin


# ===== OBJECTIVE =====

class GmmObjective:
    """Q_n(theta) = g'Xi^-1 g with its gradient 2 G'Xi^-1 g for fixed gamma"""

    def __init__(self, Design: DesignMatrix, Spec: MomentSpec, Gamma: VarGamma):
        self.Design = Design
        self.Spec = Spec
        self.Gamma = Gamma
        Xi = WeightXi(Spec)
        self.Weight = linalg.inv(Xi)
        self.Weight = 0.5 * (self.Weight + self.Weight.T)
        self.Evaluations = 0

    def Parts(self, Vector: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        """(Q, g, G) at theta"""
        Theta = ParamTheta.FromVector(Vector)
        Derivatives = ResidualAndDerivatives(self.Design, Theta, self.Gamma, self.Spec.Transform)
        Moments = MomentVector(self.Design, self.Spec, Theta, self.Gamma, U=Derivatives[0])
        Jacobian = GradientG(self.Design, self.Spec, Theta, self.Gamma, Derivatives)
        self.Evaluations += 1
        return float(Moments @ self.Weight @ Moments), Moments, Jacobian

    def Value(self, Vector: np.ndarray) -> float:
        Theta = ParamTheta.FromVector(Vector)
        Moments = MomentVector(self.Design, self.Spec, Theta, self.Gamma)
        self.Evaluations += 1
        return float(Moments @ self.Weight @ Moments)

    def ValueAndGradient(self, Vector: np.ndarray) -> Tuple[float, np.ndarray]:
        Value, Moments, Jacobian = self.Parts(Vector)
        if not np.isfinite(Value):
            raise NumericError(f"Q_n is not finite at theta = {Vector[:2]}")
        return Value, 2.0 * Jacobian.T @ self.Weight @ Moments


def CriterionQn(Design: DesignMatrix, Spec: MomentSpec, Theta: ParamTheta, Gamma: VarGamma) -> float:
    return GmmObjective(Design, Spec, Gamma).Value(Theta.ToVector())


def ScaledGradient(Gradient: np.ndarray, Vector: np.ndarray, Value: float) -> float:
    """max_i |dQ/dtheta_i| * max(|theta_i|, 1) / max(|Q|, 1)"""
    return float(np.max(np.abs(Gradient) * np.maximum(np.abs(Vector), 1.0)) / max(abs(Value), 1.0))


def ParameterBounds(NumCovariates: int, Config: EstimatorConfig) -> List[Tuple[float, float]]:
    return [(-Config.k_rho, Config.k_rho), (-Config.k_f, Config.k_f)] + \
        [(-Config.k_x, Config.k_x)] * NumCovariates


def _Clip(Vector: np.ndarray, Bounds: Sequence[Tuple[float, float]]) -> np.ndarray:
    Lower = np.array([Bound[0] for Bound in Bounds])
    Upper = np.array([Bound[1] for Bound in Bounds])
    return np.clip(Vector, Lower, Upper)


def _GaussNewton(Objective: GmmObjective, Start: np.ndarray, Bounds, MaxIter: int,
                 Tol: float) -> Tuple[np.ndarray, float, float, int, bool]:
    """Damped Gauss-Newton on the moment vector; returns (theta, Q, scaled gradient, iterations, converged)"""
    Vector = _Clip(np.asarray(Start, dtype=float), Bounds)
    Value, Moments, Jacobian = Objective.Parts(Vector)
    Gradient = 2.0 * Jacobian.T @ Objective.Weight @ Moments
    Scaled = ScaledGradient(Gradient, Vector, Value)
    for Iteration in range(1, MaxIter + 1):
        if Scaled <= Tol:
            return Vector, Value, Scaled, Iteration - 1, True
        Information = Jacobian.T @ Objective.Weight @ Jacobian
        Step = -linalg.lstsq(Information, Jacobian.T @ Objective.Weight @ Moments)[0]
        Length = 1.0
        Accepted = False
        while Length > 1e-12:
            Candidate = _Clip(Vector + Length * Step, Bounds)
            CandidateValue = Objective.Value(Candidate)
            if np.isfinite(CandidateValue) and CandidateValue < Value:
                Accepted = True
                break
            Length *= 0.5
        if not Accepted:
            # no descent left: stationary when the full Gauss-Newton step is negligible
            Stalled = np.max(np.abs(Step) / np.maximum(np.abs(Vector), 1.0)) <= STEP_TOLERANCE
            return Vector, Value, Scaled, Iteration, bool(Stalled)
        Vector = Candidate
        Value, Moments, Jacobian = Objective.Parts(Vector)
        Gradient = 2.0 * Jacobian.T @ Objective.Weight @ Moments
        Scaled = ScaledGradient(Gradient, Vector, Value)
    return Vector, Value, Scaled, MaxIter, Scaled <= Tol


def LinearMomentEstimate(Design: DesignMatrix, Spec: MomentSpec, Rho: float,
                         Gamma: Optional[VarGamma] = None) -> ParamTheta:
    """Exact minimizer of the linear part of Q_n in (f1, delta) at fixed rho"""
    Gamma = Gamma or VarGamma.Ones(Design.NumTypes)
    Operator = DecorrelationOperator(Design, Rho, Spec.Transform)
    Scale = 1.0 / RowGamma(Design, Gamma)
    Target = Operator.Apply(Design.Y1) * Scale
    Regressors = np.column_stack([Operator.Apply(Design.Y2), Operator.Apply(Design.X)]) * Scale[:, None]
    Basis = linalg.qr(Spec.H, mode="economic")[0]
    Coefficients = linalg.lstsq(Basis.T @ Regressors, Basis.T @ Target)[0]
    return ParamTheta(Rho, float(Coefficients[0]), Coefficients[1:])


def EfficientGmm(Design: DesignMatrix, Spec: MomentSpec, Gamma: VarGamma, Start: ParamTheta,
                 Config: Optional[EstimatorConfig] = None, FixedRho: Optional[float] = None,
                 IncludeQuadratic: bool = True) -> GmmResult:
    """Minimize Q_n(theta, gamma) over the parameter box starting from Start

    With FixedRho and IncludeQuadratic=False the linear-moment closed form is
    returned (the just-identified case reproduces 2SLS).
    """
    Config = Config or EstimatorConfig()
    if not IncludeQuadratic:
        Rho = Start.Rho if FixedRho is None else FixedRho
        Theta = LinearMomentEstimate(Design, Spec, Rho, Gamma)
        Moments = MomentVector(Design, Spec, Theta, Gamma)[:-1]
        return GmmResult(Theta, Gamma, float("nan"), 0, True, float(np.linalg.norm(Moments)),
                         Method="linear-closed-form", GammaUsed=Gamma, Design=Design, Spec=Spec)

    Objective = GmmObjective(Design, Spec, Gamma)
    Bounds = ParameterBounds(Design.NumCovariates, Config)
    StartVector = _Clip(Start.ToVector(), Bounds)
    # keep rho strictly inside the box so the operator stays invertible
    StartVector[0] = np.clip(StartVector[0], -Config.k_rho + 1e-6, Config.k_rho - 1e-6)
    StartValue = Objective.Value(StartVector)
    if not np.isfinite(StartValue):
        raise NumericError("Q_n is not finite at the starting value")
    Log.Info(f"Efficient GMM: start Q_n = {StartValue:.4g}, {Objective.Spec.NumMoments} moments, "
             f"{StartVector.size} parameters")

    Method = "L-BFGS-B"
    Iterations = 0
    try:
        Fit = optimize.minimize(Objective.ValueAndGradient, StartVector, jac=True, method="L-BFGS-B",
                                bounds=Bounds, options={"maxiter": Config.max_iter, "ftol": 1e-15,
                                                        "gtol": 1e-12})
        if not np.all(np.isfinite(Fit.x)) or not np.isfinite(Fit.fun):
            raise NumericError("L-BFGS-B produced a non-finite iterate")
        Candidate, Iterations = Fit.x, int(Fit.nit)
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as Error:
        Log.Warning(f"Gradient path failed ({Error}); falling back to Nelder-Mead")
        Method = "Nelder-Mead"
        Fit = optimize.minimize(Objective.Value, StartVector, method="Nelder-Mead", bounds=Bounds,
                                options={"maxiter": Config.max_iter * StartVector.size,
                                         "xatol": 1e-10, "fatol": 1e-16})
        Candidate, Iterations = Fit.x, int(Fit.nit)

    if Objective.Value(Candidate) > StartValue:
        Candidate = StartVector
    Vector, Value, Scaled, Polish, Converged = _GaussNewton(Objective, Candidate, Bounds,
                                                            Config.max_iter, Config.tol)
    if not Converged:
        Retry = _GaussNewton(Objective, StartVector, Bounds, Config.max_iter, Config.tol)
        if Retry[4] or Retry[1] < Value:
            Vector, Value, Scaled, Polish, Converged = Retry
    Method = f"{Method}+Gauss-Newton"

    Theta = ParamTheta.FromVector(Vector)
    Moments = MomentVector(Design, Spec, Theta, Gamma)
    Boundary = abs(Theta.Rho) >= Config.k_rho - BOUNDARY_TOLERANCE
    if Boundary:
        Log.Warning(f"rho_hat = {Theta.Rho:.6g} on the boundary of the parameter box")
    if Converged:
        Log.Info(f"Efficient GMM converged: rho = {Theta.Rho:.6g}, f1 = {Theta.F1:.6g}, Q_n = {Value:.3g}")
    else:
        Log.Warning(f"Efficient GMM did not converge (scaled gradient {Scaled:.3g} > {Config.tol})")
    return GmmResult(
        ThetaHat=Theta,
        GammaHat=Gamma,
        QnAtMin=Value,
        Iterations=Iterations + Polish,
        Converged=Converged,
        MomentNorm=float(np.linalg.norm(Moments)),
        ScaledGradient=Scaled,
        Boundary=Boundary,
        Method=Method,
        GammaUsed=Gamma,
        Design=Design,
        Spec=Spec,
    )


# ===== PIPELINE =====

@contextmanager
def PipelineStage(Name: str, Partial: Optional[Dict[str, Any]] = None) -> Iterator[None]:
    """Attach the stage label, and any partial results, to an error raised inside the block"""
    try:
        yield
    except PeerEffectsError as Error:
        if Error.Stage is None:
            Error.Stage = Name
        if Partial:
            Error.Details.setdefault("partial", dict(Partial))
        Log.Error(f"Stage '{Name}' failed: {Error.Message}")
        raise
    except (np.linalg.LinAlgError, FloatingPointError) as Error:
        Log.Error(f"Stage '{Name}' failed numerically: {Error}")
        raise NumericError(f"{Name}: {Error}", Stage=Name) from Error


def EstimateFromDesign(Design: DesignMatrix, Config: Optional[EstimatorConfig] = None) -> GmmResult:
    Config = Config or EstimatorConfig()
    Partial: Dict[str, Any] = {}
    with PipelineStage("first_step_f_delta"):
        Z, ZLabel = ResolveInstrument(Design, Config.instrument)
        First = FirstStepFDelta(Design, Z, Config.weak_instrument_tol, ZLabel)
        Partial.update(f1_tilde=First.F1, delta_tilde=dict(zip(Design.Labels, First.Delta.tolist())))

    with PipelineStage("first_step_rho", Partial):
        RhoSearch = FirstStepRho(Design, First.F1, First.Delta, Config.a_choice, Config.k_rho,
                                 Config.grid_points, Config.missing_transform)
        ThetaTilde = ParamTheta(RhoSearch.Rho, First.F1, First.Delta)
        ThetaTilde.Validate(Config.k_rho, Config.k_f, Config.k_x)
        Partial.update(rho_tilde=RhoSearch.Rho)

    with PipelineStage("gamma_hat", Partial):
        EpsTilde = EpsPlus(Design, ThetaTilde, Config.missing_transform)
        Gamma = GammaHat(Design, EpsTilde, Design.NumCovariates, Config.k_gamma)

    with PipelineStage("efficient_gmm", Partial):
        Spec = MomentSpec.Build(Design, Z, Config.a_choice, Config.missing_transform, (ZLabel,))
        GammaUsed = Gamma if Config.efficient else VarGamma.Ones(Design.NumTypes)
        Result = EfficientGmm(Design, Spec, GammaUsed, ThetaTilde, Config)

    return replace(Result, GammaHat=Gamma, GammaUsed=GammaUsed, ThetaTilde=ThetaTilde,
                   FirstStep=First, RhoSearch=RhoSearch)


def EstimatePipeline(Data: Sample, Config: Optional[EstimatorConfig] = None) -> GmmResult:
    """Two-step feasible efficient GMM; records theta~ and theta_hat(gamma_hat)"""
    Config = Config or EstimatorConfig()
    with PipelineStage("design"):
        Design = BuildDesign(Data, Config.missing_policy, Config.fixed_effects)
    Log.Info(f"Estimating on n = {Design.NumRows}, C = {Design.NumClassrooms}, J = {Design.NumTypes}")
    return EstimateFromDesign(Design, Config)


def EstimateReversed(Data: Sample, Config: Optional[EstimatorConfig] = None) -> GmmResult:
    """Same pipeline with y1 and y2 exchanged"""
    return EstimatePipeline(Data.Swapped(), Config)
