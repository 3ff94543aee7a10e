#!/usr/bin/env python3
"""
File: DataGenerator.py
Path: ClassroomPeers/Source/Simulation/DataGenerator.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Synthetic classroom samples from the peer-effects data generating process

Purpose: Draws schools, classrooms and students, assigns students to
classrooms by the configured selection rule, and emits paired scores

    y_t = mu* f_t + v^c beta^c_t + (I + rho0 M)(v^p beta^p_t + u_t),
    mu*_c = alpha_c 1 + (I + rho0 M_c) kappa_c,

with Var(u_it) = sigma_t^2 scale_j^2 for a student in a type-j classroom.
The returned TruthRecord is kept apart from the Sample so estimators never
see it.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..Core.BlockMatrix import BuildOperator
from ..Core.Configuration import DgpConfig
from ..Core.Errors import ParameterBoundsError
from ..Core.Logger import GetLogger
from ..Core.Model import ParamTheta, Sample, VarGamma

Log = GetLogger("DataGenerator")

SeedLike = Union[int, np.random.SeedSequence, None]


@dataclass(frozen=True, eq=False)
class TruthRecord:
    """True parameters of one simulated sample, aligned with the estimator's delta layout"""

    Theta0: ParamTheta
    Gamma0: VarGamma
    DeltaLabels: Tuple[str, ...]
    Scale: float
    Offset: float
    Sigma1: float
    Sigma2: float
    Kappa: np.ndarray

    def __repr__(self) -> str:
        return f"TruthRecord(rho0={self.Theta0.Rho:.4g}, f10={self.Theta0.F1:.4g}, sealed)"


def ReplicationSeed(MasterSeed: int, Replication: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for replication r"""
    return np.random.SeedSequence(MasterSeed, spawn_key=(int(Replication),))


def _TypeLabels(NumTypes: int) -> List[str]:
    Width = len(str(NumTypes))
    return [f"type{Index + 1:0{Width}d}" for Index in range(NumTypes)]


def _AssignTypes(Config: DgpConfig, Sizes: np.ndarray, Rng: np.random.Generator) -> np.ndarray:
    Shares = np.asarray(Config.TypeShares())
    if Config.type_rule == "random":
        return Rng.choice(Config.num_types, size=Sizes.size, p=Shares)
    # by_size: smallest classrooms go to type 1
    Order = np.argsort(Sizes + Rng.random(Sizes.size) * 0.5, kind="mergesort")
    Cut = np.floor(np.cumsum(Shares) * Sizes.size).astype(int)
    Types = np.empty(Sizes.size, dtype=np.int64)
    Start = 0
    for Index, End in enumerate(Cut):
        Types[Order[Start:End]] = Index
        Start = End
    Types[Order[Start:]] = Config.num_types - 1
    return Types


def _Assignment(Config: DgpConfig, Kappa: np.ndarray, SchoolSlots: List[slice],
                Rng: np.random.Generator) -> np.ndarray:
    """Permutation P with slot i holding student P[i]; slots are contiguous per classroom"""
    Total = Kappa.size
    if Config.selection == "random":
        return Rng.permutation(Total)
    Order = np.arange(Total)
    for Slot in SchoolSlots:
        Members = Order[Slot].copy()
        if Config.selection == "school_stratified":
            Order[Slot] = Rng.permutation(Members)
        else:
            Order[Slot] = Members[np.argsort(Kappa[Members], kind="mergesort")]
    return Order


def _SolveSigma(A: np.ndarray, B: np.ndarray, TargetVariance: float) -> float:
    """Positive root of s^2 var(B) + 2 s cov(A, B) + var(A) - T = 0"""
    VarB = float(np.var(B))
    Cov = float(np.mean((A - A.mean()) * (B - B.mean())))
    VarA = float(np.var(A))
    Discriminant = Cov ** 2 - VarB * (VarA - TargetVariance)
    if VarB <= 0 or Discriminant < 0:
        raise ParameterBoundsError("Raw-score calibration is infeasible for the configured targets")
    Root = (-Cov + np.sqrt(Discriminant)) / VarB
    if Root <= 0:
        raise ParameterBoundsError("Raw-score calibration needs a negative noise scale")
    return float(Root)


def SimulateSample(Config: DgpConfig, Seed: SeedLike = None) -> Tuple[Sample, TruthRecord]:
    """Draw one observable Sample and its sealed TruthRecord"""
    Rng = np.random.default_rng(np.random.SeedSequence(Config.seed) if Seed is None else Seed)
    C = Config.num_classrooms
    Sizes = Rng.integers(Config.size_min, Config.size_max + 1, size=C)
    Types = _AssignTypes(Config, Sizes, Rng)
    Schools = np.arange(C) // Config.classes_per_school
    NumSchools = int(Schools.max()) + 1

    Bounds = np.concatenate([[0], np.cumsum(Sizes)])
    Total = int(Bounds[-1])
    SchoolSlots = []
    for School in range(NumSchools):
        Classes = np.flatnonzero(Schools == School)
        SchoolSlots.append(slice(int(Bounds[Classes[0]]), int(Bounds[Classes[-1] + 1])))

    # students are drawn in their school's pool, then sorted into classrooms
    SchoolOfSlot = np.repeat(Schools, Sizes)
    SchoolEffect = Rng.normal(0.0, 1.0, NumSchools) * Config.school_sd
    ZetaStar = SchoolEffect[SchoolOfSlot] + Rng.normal(0.0, 1.0, Total)
    Girl = Rng.integers(0, 2, size=Total).astype(float)
    Age = Rng.normal(0.0, 1.0, Total)
    Kappa = (Config.kappa_loading * ZetaStar + Config.kappa_girl * (Girl - 0.5)
             + Config.kappa_noise_sd * Rng.normal(0.0, 1.0, Total))

    Order = _Assignment(Config, Kappa, SchoolSlots, Rng)
    Girl, Age, Kappa = Girl[Order], Age[Order], Kappa[Order]

    Rows = np.repeat(np.arange(C), Sizes)
    Alpha = Config.alpha_mean + Config.alpha_sd * Rng.normal(0.0, 1.0, C)
    NumClassCovariates = len(Config.beta_class[0])
    ClassCovariates = Rng.normal(0.0, 1.0, (C, NumClassCovariates))
    ClassNames = ["cv_teacher_exp"] if NumClassCovariates == 1 else \
        [f"cv_x{Index + 1}" for Index in range(NumClassCovariates)]

    Peer = BuildOperator("I_plus_rhoM", Sizes, Rho=Config.rho0)
    MuStar = Alpha[Rows] + Peer.Apply(Kappa)
    StudentCovariates = np.column_stack([Girl, Age])
    BetaClass = np.asarray(Config.beta_class, dtype=float)
    BetaStudent = np.asarray(Config.beta_student, dtype=float)

    TypeScale = np.asarray(Config.TypeScales())[Types][Rows]
    Noise1 = Rng.normal(0.0, 1.0, Total) * TypeScale
    Noise2 = Noise1.copy() if Config.identical_noise else Rng.normal(0.0, 1.0, Total) * TypeScale

    def Systematic(Test: int) -> np.ndarray:
        return ClassCovariates[Rows] @ BetaClass[Test] + Peer.Apply(StudentCovariates @ BetaStudent[Test])

    Sigma1, Sigma2, F1, Scale, Offset = Config.sigma1, Config.sigma2, Config.f10, 1.0, 0.0
    Base2 = MuStar + Systematic(1) + Peer.Apply(Sigma2 * Noise2)
    if Config.calibrate_raw_scores is not None:
        Targets = Config.calibrate_raw_scores
        Scale = Targets.sd2 / float(np.std(Base2))
        Offset = Targets.mean2 / Scale - float(np.mean(Base2))
        Mu = MuStar + Offset
        Fixed1 = Systematic(0)
        Loading = Peer.Apply(Noise1)
        for _ in range(50):
            F1 = (Targets.mean1 / Scale - Fixed1.mean() - Sigma1 * Loading.mean()) / Mu.mean()
            Updated = _SolveSigma(F1 * Mu + Fixed1, Loading, (Targets.sd1 / Scale) ** 2)
            if abs(Updated - Sigma1) < 1e-12 * max(Sigma1, 1.0):
                Sigma1 = Updated
                break
            Sigma1 = Updated
        F1 = (Targets.mean1 / Scale - Fixed1.mean() - Sigma1 * Loading.mean()) / Mu.mean()
        Log.Debug(f"Calibration: scale {Scale:.4g}, offset {Offset:.4g}, f1 {F1:.4g}, sigma1 {Sigma1:.4g}")

    Mu = MuStar + Offset
    Y1 = Scale * (F1 * Mu + Systematic(0) + Peer.Apply(Sigma1 * Noise1))
    Y2 = Scale * (Mu + Systematic(1) + Peer.Apply(Sigma2 * Noise2))

    Labels = _TypeLabels(Config.num_types)
    Frame = pd.DataFrame({
        "student_id": [f"S{Index + 1:07d}" for Index in range(Total)],
        "class_id": np.array([f"C{Index + 1:05d}" for Index in range(C)])[Rows],
        "school_id": np.array([f"SCH{Index + 1:04d}" for Index in range(NumSchools)])[Schools][Rows],
        "class_type": np.array(Labels)[Types][Rows],
        "y1": Y1,
        "y2": Y2,
        "sv_girl": Girl,
        "sv_age": Age,
    })
    for Index, Name in enumerate(ClassNames):
        Frame[Name] = ClassCovariates[Rows, Index]

    if Config.missing_rate > 0:
        Frame = _MaskCompletelyAtRandom(Frame, Config.missing_rate, Rows, Rng)

    DeltaClass = Scale * (BetaClass[0] - F1 * BetaClass[1])
    DeltaStudent = Scale * (BetaStudent[0] - F1 * BetaStudent[1])
    Delta = np.concatenate([DeltaClass, DeltaStudent, Config.rho0 * DeltaStudent])
    DeltaLabels = tuple(ClassNames + ["sv_girl", "sv_age", "peer_sv_girl", "peer_sv_age"])
    NoiseScale = abs(Sigma1 - F1 * Sigma2) if Config.identical_noise else np.hypot(Sigma1, F1 * Sigma2)
    Gamma0 = Scale * NoiseScale * np.asarray(Config.TypeScales())

    Truth = TruthRecord(
        Theta0=ParamTheta(Config.rho0, F1, Delta),
        Gamma0=VarGamma(Gamma0),
        DeltaLabels=DeltaLabels,
        Scale=Scale,
        Offset=Offset,
        Sigma1=Sigma1,
        Sigma2=Sigma2,
        Kappa=Kappa,
    )
    return Sample.FromFrame(Frame), Truth


def _MaskCompletelyAtRandom(Frame: pd.DataFrame, Rate: float, Rows: np.ndarray,
                            Rng: np.random.Generator) -> pd.DataFrame:
    """Blank outcomes and student covariates independently with probability Rate"""
    Frame = Frame.copy()
    for Column in ("y1", "y2", "sv_girl", "sv_age"):
        Mask = Rng.random(len(Frame)) < Rate
        if Column.startswith("sv_"):
            # every classroom keeps at least one observed value of each covariate
            for Classroom in np.unique(Rows[Mask]):
                Members = np.flatnonzero(Rows == Classroom)
                if Mask[Members].all():
                    Mask[Rng.choice(Members)] = False
        Frame.loc[Mask, Column] = np.nan
    return Frame
