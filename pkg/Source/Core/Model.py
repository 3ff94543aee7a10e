#!/usr/bin/env python3
"""
File: Model.py
Path: ClassroomPeers/Source/Core/Model.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Data model of the quasi-differenced peer-effects equation

Purpose: Holds stacked classroom samples, the parameter containers theta and
gamma, builds the design matrix X = (v^c, w1^c, w2^c, v^p, w1^p, w2^p, Mv^p,
Mw1^p, Mw2^p) with the randomly-missing-data adjustment of the peer averages,
and evaluates the transformed residuals u+ and eps+.

Missing data: a student missing an outcome or an own covariate is dropped as a
row but still counts in the original class size n_c, and peer averages use
every observed value of the variable in the classroom:
    x~_cr = (n_c * xbar_c^obs - x_cr) / (n_c - 1).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .BlockMatrix import BlockDiag, BuildOperator, ObservedVarianceCoefficients
from .Errors import (
    CollinearityError,
    DataValidationError,
    DegenerateClassroomError,
    DimensionError,
    MissingDataError,
    ParameterBoundsError,
    UnusableClassroomError,
)
from .Logger import GetLogger

Log = GetLogger("Model")

# ===== SCHEMA =====

REQUIRED_COLUMNS = ("student_id", "class_id", "class_type", "y1", "y2")
STUDENT_PREFIXES = ("sv_", "sw1_", "sw2_")
CLASS_PREFIXES = ("cv_", "cw1_", "cw2_")
INSTRUMENT_PREFIX = "z_"
ROLE_ORDER = ("v_c", "w1_c", "w2_c", "v_p", "w1_p", "w2_p", "Mv_p", "Mw1_p", "Mw2_p")
PREFIX_ROLE = {"cv_": "v_c", "cw1_": "w1_c", "cw2_": "w2_c",
               "sv_": "v_p", "sw1_": "w1_p", "sw2_": "w2_p"}
PEER_ROLE = {"v_p": "Mv_p", "w1_p": "Mw1_p", "w2_p": "Mw2_p"}
MISSING_POLICIES = ("adjusted", "drop_classroom", "fail")
TRANSFORMS = ("omega_obs", "restricted")
RANK_TOLERANCE = 1e-10


def ColumnsWithPrefix(Columns: Sequence[str], Prefix: str) -> List[str]:
    return [Column for Column in Columns if Column.startswith(Prefix)]


# ===== SAMPLE =====

@dataclass(frozen=True, eq=False)
class Sample:
    """Stacked classrooms; one Students row per student, one Classrooms row per class

    Students columns: student_id, class_index, y1, y2 and the prefixed
    covariates (NaN marks missing). Classrooms columns: class_id, school_id,
    class_type, size, het_group, type_index. Classrooms are ordered by
    (school_id, class_id) and students are grouped by classroom in that order.
    """

    Students: pd.DataFrame
    Classrooms: pd.DataFrame

    @classmethod
    def FromFrame(cls, Frame: pd.DataFrame, HetBy: str = "class_type",
                  HetTypes: Optional[Dict[str, str]] = None) -> "Sample":
        Missing = [Column for Column in REQUIRED_COLUMNS if Column not in Frame.columns]
        if Missing:
            raise DataValidationError(f"Missing required columns: {Missing}")

        Frame = Frame.copy()
        if "school_id" not in Frame.columns:
            Frame["school_id"] = ""
        for Column in ("class_id", "school_id", "class_type", "student_id"):
            Frame[Column] = Frame[Column].astype(str)
        for Column in ("y1", "y2"):
            Frame[Column] = pd.to_numeric(Frame[Column], errors="raise").astype(float)

        if Frame["student_id"].duplicated().any():
            Duplicates = Frame.loc[Frame["student_id"].duplicated(), "student_id"].unique()[:5].tolist()
            raise DataValidationError(f"Duplicate student_id values: {Duplicates}")

        Frame = Frame.sort_values(["school_id", "class_id"], kind="mergesort").reset_index(drop=True)
        Grouped = Frame.groupby("class_id", sort=False)

        for Column in ("school_id", "class_type", HetBy):
            if Column not in Frame.columns:
                raise DataValidationError(f"Heteroskedasticity column '{Column}' not found")
            if (Grouped[Column].nunique(dropna=False) > 1).any():
                raise DataValidationError(f"Column '{Column}' varies within a classroom")

        ClassLevel = [Column for Column in Frame.columns
                      if Column.startswith(CLASS_PREFIXES) or Column.startswith(INSTRUMENT_PREFIX)]
        if ClassLevel:
            Varying = Grouped[ClassLevel].nunique(dropna=True).gt(1).any()
            if Varying.any():
                raise DataValidationError(
                    f"Classroom-level columns vary within a classroom: {Varying[Varying].index.tolist()}")

        Classrooms = Grouped.agg(
            school_id=("school_id", "first"),
            class_type=("class_type", "first"),
            het_source=(HetBy, "first"),
            size=("student_id", "size"),
        ).reset_index()

        Small = Classrooms.loc[Classrooms["size"] < 2, "class_id"].tolist()
        if Small:
            raise DegenerateClassroomError(f"Classrooms with fewer than 2 students: {Small[:10]}",
                                           Details={"classrooms": Small})

        Mapping = HetTypes or {}
        Classrooms["het_group"] = Classrooms["het_source"].astype(str).map(lambda Value: Mapping.get(Value, Value))
        Groups = sorted(Classrooms["het_group"].unique())
        Classrooms["type_index"] = Classrooms["het_group"].map({Group: J for J, Group in enumerate(Groups)})
        Classrooms = Classrooms.drop(columns="het_source")

        ClassIndex = pd.Series(np.arange(len(Classrooms)), index=Classrooms["class_id"])
        Frame.insert(1, "class_index", ClassIndex.loc[Frame["class_id"]].to_numpy())

        return cls(Frame, Classrooms)

    @property
    def NumClassrooms(self) -> int:
        return len(self.Classrooms)

    @property
    def NumStudents(self) -> int:
        return len(self.Students)

    @property
    def Sizes(self) -> np.ndarray:
        return self.Classrooms["size"].to_numpy(dtype=np.int64)

    @property
    def TypeLabels(self) -> List[str]:
        return sorted(self.Classrooms["het_group"].unique())

    @property
    def NumTypes(self) -> int:
        return len(self.TypeLabels)

    def Columns(self, Prefix: str) -> List[str]:
        return ColumnsWithPrefix(self.Students.columns, Prefix)

    def Swapped(self) -> "Sample":
        """Same sample with the two test scores exchanged"""
        Students = self.Students.copy()
        Students["y1"], Students["y2"] = self.Students["y2"].to_numpy(), self.Students["y1"].to_numpy()
        return Sample(Students, self.Classrooms.copy())

    def Rescaled(self, Factor: float) -> "Sample":
        Students = self.Students.copy()
        Students["y1"] = Students["y1"] * Factor
        Students["y2"] = Students["y2"] * Factor
        return Sample(Students, self.Classrooms.copy())


# ===== PARAMETERS =====

@dataclass(frozen=True, eq=False)
class ParamTheta:
    """theta = (rho, f1, delta')'"""

    Rho: float
    F1: float
    Delta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "Delta", np.asarray(self.Delta, dtype=float).reshape(-1))

    def ToVector(self) -> np.ndarray:
        return np.concatenate([[self.Rho, self.F1], self.Delta])

    @classmethod
    def FromVector(cls, Vector: np.ndarray) -> "ParamTheta":
        Vector = np.asarray(Vector, dtype=float)
        return cls(float(Vector[0]), float(Vector[1]), Vector[2:].copy())

    @property
    def Size(self) -> int:
        return 2 + self.Delta.size

    def Validate(self, KRho: float = 0.99, KF: float = 100.0, KX: float = 1e6) -> "ParamTheta":
        if abs(self.Rho) > KRho:
            raise ParameterBoundsError(f"|rho| = {abs(self.Rho):.4g} exceeds K_rho = {KRho}")
        if abs(self.F1) > KF:
            raise ParameterBoundsError(f"|f1| = {abs(self.F1):.4g} exceeds K_f = {KF}")
        if self.Delta.size and np.max(np.abs(self.Delta)) > KX:
            raise ParameterBoundsError(f"max |delta| exceeds K_X = {KX}")
        return self


@dataclass(frozen=True, eq=False)
class VarGamma:
    """Per variance-group scale parameters of Omega(gamma)"""

    Gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Gamma", np.atleast_1d(np.asarray(self.Gamma, dtype=float)))

    @classmethod
    def Ones(cls, NumTypes: int) -> "VarGamma":
        return cls(np.ones(NumTypes))

    @property
    def NumTypes(self) -> int:
        return int(self.Gamma.size)

    def Validate(self, KGamma: float = 1e6) -> "VarGamma":
        if np.any(self.Gamma < 1.0 / KGamma) or np.any(self.Gamma > KGamma):
            raise ParameterBoundsError(f"gamma {self.Gamma} outside [1/K_gamma, K_gamma] with K_gamma = {KGamma}")
        return self


# ===== DELTA LAYOUT =====

@dataclass(frozen=True, eq=False)
class StructuralCoefficients:
    """Structural blocks behind delta for one quasi-differenced equation"""

    DeltaVClass: np.ndarray
    BetaW1Class: np.ndarray
    BetaW2Class: np.ndarray
    DeltaVStudent: np.ndarray
    BetaW1Student: np.ndarray
    BetaW2Student: np.ndarray


def PackDelta(Coefficients: StructuralCoefficients, Rho: float, F1: float) -> np.ndarray:
    C = Coefficients
    return np.concatenate([
        C.DeltaVClass, C.BetaW1Class, -F1 * C.BetaW2Class,
        C.DeltaVStudent, C.BetaW1Student, -F1 * C.BetaW2Student,
        Rho * C.DeltaVStudent, Rho * C.BetaW1Student, -Rho * F1 * C.BetaW2Student,
    ])


def UnpackDelta(Delta: np.ndarray, RoleCounts: Dict[str, int], F1: float) -> StructuralCoefficients:
    """Recover the structural blocks from the first six delta groups (needs f1 != 0)"""
    if F1 == 0:
        raise ParameterBoundsError("Cannot recover beta_w2 blocks when f1 = 0")
    Parts = {}
    Start = 0
    for Role in ROLE_ORDER:
        Count = RoleCounts.get(Role, 0)
        Parts[Role] = np.asarray(Delta[Start:Start + Count], dtype=float)
        Start += Count
    if Start != len(Delta):
        raise DimensionError(f"delta has {len(Delta)} entries, layout expects {Start}")
    return StructuralCoefficients(
        DeltaVClass=Parts["v_c"],
        BetaW1Class=Parts["w1_c"],
        BetaW2Class=-Parts["w2_c"] / F1,
        DeltaVStudent=Parts["v_p"],
        BetaW1Student=Parts["w1_p"],
        BetaW2Student=-Parts["w2_p"] / F1,
    )


# ===== DESIGN MATRIX =====

@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Rows are the fully observed students, grouped by classroom"""

    X: np.ndarray
    Labels: Tuple[str, ...]
    Roles: Tuple[str, ...]
    Y1: np.ndarray
    Y2: np.ndarray
    StudentIds: np.ndarray
    ClassIds: np.ndarray
    Sizes: np.ndarray
    ObservedSizes: np.ndarray
    TypeIndex: np.ndarray
    TypeLabels: Tuple[str, ...]
    Instruments: Dict[str, np.ndarray] = field(default_factory=dict)
    Report: Dict[str, object] = field(default_factory=dict)

    @property
    def NumRows(self) -> int:
        return int(self.Y1.shape[0])

    @property
    def NumClassrooms(self) -> int:
        return int(self.Sizes.shape[0])

    @property
    def NumCovariates(self) -> int:
        return int(self.X.shape[1])

    @property
    def NumTypes(self) -> int:
        return len(self.TypeLabels)

    @cached_property
    def Layout(self) -> BlockDiag:
        """Identity operator carrying the observed-row block structure"""
        return BlockDiag(np.ones(self.NumClassrooms), np.ones(self.NumClassrooms), self.ObservedSizes)

    @cached_property
    def RowLabels(self) -> np.ndarray:
        return self.Layout.RowLabels

    @cached_property
    def RowTypes(self) -> np.ndarray:
        return self.TypeIndex[self.RowLabels]

    @property
    def RoleCounts(self) -> Dict[str, int]:
        return {Role: self.Roles.count(Role) for Role in ROLE_ORDER}

    @property
    def HasMissingRows(self) -> bool:
        return bool(np.any(self.ObservedSizes < self.Sizes))

    def Swapped(self) -> "DesignMatrix":
        return _Replace(self, Y1=self.Y2, Y2=self.Y1)


def _Replace(Design: DesignMatrix, **Changes) -> DesignMatrix:
    Fields = {Name: getattr(Design, Name) for Name in DesignMatrix.__dataclass_fields__}
    Fields.update(Changes)
    return DesignMatrix(**Fields)


def _ClassValue(Frame: pd.DataFrame, Column: str) -> pd.Series:
    """Classroom value of a classroom-level column (first observed entry)"""
    return Frame.groupby("class_index", sort=True)[Column].first()


def BuildDesign(Data: Sample, MissingPolicy: str = "adjusted",
                FixedEffects: Sequence[str] = ()) -> DesignMatrix:
    """Assemble X, outcomes and instruments for the quasi-differenced equation"""
    if MissingPolicy not in MISSING_POLICIES:
        raise ParameterBoundsError(f"Unknown missing policy '{MissingPolicy}'")

    Students = Data.Students
    Classrooms = Data.Classrooms
    C = Data.NumClassrooms
    Sizes = Classrooms["size"].to_numpy(dtype=np.int64)
    if np.any(Sizes < 2):
        raise DegenerateClassroomError("Classrooms with fewer than 2 students")
    ClassIndex = Students["class_index"].to_numpy()
    KeepClass = np.ones(C, dtype=bool)
    Stats = {"students": Data.NumStudents, "classrooms": C,
             "dropped_classrooms": [], "dropped_students": {}}

    # classroom-level covariates: a missing value removes the whole class
    ClassColumns = [Column for Prefix in CLASS_PREFIXES for Column in Data.Columns(Prefix)]
    InstrumentColumns = Data.Columns(INSTRUMENT_PREFIX)
    for Column in ClassColumns + InstrumentColumns:
        Values = _ClassValue(Students, Column).reindex(range(C))
        MissingClass = Values.isna().to_numpy()
        if MissingClass.any():
            if MissingPolicy == "fail":
                raise MissingDataError(f"Classroom-level column '{Column}' missing for "
                                       f"{int(MissingClass.sum())} classroom(s)")
            KeepClass &= ~MissingClass

    StudentColumns = [Column for Prefix in STUDENT_PREFIXES for Column in Data.Columns(Prefix)]
    for Column in StudentColumns:
        Missing = Students[Column].isna().to_numpy()
        if not Missing.any():
            continue
        if MissingPolicy == "fail":
            raise MissingDataError(f"Student column '{Column}' has {int(Missing.sum())} missing value(s)")
        AnyMissing = np.bincount(ClassIndex, weights=Missing, minlength=C) > 0
        if MissingPolicy == "drop_classroom":
            KeepClass &= ~AnyMissing
            continue
        AllMissing = np.bincount(ClassIndex, weights=Missing, minlength=C) == Sizes
        AllMissing &= KeepClass
        if AllMissing.any():
            Bad = Classrooms.loc[AllMissing, "class_id"].tolist()
            raise UnusableClassroomError(
                f"Covariate '{Column}' is missing for every student of {len(Bad)} classroom(s)",
                Details={"column": Column, "classrooms": Bad[:20]})

    # peer averages from all observed values, original class size
    PeerColumns = {}
    for Column in StudentColumns:
        Values = Students[Column].to_numpy(dtype=float)
        Observed = ~np.isnan(Values)
        Sums = np.bincount(ClassIndex, weights=np.where(Observed, Values, 0.0), minlength=C)
        Counts = np.bincount(ClassIndex, weights=Observed, minlength=C)
        with np.errstate(invalid="ignore", divide="ignore"):
            ObservedMean = Sums / Counts
        NC = Sizes[ClassIndex]
        PeerColumns[Column] = (NC * ObservedMean[ClassIndex] - Values) / (NC - 1)

    RowMask = KeepClass[ClassIndex]
    OutcomeMissing = Students["y1"].isna().to_numpy() | Students["y2"].isna().to_numpy()
    Stats["dropped_students"]["missing_outcome"] = int((OutcomeMissing & RowMask).sum())
    RowMask &= ~OutcomeMissing
    if StudentColumns:
        CovariateMissing = Students[StudentColumns].isna().any(axis=1).to_numpy()
        Stats["dropped_students"]["missing_covariate"] = int((CovariateMissing & RowMask).sum())
        RowMask &= ~CovariateMissing
    Stats["dropped_students"]["dropped_classroom"] = int((~KeepClass[ClassIndex]).sum())

    ObservedSizes = np.bincount(ClassIndex[RowMask], minlength=C)
    KeptClasses = KeepClass & (ObservedSizes > 0)
    Stats["dropped_classrooms"] = Classrooms.loc[~KeptClasses, "class_id"].tolist()
    if not KeptClasses.any():
        raise MissingDataError("No classroom has a fully observed student")

    Rows = Students.loc[RowMask]
    RowClass = ClassIndex[RowMask]

    ColumnsByRole: Dict[str, List[Tuple[str, np.ndarray]]] = {Role: [] for Role in ROLE_ORDER}
    for Prefix in CLASS_PREFIXES:
        for Column in Data.Columns(Prefix):
            ColumnsByRole[PREFIX_ROLE[Prefix]].append((Column, Rows[Column].to_numpy(dtype=float)))
    for Effect in FixedEffects:
        Source = {"school": "school_id", "classtype": "class_type"}.get(Effect)
        if Source is None:
            raise ParameterBoundsError(f"Unknown fixed effect '{Effect}', expected 'school' or 'classtype'")
        Levels = sorted(Classrooms.loc[KeptClasses, Source].unique())
        RowLevels = Classrooms[Source].to_numpy()[RowClass]
        # first level is the base category
        for Level in Levels[1:]:
            ColumnsByRole["v_c"].append((f"fe_{Source}_{Level}", (RowLevels == Level).astype(float)))
    for Prefix in STUDENT_PREFIXES:
        Role = PREFIX_ROLE[Prefix]
        for Column in Data.Columns(Prefix):
            ColumnsByRole[Role].append((Column, Rows[Column].to_numpy(dtype=float)))
            ColumnsByRole[PEER_ROLE[Role]].append((f"peer_{Column}", PeerColumns[Column][RowMask]))

    Labels, Roles, Matrix = [], [], []
    for Role in ROLE_ORDER:
        for Label, Values in ColumnsByRole[Role]:
            Labels.append(Label)
            Roles.append(Role)
            Matrix.append(Values)
    X = np.column_stack(Matrix) if Matrix else np.zeros((len(Rows), 0))
    CheckFullRank(X, Labels)

    KeptIndex = np.flatnonzero(KeptClasses)
    Design = DesignMatrix(
        X=X,
        Labels=tuple(Labels),
        Roles=tuple(Roles),
        Y1=Rows["y1"].to_numpy(dtype=float),
        Y2=Rows["y2"].to_numpy(dtype=float),
        StudentIds=Rows["student_id"].to_numpy(),
        ClassIds=Classrooms["class_id"].to_numpy()[KeptIndex],
        Sizes=Sizes[KeptIndex],
        ObservedSizes=ObservedSizes[KeptIndex],
        TypeIndex=Classrooms["type_index"].to_numpy(dtype=np.int64)[KeptIndex],
        TypeLabels=tuple(Data.TypeLabels),
        Instruments={Column: Rows[Column].to_numpy(dtype=float) for Column in InstrumentColumns},
        Report=Stats,
    )
    Log.Info(f"Design: {Design.NumRows} rows, {Design.NumClassrooms} classrooms, "
             f"{Design.NumCovariates} covariates, {len(Stats['dropped_classrooms'])} classroom(s) dropped")
    return Design


def CheckFullRank(X: np.ndarray, Labels: Sequence[str] = ()) -> None:
    """Smallest/largest eigenvalue ratio of X'X must exceed RANK_TOLERANCE"""
    if X.shape[1] == 0:
        return
    Eigen = np.linalg.eigvalsh(X.T @ X)
    if Eigen[-1] <= 0 or Eigen[0] / Eigen[-1] < RANK_TOLERANCE:
        raise CollinearityError(
            f"Design matrix is rank deficient (eigenvalue ratio {Eigen[0] / max(Eigen[-1], 1e-300):.3g})",
            Details={"columns": list(Labels)})


def ResolveInstrument(Design: DesignMatrix, Instrument: str = "const") -> Tuple[np.ndarray, str]:
    """Excluded instrument z as an (n, 1) column"""
    if Instrument == "const":
        if np.any(Design.Y1 < 0) or np.any(Design.Y2 < 0):
            Log.Warning("Constant instrument assumes non-negative raw scores; negative scores found")
        return np.ones((Design.NumRows, 1)), "const"
    Name = Instrument.split(":", 1)[1]
    Key = Name if Name.startswith(INSTRUMENT_PREFIX) else INSTRUMENT_PREFIX + Name
    if Key not in Design.Instruments:
        raise DataValidationError(f"Instrument column '{Key}' not found; available: {sorted(Design.Instruments)}")
    return Design.Instruments[Key].reshape(-1, 1), Key


# ===== TRANSFORMS =====

def QuasiDifference(Design: DesignMatrix, Theta: ParamTheta) -> np.ndarray:
    """y1 - f1 y2 - X delta"""
    if Theta.Delta.size != Design.NumCovariates:
        raise DimensionError(f"delta has {Theta.Delta.size} entries, design has {Design.NumCovariates} columns")
    return Design.Y1 - Theta.F1 * Design.Y2 - Design.X @ Theta.Delta


def DecorrelationOperator(Design: DesignMatrix, Rho: float, Transform: str = "omega_obs") -> BlockDiag:
    """(I + rho M)^-1 on the observed rows

    omega_obs whitens with Omega^obs(rho)^-1/2; restricted inverts D(I + rho M)D'.
    They coincide when no row is missing.
    """
    if Transform == "restricted":
        return BuildOperator("inv_I_plus_rhoM", Design.Sizes, Rho=Rho, ObservedSizes=Design.ObservedSizes)
    if Transform == "omega_obs":
        return BuildOperator("Omega_obs_inv_sqrt", Design.Sizes, Rho=Rho, ObservedSizes=Design.ObservedSizes)
    raise ParameterBoundsError(f"Unknown transform '{Transform}', expected one of {TRANSFORMS}")


def DecorrelationDerivative(Design: DesignMatrix, Rho: float, Transform: str = "omega_obs") -> BlockDiag:
    """d/d rho of DecorrelationOperator; equals -(I+rho M)^-1 M (I+rho M)^-1 without missing rows"""
    if Transform == "restricted":
        Inverse = DecorrelationOperator(Design, Rho, Transform)
        MObs = BuildOperator("M", Design.Sizes, ObservedSizes=Design.ObservedSizes)
        return Inverse.Compose(MObs).Compose(Inverse).Scale(-1.0)
    if Transform != "omega_obs":
        raise ParameterBoundsError(f"Unknown transform '{Transform}', expected one of {TRANSFORMS}")
    N = Design.Sizes.astype(float)
    Share = Design.ObservedSizes / N
    A = (N - 1.0 - Rho) / (N - 1.0)
    DA = -1.0 / (N - 1.0)
    _, B = ObservedVarianceCoefficients(N, Design.ObservedSizes, Rho)
    DB = 2.0 * A * DA * (1.0 - Share) + 2.0 * Share * (1.0 + Rho)
    return BlockDiag(-DA / A ** 2, -0.5 * DB * B ** -1.5, Design.ObservedSizes)


def RowGamma(Design: DesignMatrix, Gamma: VarGamma) -> np.ndarray:
    if Gamma.NumTypes != Design.NumTypes:
        raise DimensionError(f"gamma has {Gamma.NumTypes} entries, design has {Design.NumTypes} variance groups")
    if np.any(Gamma.Gamma <= 0):
        raise ParameterBoundsError(f"gamma must be positive, got {Gamma.Gamma}")
    return Gamma.Gamma[Design.RowTypes]


def UPlus(Design: DesignMatrix, Theta: ParamTheta, Gamma: VarGamma,
          Transform: str = "omega_obs") -> np.ndarray:
    """u+ = Omega(gamma)^-1/2 (I + rho M)^-1 (y1 - f1 y2 - X delta)"""
    Residual = QuasiDifference(Design, Theta)
    return DecorrelationOperator(Design, Theta.Rho, Transform).Apply(Residual) / RowGamma(Design, Gamma)


def EpsPlus(Design: DesignMatrix, Theta: ParamTheta, Transform: str = "omega_obs") -> np.ndarray:
    """eps+ = (I + rho M)^-1 (y1 - f1 y2 - X delta), i.e. u+ with gamma = 1"""
    return UPlus(Design, Theta, VarGamma.Ones(Design.NumTypes), Transform)


def OmegaObs(Size: int, ObservedSize: int, Rho: float, Sigma2: float) -> np.ndarray:
    """Dense variance of D_c (I + rho M_c)(u1 - f1 u2) for one classroom"""
    if Size < 2:
        raise DegenerateClassroomError(f"Classroom size must be >= 2, got {Size}")
    if not 1 <= ObservedSize <= Size:
        raise DimensionError(f"Observed count {ObservedSize} outside [1, {Size}]")
    A2 = ((Size - 1.0 - Rho) / (Size - 1.0)) ** 2
    Ones = np.ones((ObservedSize, ObservedSize))
    return Sigma2 * (A2 * np.eye(ObservedSize) + ((1.0 + Rho) ** 2 - A2) / Size * Ones)
