#!/usr/bin/env python3
"""
File: BlockMatrix.py
Path: ClassroomPeers/Source/Core/BlockMatrix.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Closed-form algebra for classroom block-diagonal operators

Purpose: Every operator of the model (leave-out mean M, I + rho*M, its inverse,
Omega(gamma), Sigma_t and the quadratic-moment matrix A) is block diagonal with
classroom blocks of the form p*I*_c + q*J*_c, where J*_c = 11'/n_c is the mean
projector and I*_c = I - J*_c the centering projector. Such blocks form a
commutative algebra: products multiply the (p, q) pairs, inverses invert them,
traces and determinants are scalar formulas. Nothing here ever builds a dense
n x n matrix.

Blocks may act on the observed rows of a classroom only. In that case the
block dimension is the observed count m_c while the coefficients are computed
from the original class size n_c.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .Errors import DegenerateClassroomError, DimensionError, ParameterBoundsError, SingularBlockError

ZERO_TOLERANCE = 1e-14

OPERATOR_NAMES = (
    "M",
    "I_plus_rhoM",
    "inv_I_plus_rhoM",
    "Omega",
    "Omega_inv_sqrt",
    "Sigma_t",
    "A_choice",
    "Omega_obs",
    "Omega_obs_inv_sqrt",
)
A_CHOICES = ("M", "MtM")


@dataclass(frozen=True)
class ClassroomBlock:
    """One classroom block P*I* + Q*J* of dimension Nc"""

    P: float
    Q: float
    Nc: int

    def __post_init__(self):
        if int(self.Nc) != self.Nc or self.Nc < 1:
            raise DimensionError(f"Block dimension must be a positive integer, got {self.Nc}")

    def Compose(self, Other: "ClassroomBlock") -> "ClassroomBlock":
        return Compose(self, Other)

    def Invert(self) -> "ClassroomBlock":
        return Invert(self)

    def Trace(self) -> float:
        return Trace(self)

    def Determinant(self) -> float:
        return self.P ** (self.Nc - 1) * self.Q

    def Eigenvalues(self) -> np.ndarray:
        """P with multiplicity Nc-1, then Q once"""
        return np.concatenate([np.full(self.Nc - 1, self.P), [self.Q]])

    def Apply(self, Vector: np.ndarray) -> np.ndarray:
        Vector = np.asarray(Vector, dtype=float)
        if Vector.shape[0] != self.Nc:
            raise DimensionError(f"Vector of length {Vector.shape[0]} does not match block size {self.Nc}")
        Mean = Vector.mean(axis=0)
        return self.P * Vector + (self.Q - self.P) * Mean


def MBlock(Nc: int) -> ClassroomBlock:
    """Leave-out mean operator of a classroom of size Nc"""
    if Nc < 2:
        raise DegenerateClassroomError(f"Leave-out mean needs at least 2 students, classroom has {Nc}")
    return ClassroomBlock(-1.0 / (Nc - 1), 1.0, int(Nc))


def Compose(A: ClassroomBlock, B: ClassroomBlock) -> ClassroomBlock:
    if A.Nc != B.Nc:
        raise DimensionError(f"Cannot compose blocks of sizes {A.Nc} and {B.Nc}")
    return ClassroomBlock(A.P * B.P, A.Q * B.Q, A.Nc)


def Invert(A: ClassroomBlock) -> ClassroomBlock:
    if abs(A.P) < ZERO_TOLERANCE or abs(A.Q) < ZERO_TOLERANCE:
        raise SingularBlockError(f"Block (p={A.P}, q={A.Q}) is singular")
    return ClassroomBlock(1.0 / A.P, 1.0 / A.Q, A.Nc)


def Trace(A: ClassroomBlock) -> float:
    return A.P * (A.Nc - 1) + A.Q


@dataclass(frozen=True, eq=False)
class BlockDiag:
    """Block-diagonal operator stored as per-classroom (P, Q, Size) arrays

    Rows are assumed grouped by classroom in block order, which is how
    DesignMatrix lays them out.
    """

    P: np.ndarray
    Q: np.ndarray
    Sizes: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        Sizes = np.asarray(self.Sizes, dtype=np.int64)
        if not (P.shape == Q.shape == Sizes.shape) or P.ndim != 1:
            raise DimensionError("P, Q and Sizes must be 1-d arrays of equal length")
        if np.any(Sizes < 1):
            raise DimensionError("Every block needs at least one row")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Sizes", Sizes)

    @classmethod
    def FromBlocks(cls, Blocks: Sequence[ClassroomBlock]) -> "BlockDiag":
        return cls(
            np.array([Block.P for Block in Blocks], dtype=float),
            np.array([Block.Q for Block in Blocks], dtype=float),
            np.array([Block.Nc for Block in Blocks], dtype=np.int64),
        )

    @property
    def NumBlocks(self) -> int:
        return int(self.Sizes.shape[0])

    @property
    def Dimension(self) -> int:
        return int(self.Sizes.sum())

    @property
    def Blocks(self) -> Iterator[ClassroomBlock]:
        for P, Q, Size in zip(self.P, self.Q, self.Sizes):
            yield ClassroomBlock(float(P), float(Q), int(Size))

    @cached_property
    def RowLabels(self) -> np.ndarray:
        return np.repeat(np.arange(self.NumBlocks), self.Sizes)

    @cached_property
    def Indicator(self) -> sp.csr_matrix:
        """n x C sparse membership matrix"""
        Rows = np.arange(self.Dimension)
        return sp.csr_matrix(
            (np.ones(self.Dimension), (Rows, self.RowLabels)),
            shape=(self.Dimension, self.NumBlocks),
        )

    def _CheckSame(self, Other: "BlockDiag") -> None:
        if not np.array_equal(self.Sizes, Other.Sizes):
            raise DimensionError("Block structures differ")

    def Compose(self, Other: "BlockDiag") -> "BlockDiag":
        self._CheckSame(Other)
        return BlockDiag(self.P * Other.P, self.Q * Other.Q, self.Sizes)

    def Add(self, Other: "BlockDiag") -> "BlockDiag":
        self._CheckSame(Other)
        return BlockDiag(self.P + Other.P, self.Q + Other.Q, self.Sizes)

    def Scale(self, Factor) -> "BlockDiag":
        """Multiply each block by a scalar (or one scalar per block)"""
        return BlockDiag(self.P * Factor, self.Q * Factor, self.Sizes)

    def Invert(self) -> "BlockDiag":
        if np.any(np.abs(self.P) < ZERO_TOLERANCE) or np.any(np.abs(self.Q) < ZERO_TOLERANCE):
            Bad = np.flatnonzero((np.abs(self.P) < ZERO_TOLERANCE) | (np.abs(self.Q) < ZERO_TOLERANCE))
            raise SingularBlockError(f"{Bad.size} singular classroom block(s), first at index {Bad[0]}")
        return BlockDiag(1.0 / self.P, 1.0 / self.Q, self.Sizes)

    def Trace(self) -> float:
        return float(np.sum(self.P * (self.Sizes - 1) + self.Q))

    def BlockTraces(self) -> np.ndarray:
        return self.P * (self.Sizes - 1) + self.Q

    def Diagonal(self) -> np.ndarray:
        """Per-block diagonal entry of the dense form"""
        return self.P + (self.Q - self.P) / self.Sizes

    def BlockMeans(self, X: np.ndarray) -> np.ndarray:
        Sums = self.Indicator.T @ X
        if X.ndim == 1:
            return Sums / self.Sizes
        return Sums / self.Sizes[:, None]

    def Apply(self, X: np.ndarray) -> np.ndarray:
        """Multiply a vector (n,) or matrix (n, k) by the operator in O(n k)"""
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.Dimension:
            raise DimensionError(f"Operand has {X.shape[0]} rows, operator dimension is {self.Dimension}")
        Means = self.BlockMeans(X)[self.RowLabels]
        P = self.P[self.RowLabels]
        Delta = (self.Q - self.P)[self.RowLabels]
        if X.ndim == 1:
            return P * X + Delta * Means
        return P[:, None] * X + Delta[:, None] * Means

    def BlockQuadForms(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """u_c' A_c v_c for every classroom"""
        U = np.asarray(U, dtype=float)
        V = np.asarray(V, dtype=float)
        if U.shape != (self.Dimension,) or V.shape != (self.Dimension,):
            raise DimensionError("QuadForm operands must be vectors of the operator dimension")
        Inner = np.bincount(self.RowLabels, weights=U * V, minlength=self.NumBlocks)
        SumU = np.bincount(self.RowLabels, weights=U, minlength=self.NumBlocks)
        SumV = np.bincount(self.RowLabels, weights=V, minlength=self.NumBlocks)
        # u'I*v = u.v - n ubar vbar ; u'J*v = n ubar vbar
        return self.P * Inner + (self.Q - self.P) * SumU * SumV / self.Sizes

    def QuadForm(self, U: np.ndarray, V: np.ndarray) -> float:
        return float(self.BlockQuadForms(U, V).sum())


def QuadForm(A: BlockDiag, U: np.ndarray, V: np.ndarray) -> float:
    return A.QuadForm(U, V)


def _CheckSizes(Sizes: np.ndarray, ObservedSizes: Optional[np.ndarray]):
    Sizes = np.asarray(Sizes, dtype=np.int64)
    if Sizes.ndim != 1 or Sizes.size == 0:
        raise DimensionError("Sizes must be a non-empty 1-d array")
    if np.any(Sizes < 2):
        raise DegenerateClassroomError(f"Classroom sizes must be >= 2, minimum is {Sizes.min()}")
    if ObservedSizes is None:
        return Sizes, Sizes
    Observed = np.asarray(ObservedSizes, dtype=np.int64)
    if Observed.shape != Sizes.shape:
        raise DimensionError("ObservedSizes must align with Sizes")
    if np.any(Observed < 1) or np.any(Observed > Sizes):
        raise DimensionError("Observed counts must lie in [1, n_c]")
    return Sizes, Observed


def _CheckRho(Rho: Optional[float]) -> float:
    if Rho is None:
        raise ParameterBoundsError("Operator requires rho")
    if not -1.0 < Rho < 1.0:
        raise ParameterBoundsError(f"rho must lie in (-1, 1), got {Rho}")
    return float(Rho)


def _PerClassroom(Values, Types: Optional[np.ndarray], NumBlocks: int, Label: str) -> np.ndarray:
    Values = np.atleast_1d(np.asarray(Values, dtype=float))
    if np.any(Values <= 0):
        raise ParameterBoundsError(f"{Label} must be positive, got {Values}")
    if Types is None:
        if Values.size != 1:
            raise DimensionError(f"{Label} has {Values.size} entries but no class types were given")
        return np.full(NumBlocks, Values[0])
    Types = np.asarray(Types, dtype=np.int64)
    if Types.shape != (NumBlocks,) or Types.min() < 0 or Types.max() >= Values.size:
        raise DimensionError(f"Class types do not index the {Values.size} {Label} entries")
    return Values[Types]


def AChoiceOffDiagonal(AChoice: str, Sizes: np.ndarray) -> np.ndarray:
    """Off-diagonal entry of the zero-diagonal quadratic-moment operator per classroom

    M has off-diagonal 1/(n-1); M'M - diag(M'M) has (n-2)/(n-1)^2.
    """
    Sizes = np.asarray(Sizes, dtype=float)
    if AChoice == "M":
        return 1.0 / (Sizes - 1.0)
    if AChoice == "MtM":
        return (Sizes - 2.0) / (Sizes - 1.0) ** 2
    raise ParameterBoundsError(f"Unknown A choice '{AChoice}', expected one of {A_CHOICES}")


def BuildOperator(Name: str, Sizes, Types=None, Rho: Optional[float] = None,
                  Gamma=None, Sigma2: Optional[float] = None, TypeScale=None,
                  AChoice: str = "M", ObservedSizes=None) -> BlockDiag:
    """Build one of the model's block-diagonal operators

    Sizes are original class sizes n_c; ObservedSizes (default: Sizes) are the
    row counts the blocks act on. Types index Gamma / TypeScale per classroom.
    """
    if Name not in OPERATOR_NAMES:
        raise ParameterBoundsError(f"Unknown operator '{Name}', expected one of {OPERATOR_NAMES}")
    N, Obs = _CheckSizes(Sizes, ObservedSizes)
    NF = N.astype(float)
    ObsF = Obs.astype(float)
    C = N.size

    if Name == "M":
        # D M D' = (11' - I)/(n-1) on the observed rows
        return BlockDiag(-1.0 / (NF - 1.0), (ObsF - 1.0) / (NF - 1.0), Obs)

    if Name in ("I_plus_rhoM", "inv_I_plus_rhoM"):
        Rho = _CheckRho(Rho)
        Forward = BlockDiag(1.0 - Rho / (NF - 1.0), 1.0 + Rho * (ObsF - 1.0) / (NF - 1.0), Obs)
        return Forward if Name == "I_plus_rhoM" else Forward.Invert()

    if Name in ("Omega", "Omega_inv_sqrt"):
        G = _PerClassroom(Gamma if Gamma is not None else 1.0, Types, C, "gamma")
        if Name == "Omega":
            return BlockDiag(G ** 2, G ** 2, Obs)
        return BlockDiag(1.0 / G, 1.0 / G, Obs)

    if Name == "Sigma_t":
        if Sigma2 is None or Sigma2 <= 0:
            raise ParameterBoundsError(f"Sigma_t needs a positive sigma2, got {Sigma2}")
        Scale = _PerClassroom(TypeScale if TypeScale is not None else 1.0, Types, C, "type scale")
        Variance = Sigma2 * Scale ** 2
        return BlockDiag(Variance, Variance, Obs)

    if Name == "A_choice":
        Off = AChoiceOffDiagonal(AChoice, NF)
        return BlockDiag(-Off, Off * (ObsF - 1.0), Obs)

    # Omega_obs: variance of D_c (I + rho M_c) e_c with Var(e_c) = sigma^2 I
    Rho = _CheckRho(Rho)
    G = _PerClassroom(Gamma if Gamma is not None else 1.0, Types, C, "gamma")
    CenterCoef, MeanCoef = ObservedVarianceCoefficients(NF, ObsF, Rho)
    if Name == "Omega_obs":
        return BlockDiag(G ** 2 * CenterCoef, G ** 2 * MeanCoef, Obs)
    return BlockDiag(1.0 / (G * np.sqrt(CenterCoef)), 1.0 / (G * np.sqrt(MeanCoef)), Obs)


def ObservedVarianceCoefficients(Sizes, Observed, Rho: float):
    """(p, q) of Omega^obs / sigma^2 on the observed rows

    With a = (n-1-rho)/(n-1), Omega^obs / sigma^2 = a^2 I + ((1+rho)^2 - a^2)/n 11',
    so p = a^2 and q = a^2 + (m/n)((1+rho)^2 - a^2).
    """
    Sizes = np.asarray(Sizes, dtype=float)
    Observed = np.asarray(Observed, dtype=float)
    A = (Sizes - 1.0 - Rho) / (Sizes - 1.0)
    Share = Observed / Sizes
    return A ** 2, A ** 2 + Share * ((1.0 + Rho) ** 2 - A ** 2)
