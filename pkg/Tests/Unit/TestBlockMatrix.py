#!/usr/bin/env python3
"""
File: TestBlockMatrix.py
Path: ClassroomPeers/Tests/Unit/TestBlockMatrix.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Closed-form block algebra against dense realizations
"""

import numpy as np
import pytest

from Source.Core.BlockMatrix import (
    BlockDiag,
    BuildOperator,
    ClassroomBlock,
    Compose,
    Invert,
    MBlock,
    QuadForm,
    Trace,
)
from Source.Core.Errors import (
    DegenerateClassroomError,
    DimensionError,
    ParameterBoundsError,
    SingularBlockError,
)
from Source.Core.Model import OmegaObs
from Tests.DenseOracle import DenseBlock, DenseM, DenseObservedRows, DenseOperator


class TestClassroomBlock:
    def TestLeaveOutMeanCoefficients(self):
        Block = MBlock(3)
        assert (Block.P, Block.Q) == (-0.5, 1.0)

    def TestLeaveOutMeanApply(self):
        np.testing.assert_allclose(MBlock(3).Apply(np.array([1.0, 2.0, 3.0])), [2.5, 2.0, 1.5])

    def TestPairIsSwap(self):
        Block = MBlock(2)
        np.testing.assert_allclose(DenseBlock(Block.P, Block.Q, 2), [[0.0, 1.0], [1.0, 0.0]])

    def TestSingletonRejected(self):
        with pytest.raises(DegenerateClassroomError):
            MBlock(1)

    def TestInversePairComposesToIdentity(self):
        Product = Compose(ClassroomBlock(2.0, 3.0, 4), ClassroomBlock(0.5, 1.0 / 3.0, 4))
        assert Product.P == pytest.approx(1.0)
        assert Product.Q == pytest.approx(1.0)

    def TestIdentityIsNeutral(self):
        Block = ClassroomBlock(-0.7, 2.5, 5)
        Product = Compose(ClassroomBlock(1.0, 1.0, 5), Block)
        assert (Product.P, Product.Q) == (Block.P, Block.Q)

    def TestSquareOfLeaveOutMean(self):
        Square = Compose(MBlock(3), MBlock(3))
        assert (Square.P, Square.Q) == pytest.approx((0.25, 1.0))
        Dense = DenseM([3])
        np.testing.assert_allclose(DenseBlock(Square.P, Square.Q, 3), Dense @ Dense, atol=1e-14)

    def TestComposeSizeMismatch(self):
        with pytest.raises(DimensionError):
            Compose(MBlock(3), MBlock(4))

    def TestInvert(self):
        Inverse = Invert(ClassroomBlock(2.0, 4.0, 3))
        assert (Inverse.P, Inverse.Q) == (0.5, 0.25)

    def TestInvertPeerOperator(self):
        Forward = BuildOperator("I_plus_rhoM", [3], Rho=0.4)
        assert (Forward.P[0], Forward.Q[0]) == pytest.approx((0.8, 1.4))
        Inverse = Forward.Invert()
        assert (Inverse.P[0], Inverse.Q[0]) == pytest.approx((1.25, 5.0 / 7.0))
        np.testing.assert_allclose(DenseOperator(Inverse), np.linalg.inv(np.eye(3) + 0.4 * DenseM([3])),
                                   atol=1e-13)

    def TestInvertSingular(self):
        with pytest.raises(SingularBlockError):
            Invert(ClassroomBlock(0.0, 1.0, 3))

    def TestTrace(self):
        assert Trace(ClassroomBlock(2.0, 3.0, 4)) == pytest.approx(9.0)
        assert Trace(MBlock(3)) == pytest.approx(0.0)
        assert Trace(Compose(MBlock(3), MBlock(3))) == pytest.approx(1.5)

    def TestRandomBlocksMatchDense(self):
        Rng = np.random.default_rng(8)
        for _ in range(200):
            Size = int(Rng.integers(2, 9))
            First = ClassroomBlock(Rng.uniform(0.2, 3.0) * Rng.choice([-1, 1]), Rng.uniform(0.2, 3.0), Size)
            Second = ClassroomBlock(Rng.uniform(-2.0, 2.0), Rng.uniform(-2.0, 2.0), Size)
            DenseFirst = DenseBlock(First.P, First.Q, Size)
            DenseSecond = DenseBlock(Second.P, Second.Q, Size)
            Product = Compose(First, Second)
            np.testing.assert_allclose(DenseBlock(Product.P, Product.Q, Size), DenseFirst @ DenseSecond,
                                       atol=1e-12)
            Inverse = Invert(First)
            np.testing.assert_allclose(DenseBlock(Inverse.P, Inverse.Q, Size), np.linalg.inv(DenseFirst),
                                       rtol=1e-10, atol=1e-12)
            assert Trace(First) == pytest.approx(np.trace(DenseFirst), abs=1e-12)
            assert First.Determinant() == pytest.approx(np.linalg.det(DenseFirst), rel=1e-10)
            np.testing.assert_allclose(np.sort(First.Eigenvalues()), np.linalg.eigvalsh(DenseFirst), atol=1e-12)
            U, V = Rng.normal(size=Size), Rng.normal(size=Size)
            Operator = BlockDiag(np.array([First.P]), np.array([First.Q]), np.array([Size]))
            assert Operator.QuadForm(U, V) == pytest.approx(float(U @ DenseFirst @ V), abs=1e-12)

    def TestLeaveOutMeanRowSums(self):
        for Size in range(2, 9):
            np.testing.assert_allclose(DenseM([Size]).sum(axis=1), 1.0, atol=1e-14)

    def TestDeterminantMatchesDense(self):
        Block = ClassroomBlock(0.6, 1.7, 4)
        assert Block.Determinant() == pytest.approx(np.linalg.det(DenseBlock(0.6, 1.7, 4)))


class TestBlockDiag:
    def TestQuadFormIdentity(self):
        U = np.array([1.0, -2.0, 0.5, 3.0, 4.0])
        Identity = BlockDiag(np.ones(2), np.ones(2), np.array([2, 3]))
        assert QuadForm(Identity, U, U) == pytest.approx(float(U @ U))

    def TestQuadFormPair(self):
        M = BuildOperator("M", [2])
        assert QuadForm(M, np.ones(2), np.ones(2)) == pytest.approx(2.0)

    def TestQuadFormMatchesDense(self):
        Rng = np.random.default_rng(3)
        M = BuildOperator("M", [2, 3, 4])
        U, V = Rng.normal(size=9), Rng.normal(size=9)
        assert QuadForm(M, U, V) == pytest.approx(float(U @ DenseM([2, 3, 4]) @ V), abs=1e-12)

    def TestApplyMatrixMatchesDense(self):
        Rng = np.random.default_rng(4)
        Operator = BlockDiag(Rng.normal(size=3), Rng.normal(size=3), np.array([2, 5, 3]))
        X = Rng.normal(size=(10, 3))
        np.testing.assert_allclose(Operator.Apply(X), DenseOperator(Operator) @ X, atol=1e-12)

    def TestApplyDimensionMismatch(self):
        with pytest.raises(DimensionError):
            BuildOperator("M", [3, 3]).Apply(np.ones(5))

    def TestBlockTracesAndDiagonal(self):
        Operator = BuildOperator("A_choice", [2, 4])
        Dense = DenseOperator(Operator)
        np.testing.assert_allclose(Operator.Diagonal(), [0.0, 0.0], atol=1e-15)
        assert Operator.Compose(Operator).Trace() == pytest.approx(np.trace(Dense @ Dense))
        assert Operator.Compose(Operator).Trace() == pytest.approx(2.0 + 4.0 / 3.0)

    def TestInvertReportsSingularBlock(self):
        with pytest.raises(SingularBlockError):
            BlockDiag(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([2, 2])).Invert()


class TestBuildOperator:
    def TestPeerOperatorAtZeroIsIdentity(self):
        Operator = BuildOperator("I_plus_rhoM", [3, 4], Rho=0.0)
        np.testing.assert_allclose(Operator.P, 1.0)
        np.testing.assert_allclose(Operator.Q, 1.0)

    def TestMtMHasZeroDiagonal(self):
        Operator = BuildOperator("A_choice", [3], AChoice="MtM")
        Dense = DenseM([3])
        Reference = Dense.T @ Dense
        Reference -= np.diag(np.diag(Reference))
        np.testing.assert_allclose(DenseOperator(Operator), Reference, atol=1e-14)
        assert DenseOperator(Operator)[0, 1] == pytest.approx(0.25)

    def TestOmegaSingleType(self):
        Operator = BuildOperator("Omega", [3, 5], Types=np.array([0, 0]), Gamma=[2.0])
        np.testing.assert_allclose(Operator.P, 4.0)
        np.testing.assert_allclose(Operator.Q, 4.0)

    def TestSigmaByType(self):
        Operator = BuildOperator("Sigma_t", [3, 3], Types=np.array([0, 1]), Sigma2=2.0, TypeScale=[1.0, 3.0])
        np.testing.assert_allclose(Operator.P, [2.0, 18.0])

    def TestUnknownName(self):
        with pytest.raises(ParameterBoundsError):
            BuildOperator("Nope", [3])

    def TestRhoOutsideRange(self):
        with pytest.raises(ParameterBoundsError):
            BuildOperator("I_plus_rhoM", [3], Rho=1.0)

    def TestSingletonSizes(self):
        with pytest.raises(DegenerateClassroomError):
            BuildOperator("M", [3, 1])

    def TestObservedRowsOfLeaveOutMean(self):
        Operator = BuildOperator("M", [4, 3], ObservedSizes=[2, 3])
        Selection = DenseObservedRows([4, 3], [2, 3])
        np.testing.assert_allclose(DenseOperator(Operator), Selection @ DenseM([4, 3]) @ Selection.T,
                                   atol=1e-14)

    def TestObservedVarianceExample(self):
        Operator = BuildOperator("Omega_obs", [3], Rho=0.5, ObservedSizes=[2])
        Dense = DenseOperator(Operator)
        assert Dense[0, 0] == pytest.approx(1.125)
        assert Dense[0, 1] == pytest.approx(0.5625)
        np.testing.assert_allclose(Dense, OmegaObs(3, 2, 0.5, 1.0), atol=1e-14)

    def TestObservedVarianceMatchesSelection(self):
        Sizes, Observed, Rho = [4, 5], [3, 5], -0.3
        Selection = DenseObservedRows(Sizes, Observed)
        Peer = np.eye(9) + Rho * DenseM(Sizes)
        Reference = Selection @ Peer @ Peer.T @ Selection.T
        Operator = BuildOperator("Omega_obs", Sizes, Rho=Rho, ObservedSizes=Observed)
        np.testing.assert_allclose(DenseOperator(Operator), Reference, atol=1e-13)

    def TestInverseSquareRootWhitens(self):
        Sizes, Observed = [4, 6], [2, 5]
        Root = DenseOperator(BuildOperator("Omega_obs_inv_sqrt", Sizes, Rho=0.6, ObservedSizes=Observed))
        Variance = DenseOperator(BuildOperator("Omega_obs", Sizes, Rho=0.6, ObservedSizes=Observed))
        np.testing.assert_allclose(Root @ Variance @ Root, np.eye(7), atol=1e-12)

    def TestFullObservationIsPeerSquare(self):
        Peer = np.eye(3) + 0.5 * DenseM([3])
        np.testing.assert_allclose(OmegaObs(3, 3, 0.5, 1.0), Peer @ Peer.T, atol=1e-14)
        np.testing.assert_allclose(OmegaObs(4, 4, 0.0, 2.0), 2.0 * np.eye(4), atol=1e-14)
