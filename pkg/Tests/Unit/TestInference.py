#!/usr/bin/env python3
"""
File: TestInference.py
Path: ClassroomPeers/Tests/Unit/TestInference.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Moment Jacobian, weight matrix, sandwich and clustered covariance
"""

import numpy as np
import pytest

from Source.Core.BlockMatrix import BuildOperator
from Source.Core.Configuration import DgpConfig, EstimatorConfig
from Source.Core.Errors import CollinearityError, IdentificationError, ParameterBoundsError
from Source.Core.Model import BuildDesign, ParamTheta, Sample, VarGamma
from Source.Estimation.EfficientGMM import EstimatePipeline, MomentSpec
from Source.Estimation.Inference import (
    ClusteredV,
    ComputeInference,
    GradientG,
    LambdaOfRho,
    ModelImpliedV,
    MomentVector,
    ResidualAndDerivatives,
    RhoOfLambda,
    SandwichPsi,
    WeightXi,
)
from Source.Simulation.DataGenerator import ReplicationSeed, SimulateSample
from Tests.Builders import BuildFrame, SyntheticDesign


def _Spec(H, Sizes, AChoice="M"):
    return MomentSpec(np.asarray(H, dtype=float), BuildOperator("A_choice", Sizes, AChoice=AChoice),
                      AChoice, "omega_obs", tuple(f"h{Index}" for Index in range(np.shape(H)[1])))


def _FiniteDifference(Design, Spec, Theta, Gamma, Step=1e-6):
    Vector = Theta.ToVector()
    Columns = []
    for Index in range(Vector.size):
        Shift = np.zeros(Vector.size)
        Shift[Index] = Step
        Plus = MomentVector(Design, Spec, ParamTheta.FromVector(Vector + Shift), Gamma)
        Minus = MomentVector(Design, Spec, ParamTheta.FromVector(Vector - Shift), Gamma)
        Columns.append((Plus - Minus) / (2.0 * Step))
    return np.column_stack(Columns)


@pytest.fixture(scope="module")
def Fitted(SimulatedPair):
    Data, _ = SimulatedPair
    return EstimatePipeline(Data, EstimatorConfig(grid_points=256))


class TestDerivatives:
    def TestDeltaDerivativeAtZeroRho(self, SmallDesign):
        Theta = ParamTheta(0.0, 1.0, np.zeros(SmallDesign.NumCovariates))
        _, DU = ResidualAndDerivatives(SmallDesign, Theta, VarGamma.Ones(1))
        np.testing.assert_allclose(DU[:, 2:], -SmallDesign.X, atol=1e-12)
        np.testing.assert_allclose(DU[:, 1], -SmallDesign.Y2, atol=1e-10)

    def TestRhoDerivativeVanishesAtExactFit(self):
        Sizes = [3, 4]
        Y2 = np.arange(7.0)
        Design = SyntheticDesign(Sizes, 1.5 * Y2, Y2)
        _, DU = ResidualAndDerivatives(Design, ParamTheta(0.4, 1.5), VarGamma.Ones(1))
        np.testing.assert_allclose(DU[:, 0], 0.0, atol=1e-14)

    @pytest.mark.parametrize("Transform", ["omega_obs", "restricted"])
    def TestJacobianMatchesFiniteDifferences(self, Transform):
        Frame = BuildFrame([4, 5, 3, 6, 5], Seed=21, Types=["a", "b", "a", "b", "a"])
        Frame.loc[[2, 7], "y1"] = np.nan
        Design = BuildDesign(Sample.FromFrame(Frame))
        Spec = MomentSpec.Build(Design, np.ones((Design.NumRows, 1)), Transform=Transform)
        Rng = np.random.default_rng(5)
        for _ in range(25):
            Theta = ParamTheta(Rng.uniform(-0.6, 0.6), Rng.uniform(0.5, 1.5), Rng.normal(size=Design.NumCovariates))
            Gamma = VarGamma(Rng.uniform(0.5, 2.0, size=2))
            Analytic = GradientG(Design, Spec, Theta, Gamma)
            Numeric = _FiniteDifference(Design, Spec, Theta, Gamma)
            assert np.linalg.norm(Analytic - Numeric) <= 1e-6 * np.linalg.norm(Analytic)


class TestWeightXi:
    def TestConstantInstrument(self):
        Xi = WeightXi(_Spec(np.ones((10, 1)), [5, 5]))
        assert Xi[0, 0] == pytest.approx(1.0)
        assert Xi[0, 1] == 0.0

    def TestSingleClassroomQuadraticEntry(self):
        Xi = WeightXi(_Spec(np.ones((3, 1)), [3]))
        assert Xi[1, 1] == pytest.approx(1.0)

    def TestUnequalClassrooms(self):
        Spec = _Spec(np.ones((6, 1)), [2, 4])
        assert Spec.TraceA2 == pytest.approx(2.0 + 4.0 / 3.0)

    def TestRankDeficientInstruments(self):
        H = np.column_stack([np.ones(6), 2.0 * np.ones(6)])
        with pytest.raises(CollinearityError):
            WeightXi(_Spec(H, [3, 3]))


class TestSandwich:
    def TestEfficientCaseSimplifies(self):
        Rng = np.random.default_rng(2)
        G = Rng.normal(size=(4, 3))
        Root = Rng.normal(size=(4, 4))
        Xi = Root @ Root.T + 4.0 * np.eye(4)
        np.testing.assert_allclose(SandwichPsi(G, Xi, Xi), SandwichPsi(G, Xi), atol=1e-10)
        np.testing.assert_allclose(SandwichPsi(G, Xi), np.linalg.inv(G.T @ np.linalg.solve(Xi, G)), atol=1e-10)

    def TestScalarCase(self):
        assert SandwichPsi(np.array([[2.0]]), np.array([[3.0]]), np.array([[5.0]]))[0, 0] == pytest.approx(5.0 / 4.0)

    def TestSingularInformation(self):
        G = np.array([[1.0, 0.0], [2.0, 0.0]])
        with pytest.raises(IdentificationError):
            SandwichPsi(G, np.eye(2))

    def TestModelImpliedMatchesWeight(self, SmallDesign):
        Spec = MomentSpec.Build(SmallDesign, np.ones((SmallDesign.NumRows, 1)))
        Gamma = VarGamma([1.7])
        np.testing.assert_allclose(ModelImpliedV(SmallDesign, Spec, Gamma, Gamma), WeightXi(Spec), atol=1e-12)


class TestClusteredV:
    def TestSingleClassroom(self):
        Rng = np.random.default_rng(9)
        U = Rng.normal(size=6)
        H = np.column_stack([np.ones(6), Rng.normal(size=6)])
        Design = SyntheticDesign([6], U)
        Spec = _Spec(H, [6])
        V = ClusteredV(Design, Spec, U)
        Linear = H.T @ U
        Quadratic = Spec.A.QuadForm(U, U)
        np.testing.assert_allclose(V[:2, :2], np.outer(Linear, Linear) / 6.0, atol=1e-12)
        assert V[2, 2] == pytest.approx(Quadratic ** 2 / 6.0)
        np.testing.assert_allclose(V[:2, 2], 0.0)

    def TestDuplicatedClassroomsLeaveVUnchanged(self):
        Rng = np.random.default_rng(10)
        Sizes = [3, 5, 4]
        U = Rng.normal(size=12)
        H = np.column_stack([np.ones(12), Rng.normal(size=12)])
        Once = ClusteredV(SyntheticDesign(Sizes, U), _Spec(H, Sizes), U)
        Twice = ClusteredV(SyntheticDesign(Sizes * 2, np.tile(U, 2)), _Spec(np.vstack([H, H]), Sizes * 2),
                           np.tile(U, 2))
        np.testing.assert_allclose(Twice, Once, atol=1e-12)

    def TestHomoskedasticLimit(self):
        Sizes = [5] * 20000
        Rng = np.random.default_rng(11)
        U = Rng.normal(size=100000)
        H = np.column_stack([np.ones(100000), Rng.normal(size=100000)])
        Spec = _Spec(H, Sizes)
        V = ClusteredV(SyntheticDesign(Sizes, U), Spec, U)
        Xi = WeightXi(Spec)
        assert np.linalg.norm(V - Xi) / np.linalg.norm(Xi) < 0.06


class TestLambda:
    def TestConversions(self):
        assert LambdaOfRho(0.0)[0] == 0.0
        assert LambdaOfRho(0.424)[0] == pytest.approx(0.2978, abs=1e-4)
        assert RhoOfLambda(0.85) == pytest.approx(5.667, abs=1e-3)

    def TestDeltaMethod(self):
        Lambda, Se = LambdaOfRho(0.5, 0.09)
        assert Lambda == pytest.approx(1.0 / 3.0)
        assert Se == pytest.approx(0.04)

    def TestOutsideDomain(self):
        with pytest.raises(ParameterBoundsError):
            LambdaOfRho(-1.0)
        with pytest.raises(ParameterBoundsError):
            RhoOfLambda(1.0)


class TestComputeInference:
    def TestEfficientReport(self, Fitted):
        Report = ComputeInference(Fitted)
        assert Report.CovarianceType == "efficient"
        np.testing.assert_allclose(Report.Vcov, Report.Vcov.T)
        assert np.all(np.linalg.eigvalsh(Report.Vcov) > -1e-10)
        np.testing.assert_allclose(Report.Se, np.sqrt(np.diag(Report.Vcov) / Fitted.Design.NumRows))
        assert Report.Labels[:2] == ["rho", "f1"]
        assert len(Report.AsTable()) == Fitted.ThetaHat.Size
        Lower, Upper = Report.ConfidenceInterval(0)
        assert Lower < Fitted.ThetaHat.Rho < Upper
        assert set(Report.RankCorrs) == {"y1_y2", "qx_y1_qx_y2"}

    def TestClusteredReport(self, Fitted):
        Report = ComputeInference(Fitted, ClusterSe=True)
        assert Report.CovarianceType == "clustered"
        assert np.all(Report.Se > 0)

    def TestLambdaUsesRhoStandardError(self, Fitted):
        Report = ComputeInference(Fitted)
        Rho = Fitted.ThetaHat.Rho
        assert Report.Lambda == pytest.approx(Rho / (1.0 + Rho))
        assert Report.SeLambda == pytest.approx(Report.Se[0] / (1.0 + Rho) ** 2)

    def TestPseudoR2PerGroup(self, Fitted):
        Report = ComputeInference(Fitted)
        assert set(Report.PseudoR2) == set(Fitted.Design.TypeLabels)
        assert all(Value < 1.0 for Value in Report.PseudoR2.values())


def _WithinThreeStandardErrors(Draws):
    Mean = Draws.mean(axis=0)
    StandardError = Draws.std(axis=0, ddof=1) / np.sqrt(Draws.shape[0])
    return np.abs(Mean) <= 3.0 * StandardError


@pytest.fixture(scope="module")
def MomentsAtTruth():
    """Per-replication moment vector and linear/quadratic cross term at the true parameters"""
    Config = DgpConfig(num_classrooms=30, seed=91)
    Moments, Cross = [], []
    for Replication in range(200):
        Data, Truth = SimulateSample(Config, ReplicationSeed(Config.seed, Replication))
        Design = BuildDesign(Data)
        Spec = MomentSpec.Build(Design, np.ones((Design.NumRows, 1)))
        U = ResidualAndDerivatives(Design, Truth.Theta0, Truth.Gamma0)[0]
        Moments.append(MomentVector(Design, Spec, Truth.Theta0, Truth.Gamma0, U))
        Linear = np.asarray(Design.Layout.Indicator.T @ (Spec.H * U[:, None]))
        Quadratic = Spec.A.BlockQuadForms(U, U)
        Cross.append(Linear.T @ Quadratic / Design.NumRows)
    return np.array(Moments), np.array(Cross)


class TestMomentsAtTruth:
    def TestLinearMomentsCentered(self, MomentsAtTruth):
        Moments, _ = MomentsAtTruth
        assert np.all(_WithinThreeStandardErrors(Moments[:, :-1]))

    def TestQuadraticMomentCentered(self, MomentsAtTruth):
        Moments, _ = MomentsAtTruth
        assert _WithinThreeStandardErrors(Moments[:, -1:])[0]

    def TestCrossBlockCentered(self, MomentsAtTruth):
        _, Cross = MomentsAtTruth
        assert np.all(_WithinThreeStandardErrors(Cross))


class TestEfficiencyOrdering:
    def TestEfficientWeightingShrinksVariance(self):
        Data, Truth = SimulateSample(DgpConfig(num_classrooms=300, type_scales=[3.0, 1.0], seed=44))
        Design = BuildDesign(Data)
        Spec = MomentSpec.Build(Design, np.ones((Design.NumRows, 1)))
        Xi = WeightXi(Spec)
        Ones = VarGamma.Ones(Design.NumTypes)
        Efficient = SandwichPsi(GradientG(Design, Spec, Truth.Theta0, Truth.Gamma0), Xi)
        Inefficient = SandwichPsi(GradientG(Design, Spec, Truth.Theta0, Ones), Xi,
                                  ModelImpliedV(Design, Spec, Ones, Truth.Gamma0))
        assert np.trace(Efficient[:2, :2]) <= np.trace(Inefficient[:2, :2])
