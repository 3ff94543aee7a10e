#!/usr/bin/env python3
"""
File: TestEfficientGmm.py
Path: ClassroomPeers/Tests/Unit/TestEfficientGmm.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Moment conditions, efficient GMM and the two-step pipeline
"""

from dataclasses import replace

import numpy as np
import pytest

from Source.Core.BlockMatrix import BuildOperator
from Source.Core.Configuration import DgpConfig, EstimatorConfig
from Source.Core.Errors import DegenerateVarianceError, IdentificationError, WeakInstrumentError
from Source.Core.Model import BuildDesign, ParamTheta, VarGamma
from Source.Estimation.EfficientGMM import (
    CriterionQn,
    EfficientGmm,
    EstimateFromDesign,
    EstimatePipeline,
    EstimateReversed,
    LinearMomentEstimate,
    MomentSpec,
    ScaledGradient,
)
from Source.Estimation.FirstStep import FirstStepFDelta
from Source.Simulation.DataGenerator import ReplicationSeed, SimulateSample


@pytest.fixture(scope="module")
def SimulatedFit(SimulatedPair):
    Data, Truth = SimulatedPair
    return EstimatePipeline(Data, EstimatorConfig(grid_points=256)), Truth


class TestMomentSpec:
    def TestTraceOfSquare(self, SmallDesign):
        Spec = MomentSpec.Build(SmallDesign, np.ones((SmallDesign.NumRows, 1)))
        Expected = float(np.sum(SmallDesign.Sizes / (SmallDesign.Sizes - 1.0)))
        assert Spec.TraceA2 == pytest.approx(Expected)
        assert Spec.NumMoments == SmallDesign.NumCovariates + 2
        assert Spec.HLabels[-1] == "const"

    def TestRejectsNonzeroDiagonal(self, SmallDesign):
        Spec = MomentSpec.Build(SmallDesign, np.ones((SmallDesign.NumRows, 1)))
        Shifted = replace(Spec, A=BuildOperator("I_plus_rhoM", SmallDesign.Sizes, Rho=0.1))
        with pytest.raises(IdentificationError):
            Shifted.Validate()


class TestLinearMoments:
    def TestReproducesFirstStepAtZeroRho(self, SmallDesign):
        Z = np.ones((SmallDesign.NumRows, 1))
        Spec = MomentSpec.Build(SmallDesign, Z)
        First = FirstStepFDelta(SmallDesign, Z)
        Theta = LinearMomentEstimate(SmallDesign, Spec, 0.0)
        assert Theta.F1 == pytest.approx(First.F1, rel=1e-9)
        np.testing.assert_allclose(Theta.Delta, First.Delta, rtol=1e-8, atol=1e-9)

    def TestClosedFormPath(self, SmallDesign):
        Z = np.ones((SmallDesign.NumRows, 1))
        Spec = MomentSpec.Build(SmallDesign, Z)
        Start = ParamTheta(0.3, 1.0, np.zeros(SmallDesign.NumCovariates))
        Result = EfficientGmm(SmallDesign, Spec, VarGamma.Ones(1), Start, FixedRho=0.0, IncludeQuadratic=False)
        assert Result.Method == "linear-closed-form"
        assert Result.ThetaHat.Rho == 0.0
        assert Result.MomentNorm == pytest.approx(0.0, abs=1e-8)
        assert Result.ThetaHat.F1 == pytest.approx(FirstStepFDelta(SmallDesign, Z).F1, rel=1e-9)


class TestEfficientGmm:
    def TestConvergesToRoot(self, SimulatedFit):
        Result, _ = SimulatedFit
        assert Result.Converged
        assert Result.Method.endswith("Gauss-Newton")
        assert Result.QnAtMin < 1e-8
        assert not Result.Boundary

    def TestCloseToTruth(self, SimulatedFit):
        Result, Truth = SimulatedFit
        assert Result.ThetaHat.Rho == pytest.approx(Truth.Theta0.Rho, abs=0.2)
        assert Result.ThetaHat.F1 == pytest.approx(Truth.Theta0.F1, abs=0.1)

    def TestRecordsBothSteps(self, SimulatedFit):
        Result, _ = SimulatedFit
        assert Result.ThetaTilde is not None
        assert Result.FirstStep.F1 == Result.ThetaTilde.F1
        assert Result.GammaUsed.Gamma.shape == Result.GammaHat.Gamma.shape
        assert Result.JStatistic == pytest.approx(Result.Design.NumRows * Result.QnAtMin)

    def TestCriterionLargerAwayFromEstimate(self, SimulatedFit):
        Result, _ = SimulatedFit
        Theta = Result.ThetaHat
        Moved = ParamTheta(Theta.Rho - 0.2, Theta.F1, Theta.Delta)
        assert CriterionQn(Result.Design, Result.Spec, Moved, Result.GammaUsed) > \
            CriterionQn(Result.Design, Result.Spec, Theta, Result.GammaUsed)

    def TestReversalInvertsF1(self, SimulatedPair, SimulatedFit):
        Data, _ = SimulatedPair
        Forward, _ = SimulatedFit
        Backward = EstimateReversed(Data, EstimatorConfig(grid_points=256))
        assert Backward.ThetaHat.F1 == pytest.approx(1.0 / Forward.ThetaHat.F1, abs=1e-6)
        assert Backward.ThetaHat.Rho == pytest.approx(Forward.ThetaHat.Rho, abs=1e-6)

    def TestScaleEquivariance(self, SimulatedPair, SimulatedFit):
        Data, _ = SimulatedPair
        Base, _ = SimulatedFit
        Scaled = EstimatePipeline(Data.Rescaled(3.0), EstimatorConfig(grid_points=256))
        assert Scaled.ThetaHat.Rho == pytest.approx(Base.ThetaHat.Rho, abs=1e-6)
        assert Scaled.ThetaHat.F1 == pytest.approx(Base.ThetaHat.F1, abs=1e-6)
        np.testing.assert_allclose(Scaled.ThetaHat.Delta, 3.0 * Base.ThetaHat.Delta, rtol=1e-5, atol=1e-6)

    def TestSingleVarianceGroup(self):
        Data, _ = SimulateSample(DgpConfig(num_classrooms=80, num_types=1, seed=31))
        Result = EstimatePipeline(Data, EstimatorConfig(grid_points=128))
        assert Result.GammaHat.NumTypes == 1
        assert Result.Converged

    def TestInefficientWeighting(self, SimulatedPair):
        Data, _ = SimulatedPair
        Result = EstimatePipeline(Data, EstimatorConfig(grid_points=128, efficient=False))
        np.testing.assert_allclose(Result.GammaUsed.Gamma, 1.0)
        assert not np.allclose(Result.GammaHat.Gamma, 1.0)

    def TestScaledGradientNormalization(self):
        assert ScaledGradient(np.array([2.0, 0.5]), np.array([0.1, 4.0]), 0.5) == pytest.approx(2.0)
        assert ScaledGradient(np.array([2.0, 0.5]), np.array([0.1, 4.0]), 4.0) == pytest.approx(0.5)


class TestPipelineStages:
    def TestWeakInstrumentStage(self, SmallDesign):
        Design = replace(SmallDesign, Y2=SmallDesign.X @ np.ones(SmallDesign.NumCovariates))
        with pytest.raises(WeakInstrumentError) as Raised:
            EstimateFromDesign(Design, EstimatorConfig(grid_points=64))
        assert Raised.value.Stage == "first_step_f_delta"

    def TestDegenerateVarianceKeepsFirstStep(self, SmallSample):
        Design = BuildDesign(SmallSample)
        Design = replace(Design, Y1=Design.Y2.copy())
        with pytest.raises(DegenerateVarianceError) as Raised:
            EstimateFromDesign(Design, EstimatorConfig(grid_points=64))
        assert Raised.value.Stage == "gamma_hat"
        assert Raised.value.Details["partial"]["f1_tilde"] == pytest.approx(1.0)
        assert Raised.value.ExitCode == 3


class TestCriterionAtTruth:
    def TestTruthBeatsPerturbedParameters(self):
        Config = DgpConfig(num_classrooms=60, seed=77)
        Replications = 200
        Wins = np.zeros(2, dtype=int)
        for Replication in range(Replications):
            Data, Truth = SimulateSample(Config, ReplicationSeed(Config.seed, Replication))
            Design = BuildDesign(Data)
            Spec = MomentSpec.Build(Design, np.ones((Design.NumRows, 1)))
            Theta0 = Truth.Theta0
            AtTruth = CriterionQn(Design, Spec, Theta0, Truth.Gamma0)
            Moved = [ParamTheta(Theta0.Rho - 0.5, Theta0.F1, Theta0.Delta),
                     ParamTheta(Theta0.Rho, Theta0.F1 + 0.1, Theta0.Delta)]
            Wins += [CriterionQn(Design, Spec, Theta, Truth.Gamma0) > AtTruth for Theta in Moved]
        assert np.all(Wins >= 0.95 * Replications)
