#!/usr/bin/env python3
"""
File: TestDiagnostics.py
Path: ClassroomPeers/Tests/Unit/TestDiagnostics.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Fit statistics, rank correlations and identification checks
"""

import numpy as np
import pytest

from Source.Core.Configuration import EstimatorConfig
from Source.Core.Model import BuildDesign, ParamTheta, VarGamma
from Source.Estimation.Diagnostics import (
    DescriptiveStatistics,
    IdentificationReport,
    PopulationQuadraticMoment,
    PseudoR2,
    QxStatistics,
    RankCorrelations,
    RunDiagnostics,
    SampleQuadraticMoment,
    SpearmanCorrelation,
)
from Source.Estimation.FirstStep import FirstStepFDelta, FirstStepRho


@pytest.fixture(scope="module")
def Diagnosed(SimulatedPair):
    Data, _ = SimulatedPair
    return RunDiagnostics(Data, EstimatorConfig(grid_points=128))


class TestFitStatistics:
    def TestPseudoR2WithoutPeersOrCovariates(self, SmallDesign):
        Theta = ParamTheta(0.0, 0.8, np.zeros(SmallDesign.NumCovariates))
        Result = PseudoR2(SmallDesign, Theta)
        assert list(Result) == ["regular"]
        assert Result["regular"] == pytest.approx(0.0, abs=1e-12)

    def TestSpearmanExtremes(self):
        Values = np.array([3.0, 1.0, 4.0, 1.5, 9.0])
        assert SpearmanCorrelation(Values, 2.0 * Values + 1.0) == pytest.approx(1.0)
        assert SpearmanCorrelation(Values, -Values) == pytest.approx(-1.0)

    def TestSpearmanConstantInput(self):
        assert np.isnan(SpearmanCorrelation(np.ones(4), np.arange(4.0)))

    def TestSpearmanMonotoneInvariance(self):
        Rng = np.random.default_rng(3)
        First, Second = Rng.normal(size=50), Rng.normal(size=50)
        assert SpearmanCorrelation(np.exp(First), Second ** 3) == pytest.approx(SpearmanCorrelation(First, Second))

    def TestRankCorrelationKeys(self, SmallDesign):
        Result = RankCorrelations(SmallDesign)
        assert set(Result) == {"y1_y2", "qx_y1_qx_y2"}
        assert all(-1.0 <= Value <= 1.0 for Value in Result.values())

    def TestQxStatistics(self, SmallDesign):
        Result = QxStatistics(SmallDesign, 1.0)
        assert set(Result) == {"sd_qx_y1", "sd_qx_y2", "sd_qx_quasi_difference"}
        assert all(Value > 0 for Value in Result.values())

    def TestDescriptiveStatistics(self, SmallSample):
        Table = DescriptiveStatistics(SmallSample)
        assert list(Table["variable"][:2]) == ["y1", "y2"]
        Counts = Table.set_index("variable")["observed"]
        assert Counts["students"] == SmallSample.NumStudents
        assert Counts["classrooms"] == 5
        assert Counts["y1"] == SmallSample.NumStudents


class TestPopulationQuadraticMoment:
    Sizes = [2, 3, 5, 8]

    def TestVanishesAtTruth(self):
        assert PopulationQuadraticMoment(self.Sizes, 0.35, 0.35) == pytest.approx(0.0, abs=1e-12)

    def TestDecreasingInRho(self):
        Grid = np.linspace(-0.9, 0.9, 37)
        Values = np.array([PopulationQuadraticMoment(self.Sizes, Rho, 0.2) for Rho in Grid])
        assert np.all(np.diff(Values) < 0)
        assert Values[0] > 0 > Values[-1]

    def TestVarianceGroupsKeepRoot(self):
        Types = np.array([0, 1, 0, 1])
        Value = PopulationQuadraticMoment(self.Sizes, -0.3, -0.3, Types=Types, Gamma=VarGamma([1.0, 2.0]),
                                          Gamma0=VarGamma([1.5, 0.5]))
        assert Value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("AChoice", ["M", "MtM"])
    def TestRootIsIsolated(self, AChoice):
        Rng = np.random.default_rng(17)
        Sizes = Rng.integers(2, 9, size=12)
        Types = Rng.integers(0, 2, size=12)
        for _ in range(10):
            Rho0 = Rng.uniform(-0.8, 0.8)
            Gamma, Gamma0 = VarGamma(Rng.uniform(0.5, 2.0, 2)), VarGamma(Rng.uniform(0.5, 2.0, 2))
            Options = dict(AChoice=AChoice, Types=Types, Gamma=Gamma, Gamma0=Gamma0)
            assert abs(PopulationQuadraticMoment(Sizes, Rho0, Rho0, **Options)) < 1e-10
            for Rho in np.linspace(-0.95, 0.95, 20):
                if abs(Rho - Rho0) > 1e-3:
                    Value = PopulationQuadraticMoment(Sizes, Rho, Rho0, **Options)
                    assert abs(Value) > 1e-4 * abs(Rho - Rho0)


class TestIdentificationReport:
    def TestSmallDesignPasses(self, SmallDesign):
        Checks = IdentificationReport(SmallDesign, np.ones(SmallDesign.NumRows), EstimatorConfig())
        Names = [Check["check"] for Check in Checks]
        assert Names == ["min_class_size", "a_zero_diagonal", "a_mean_positive", "xtx_eigen_ratio",
                         "instrument_strength", "min_type_count", "rho_population_sign_changes",
                         "rho_sample_root_bracket"]
        Passed = {Check["check"]: Check["passed"] for Check in Checks}
        assert Passed["min_class_size"] and Passed["a_zero_diagonal"] and Passed["rho_population_sign_changes"]

    def TestSimulatedDataPasses(self, Diagnosed):
        assert all(Check["passed"] for Check in Diagnosed.Identification)

    def TestSampleRootMustBracketFirstStepRho(self, SimulatedPair):
        Design = BuildDesign(SimulatedPair[0])
        Z = np.ones((Design.NumRows, 1))
        First = FirstStepFDelta(Design, Z)
        RhoTilde = FirstStepRho(Design, First.F1, First.Delta, GridPoints=128).Rho

        def Bracket(Rho):
            Checks = IdentificationReport(Design, Z, EstimatorConfig(), RhoTilde, First, Rho)
            return next(Check for Check in Checks if Check["check"] == "rho_sample_root_bracket")

        assert Bracket(RhoTilde)["passed"]
        assert Bracket(RhoTilde)["value"] == 1
        assert not Bracket(RhoTilde - 0.5)["passed"]

    def TestSampleMomentDecreasing(self, SimulatedPair):
        Design = BuildDesign(SimulatedPair[0])
        First = FirstStepFDelta(Design, np.ones((Design.NumRows, 1)))
        Grid = np.linspace(-0.9, 0.9, 19)
        Values = [SampleQuadraticMoment(Design, First.F1, First.Delta, Rho) for Rho in Grid]
        assert np.all(np.diff(Values) < 0)


class TestRunDiagnostics:
    def TestReversedFirstStepIsReciprocal(self, Diagnosed):
        assert Diagnosed.ReversedF1 == pytest.approx(1.0 / Diagnosed.ThetaTilde.F1, rel=1e-10)

    def TestReportContents(self, Diagnosed):
        assert Diagnosed.GammaTilde is not None
        assert Diagnosed.Labels[:2] == ["rho", "f1"]
        assert len(Diagnosed.Labels) == Diagnosed.ThetaTilde.Size
        assert set(Diagnosed.TwoStageR2) == {"y1", "y2"}
        assert abs(Diagnosed.ThetaTilde.Rho) < 0.99
