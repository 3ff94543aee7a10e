#!/usr/bin/env python3
"""
File: conftest.py
Path: ClassroomPeers/Tests/conftest.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Shared pytest fixtures for ClassroomPeers

Purpose: Small hand-built classroom frames, seeded simulated samples and
the --runslow switch for the Monte Carlo acceptance runs.
"""

import pytest

from Source.Core.Configuration import DgpConfig, EstimatorConfig
from Source.Core.Model import BuildDesign, Sample
from Source.Simulation.DataGenerator import SimulateSample
from Tests.Builders import BuildFrame


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    Skip = pytest.mark.skip(reason="needs --runslow")
    for Item in items:
        if "slow" in Item.keywords:
            Item.add_marker(Skip)


@pytest.fixture
def SmallSample() -> Sample:
    return Sample.FromFrame(BuildFrame([3, 4, 5, 2, 6], Seed=11))


@pytest.fixture
def SmallDesign(SmallSample):
    return BuildDesign(SmallSample)


@pytest.fixture(scope="session")
def SimulatedPair():
    """(Sample, TruthRecord) from a 150-classroom draw"""
    return SimulateSample(DgpConfig(num_classrooms=150, seed=2024))


@pytest.fixture
def FastEstimator() -> EstimatorConfig:
    return EstimatorConfig(grid_points=128)
