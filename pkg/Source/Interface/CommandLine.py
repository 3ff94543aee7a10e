#!/usr/bin/env python3
"""
File: CommandLine.py
Path: ClassroomPeers/Source/Interface/CommandLine.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Command line surface of ClassroomPeers

Purpose: Parses the estimate / simulate / montecarlo / diagnose commands,
merges config file, environment and flags into a RunConfig, runs the
command and maps failures to exit codes (0 success, 2 validation,
3 identification, 4 non-convergence).

Usage: python ClassroomPeers.py [command] [options]
Commands: estimate, simulate, montecarlo, diagnose
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from ..Core.Configuration import ConfigurationManager, DgpConfig, EstimatorConfig
from ..Core.Errors import (
    EXIT_SUCCESS,
    EXIT_VALIDATION,
    ConfigurationError,
    NonConvergenceError,
    PeerEffectsError,
)
from ..Core.Logger import ConfigureLogging, GetLogger
from ..Estimation.Diagnostics import RunDiagnostics
from ..Estimation.EfficientGMM import EstimatePipeline
from ..Estimation.Inference import ComputeInference
from ..Simulation.DataGenerator import SimulateSample
from ..Simulation.MonteCarlo import MonteCarlo
from .DataIngest import Ingest, WriteSampleCsv
from .Reports import (
    AtomicWrite,
    BuildEstimateReport,
    EstimateReport,
    PartialEstimateReport,
    RenderTable,
    WriteJson,
    WriteTsv,
)

Log = GetLogger("CommandLine")

FORMATS = ["json", "tsv", "table"]


class RunConfig(BaseModel):
    """One fully resolved invocation"""

    model_config = ConfigDict(arbitrary_types_allowed=True, extra="forbid")

    Command: Literal["estimate", "simulate", "montecarlo", "diagnose"]
    Estimator: EstimatorConfig
    Dgp: DgpConfig
    Input: Optional[Path] = None
    OutDir: Path = Path("output")
    Format: Literal["json", "tsv", "table"] = "table"
    Reps: int = 100
    Jobs: int = 1
    Reversed: bool = False
    ErrorJson: bool = False

    @model_validator(mode="after")
    def _CheckInput(self) -> "RunConfig":
        if self.Command in ("estimate", "diagnose"):
            if self.Input is None:
                raise ValueError(f"'{self.Command}' needs --input")
            if not self.Input.exists():
                raise ValueError(f"input file {self.Input} does not exist")
        if self.Command == "montecarlo" and self.Reps < 2:
            raise ValueError("--reps must be at least 2")
        return self


def CreateArgumentParser() -> argparse.ArgumentParser:
    """Create command line argument parser"""
    Parser = argparse.ArgumentParser(
        prog="ClassroomPeers",
        description="Peer effects from paired test scores by quasi-differenced GMM",
    )
    Parser.add_argument("--config", help="Configuration JSON (overrides --env)")
    Parser.add_argument("--env", help="Reads Config/<Env>/config.json (default development)")
    Parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    Parser.add_argument("--error-json", action="store_true", help="Write error.json on failure")
    Parser.add_argument("--out", default="output", help="Output directory")
    Parser.add_argument("--format", choices=FORMATS, default="table", help="Extra report format")

    # accepted after the command too; SUPPRESS keeps the top-level value when absent
    FormatParent = argparse.ArgumentParser(add_help=False)
    FormatParent.add_argument("--format", choices=FORMATS, default=argparse.SUPPRESS,
                              help="Extra report format")

    Subparsers = Parser.add_subparsers(dest="command", help="Available commands")

    def AddEstimatorFlags(Sub: argparse.ArgumentParser) -> None:
        Sub.add_argument("--fe", action="append", choices=["school", "classtype"], help="Fixed effects")
        Sub.add_argument("--a-choice", choices=["M", "MtM"], help="Quadratic-moment operator")
        Sub.add_argument("--instrument", help="const or col:<name>")
        Sub.add_argument("--het-by", help="Column defining variance groups")
        Sub.add_argument("--missing-policy", choices=["adjusted", "drop_classroom", "fail"])
        Sub.add_argument("--missing-transform", choices=["omega_obs", "restricted"],
                         help="Whitening of classrooms with missing rows: omega_obs (default, exact covariance of "
                              "the observed rows) or restricted (Omega(gamma) on observed rows, for sensitivity)")
        Sub.add_argument("--cluster-se", action="store_true", default=None, help="Classroom-clustered SEs")

    def AddDgpFlags(Sub: argparse.ArgumentParser) -> None:
        Sub.add_argument("--seed", type=int, help="Master seed")
        Sub.add_argument("--rho0", type=float, help="True rho")
        Sub.add_argument("--classrooms", type=int, help="Number of classrooms")
        Sub.add_argument("--selection", choices=["random", "sorted_by_kappa", "school_stratified"])
        Sub.add_argument("--missing-rate", type=float, help="MCAR masking probability")

    EstimateParser = Subparsers.add_parser("estimate", parents=[FormatParent],
                                           help="Estimate peer effects from a CSV file")
    EstimateParser.add_argument("--input", required=True, help="Input CSV")
    EstimateParser.add_argument("--reversed", action="store_true", help="Swap y1 and y2")
    AddEstimatorFlags(EstimateParser)

    SimulateParser = Subparsers.add_parser("simulate", parents=[FormatParent],
                                           help="Write a synthetic CSV sample")
    AddDgpFlags(SimulateParser)

    MonteParser = Subparsers.add_parser("montecarlo", parents=[FormatParent],
                                        help="Run Monte Carlo replications")
    MonteParser.add_argument("--reps", type=int, default=100, help="Replications")
    MonteParser.add_argument("--jobs", type=int, default=1, help="Parallel workers")
    AddDgpFlags(MonteParser)
    AddEstimatorFlags(MonteParser)

    DiagnoseParser = Subparsers.add_parser("diagnose", parents=[FormatParent],
                                           help="First-step diagnostics for a CSV file")
    DiagnoseParser.add_argument("--input", required=True, help="Input CSV")
    AddEstimatorFlags(DiagnoseParser)
    return Parser


def BuildRunConfig(Arguments: argparse.Namespace, Manager: ConfigurationManager) -> RunConfig:
    Get = lambda Name: getattr(Arguments, Name, None)  # noqa: E731
    Estimator = Manager.WithEstimatorOverrides(
        fixed_effects=Get("fe"),
        a_choice=Get("a_choice"),
        instrument=Get("instrument"),
        het_by=Get("het_by"),
        missing_policy=Get("missing_policy"),
        missing_transform=Get("missing_transform"),
        cluster_se=Get("cluster_se"),
    )
    Dgp = Manager.WithDgpOverrides(
        seed=Get("seed"),
        rho0=Get("rho0"),
        num_classrooms=Get("classrooms"),
        selection=Get("selection"),
        missing_rate=Get("missing_rate"),
    )
    try:
        return RunConfig(
            Command=Arguments.command,
            Estimator=Estimator,
            Dgp=Dgp,
            Input=Path(Arguments.input) if Get("input") else None,
            OutDir=Path(Arguments.out),
            Format=Arguments.format,
            Reps=Get("reps") or 100,
            Jobs=Get("jobs") or 1,
            Reversed=bool(Get("reversed")),
            ErrorJson=bool(Arguments.error_json),
        )
    except ValidationError as Error:
        raise ConfigurationError(f"Invalid command line: {Error}") from Error


# ===== COMMANDS =====

def EmitEstimateReport(Report: EstimateReport, Config: RunConfig) -> None:
    WriteJson(Config.OutDir / "estimate.json", Report.ToDict())
    if Config.Format == "tsv":
        WriteTsv(Config.OutDir / "estimate.tsv", Report.ParameterFrame())
    Text = Report.RenderText()
    if Config.Format == "table":
        AtomicWrite(Config.OutDir / "estimate.txt", Text + "\n")
    print(Text)


def RunEstimate(Config: RunConfig) -> int:
    Ingested = Ingest(Config.Input, HetBy=Config.Estimator.het_by, HetTypes=Config.Estimator.het_types)
    Data = Ingested.Sample.Swapped() if Config.Reversed else Ingested.Sample
    print(f"🚀 Estimating on {Data.NumStudents} students in {Data.NumClassrooms} classrooms")
    try:
        Result = EstimatePipeline(Data, Config.Estimator)
    except PeerEffectsError as Error:
        if Error.Details.get("partial"):
            print("⚠️ Estimation stopped early; writing the first-step estimates")
            EmitEstimateReport(PartialEstimateReport(Error, Config.Estimator), Config)
        raise
    try:
        Inference = ComputeInference(Result, Config.Estimator.cluster_se)
    except PeerEffectsError as Error:
        Error.Stage = Error.Stage or "inference"
        raise
    EmitEstimateReport(BuildEstimateReport(Result, Inference, Config.Estimator), Config)

    if not Result.Converged:
        raise NonConvergenceError(f"Efficient GMM did not converge (scaled gradient {Result.ScaledGradient:.3g})",
                                  Stage="efficient_gmm")
    print(f"✅ rho = {Result.ThetaHat.Rho:.3f}, f1 = {Result.ThetaHat.F1:.3f}; report in {Config.OutDir}")
    return EXIT_SUCCESS


def RunSimulate(Config: RunConfig) -> int:
    Data, Truth = SimulateSample(Config.Dgp)
    CsvPath = WriteSampleCsv(Data, Config.OutDir / "simulated.csv")
    WriteJson(Config.OutDir / "truth.json", {
        "rho0": Truth.Theta0.Rho,
        "f10": Truth.Theta0.F1,
        "delta0": dict(zip(Truth.DeltaLabels, Truth.Theta0.Delta.tolist())),
        "gamma0": Truth.Gamma0.Gamma.tolist(),
        "scale": Truth.Scale,
        "offset": Truth.Offset,
        "sigma1": Truth.Sigma1,
        "sigma2": Truth.Sigma2,
        "seed": Config.Dgp.seed,
    })
    print(f"✅ Simulated {Data.NumStudents} students in {Data.NumClassrooms} classrooms -> {CsvPath}")
    return EXIT_SUCCESS


def RunMonteCarlo(Config: RunConfig) -> int:
    print(f"🚀 Monte Carlo: {Config.Reps} replications on {Config.Jobs} worker(s)")
    Summary = MonteCarlo(Config.Dgp, Config.Reps, Config.Estimator, Jobs=Config.Jobs)
    WriteTsv(Config.OutDir / "mc_summary.tsv", Summary.Summary)
    WriteJson(Config.OutDir / "mc_summary.json", {**Summary.ToDict(), "dgp": Config.Dgp.model_dump(),
                                                  "estimator": Config.Estimator.model_dump()})
    WriteTsv(Config.OutDir / "mc_replications.tsv", Summary.Replications)
    print(RenderTable(Summary.Summary.to_dict(orient="records"), Title="Monte Carlo summary"))
    print(f"📊 {Summary.NumReplications - Summary.NumFailed} successful, {Summary.NumFailed} failed, "
          f"{Summary.NumNotConverged} not converged")
    return EXIT_SUCCESS


def RunDiagnose(Config: RunConfig) -> int:
    Ingested = Ingest(Config.Input, HetBy=Config.Estimator.het_by, HetTypes=Config.Estimator.het_types)
    Report = RunDiagnostics(Ingested.Sample, Config.Estimator)
    Payload: Dict[str, Any] = {
        "theta_tilde": dict(zip(Report.Labels, Report.ThetaTilde.ToVector().tolist())),
        "gamma_tilde": Report.GammaTilde.Gamma.tolist() if Report.GammaTilde is not None else None,
        "reversed_f1": Report.ReversedF1,
        "pseudo_r2": Report.PseudoR2,
        "rank_correlations": Report.RankCorrs,
        "qx_statistics": Report.QxStats,
        "two_stage_pseudo_r2": Report.TwoStageR2,
        "descriptives": Report.Descriptives,
        "identification": Report.Identification,
        "ingest": Ingested.Report,
    }
    WriteJson(Config.OutDir / "diagnose.json", Payload)
    if Config.Format == "tsv":
        WriteTsv(Config.OutDir / "descriptives.tsv", Report.Descriptives)
    Blocks = [
        RenderTable(Report.Descriptives.to_dict(orient="records"), Title="Descriptive statistics"),
        RenderTable([{"statistic": Key, "value": Value} for Key, Value in
                     {**Report.RankCorrs, **Report.QxStats,
                      **{f"2sls_r2_{Key}": Value for Key, Value in Report.TwoStageR2.items()}}.items()],
                    Title="Rank correlations and Q_X statistics"),
        RenderTable([{"group": Key, "pseudo_r2": Value} for Key, Value in Report.PseudoR2.items()],
                    Title="Pseudo R2 (first step)"),
        RenderTable(Report.Identification, Title="Identification checks"),
    ]
    Text = "\n".join(Blocks)
    if Config.Format == "table":
        AtomicWrite(Config.OutDir / "diagnose.txt", Text + "\n")
    print(Text)
    print(f"📊 Diagnostics written to {Config.OutDir}")
    return EXIT_SUCCESS


EXIT_INTERRUPTED = 130

HANDLERS = {"estimate": RunEstimate, "simulate": RunSimulate,
            "montecarlo": RunMonteCarlo, "diagnose": RunDiagnose}


def Run(Config: RunConfig) -> int:
    """Run one command; returns the process exit status"""
    try:
        return HANDLERS[Config.Command](Config)
    except PeerEffectsError as Error:
        return ReportFailure(Error, Config.OutDir if Config.ErrorJson else None)


def ReportFailure(Error: PeerEffectsError, ErrorDir: Optional[Path]) -> int:
    Stage = f" [{Error.Stage}]" if Error.Stage else ""
    Log.Error(f"{type(Error).__name__}{Stage}: {Error.Message}")
    print(f"❌ {type(Error).__name__}{Stage}: {Error.Message}", file=sys.stderr)
    Partial = Error.Details.get("partial")
    if Partial:
        Known = ", ".join(f"{Key} = {Value:.4g}" for Key, Value in Partial.items() if isinstance(Value, float))
        if Known:
            print(f"⚠️ Partial first-step results: {Known}", file=sys.stderr)
    if ErrorDir is not None:
        WriteJson(ErrorDir / "error.json", Error.ToDict())
    return Error.ExitCode


def Main(Argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point"""
    Parser = CreateArgumentParser()
    Arguments = Parser.parse_args(Argv)
    if Arguments.command is None:
        Parser.print_help()
        return EXIT_VALIDATION

    try:
        Manager = ConfigurationManager(Arguments.config, Arguments.env)
        ConfigureLogging(Arguments.log_level or Manager.Logging.level, Manager.Logging.file)
        Config = BuildRunConfig(Arguments, Manager)
    except PeerEffectsError as Error:
        ErrorDir = Path(Arguments.out) if Arguments.error_json else None
        return ReportFailure(Error, ErrorDir)

    try:
        return Run(Config)
    except KeyboardInterrupt:
        print("\n⚠️ Interrupted")
        return EXIT_INTERRUPTED
