#!/usr/bin/env python3
"""
File: DataIngest.py
Path: ClassroomPeers/Source/Interface/DataIngest.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Delimited-text ingestion into validated classroom samples

Purpose: Reads a STAR-like flat extract whose column prefixes encode the
covariate roles (sv_, sw1_, sw2_ per student; cv_, cw1_, cw2_ per classroom;
z_ instruments), validates it row by row with 1-based line numbers, and
writes samples back in the same schema.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..Core.Errors import DataValidationError, DegenerateClassroomError
from ..Core.Logger import GetLogger
from ..Core.Model import CLASS_PREFIXES, INSTRUMENT_PREFIX, REQUIRED_COLUMNS, STUDENT_PREFIXES, Sample
from .Reports import AtomicWrite

Log = GetLogger("DataIngest")

MAX_REPORTED_LINES = 20


@dataclass(frozen=True)
class InputSchema:
    RequiredColumns: Tuple[str, ...] = REQUIRED_COLUMNS
    OptionalColumns: Tuple[str, ...] = ("school_id",)
    Prefixes: Tuple[str, ...] = STUDENT_PREFIXES + CLASS_PREFIXES + (INSTRUMENT_PREFIX,)
    Delimiter: str = ","
    MissingMarker: str = ""

    def UnknownColumns(self, Columns: List[str]) -> List[str]:
        Known = set(self.RequiredColumns) | set(self.OptionalColumns)
        return [Column for Column in Columns if Column not in Known and not Column.startswith(self.Prefixes)]

    def NumericColumns(self, Columns: List[str]) -> List[str]:
        return [Column for Column in Columns if Column in ("y1", "y2") or Column.startswith(self.Prefixes)]


@dataclass(frozen=True, eq=False)
class IngestResult:
    Sample: Sample
    Report: Dict[str, Any] = field(default_factory=dict)


def _ParseNumber(Text: Optional[str]) -> float:
    if Text is None:
        return np.nan
    try:
        return float(Text)
    except ValueError:
        return np.nan


def _Lines(Mask: pd.Series) -> List[int]:
    # header is line 1
    return (np.flatnonzero(Mask.to_numpy()) + 2).tolist()[:MAX_REPORTED_LINES]


def Ingest(FilePath: Union[str, Path], Schema: Optional[InputSchema] = None, HetBy: str = "class_type",
           HetTypes: Optional[Dict[str, str]] = None) -> IngestResult:
    """Parse and validate a delimited file into a Sample"""
    Schema = Schema or InputSchema()
    FilePath = Path(FilePath)
    if not FilePath.exists():
        raise DataValidationError(f"Input file not found: {FilePath}")

    try:
        Raw = pd.read_csv(FilePath, sep=Schema.Delimiter, dtype=str, keep_default_na=False,
                          na_values=[], skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as Error:
        raise DataValidationError(f"Cannot parse {FilePath}: {Error}") from Error
    Raw.columns = [Column.strip() for Column in Raw.columns]

    Missing = [Column for Column in Schema.RequiredColumns if Column not in Raw.columns]
    if Missing:
        raise DataValidationError(f"Missing required columns: {Missing}", Details={"line": 1})
    Unknown = Schema.UnknownColumns(list(Raw.columns))
    if Unknown:
        raise DataValidationError(f"Unknown column prefix: {Unknown}", Details={"line": 1, "columns": Unknown})

    Frame = Raw.apply(lambda Column: Column.str.strip())
    for Column in ("student_id", "class_id", "class_type"):
        Empty = Frame[Column] == ""
        if Empty.any():
            raise DataValidationError(f"Empty {Column} on lines {_Lines(Empty)}",
                                      Details={"column": Column, "lines": _Lines(Empty)})

    Report: Dict[str, Any] = {"rows": len(Frame), "missing_values": {}}
    for Column in Schema.NumericColumns(list(Frame.columns)):
        Text = Frame[Column]
        IsMissing = Text == Schema.MissingMarker
        # float() rounds correctly, so %.17g output reads back bit-identical
        Values = Text.where(~IsMissing, None).map(_ParseNumber).astype(float)
        Malformed = Values.isna() & ~IsMissing
        if Malformed.any():
            raise DataValidationError(f"Malformed number in column '{Column}' on lines {_Lines(Malformed)}",
                                      Details={"column": Column, "lines": _Lines(Malformed)})
        Frame[Column] = Values.astype(float)
        if IsMissing.any():
            Report["missing_values"][Column] = int(IsMissing.sum())

    Duplicated = Frame["student_id"].duplicated(keep=False)
    if Duplicated.any():
        raise DataValidationError(f"Duplicate student_id on lines {_Lines(Duplicated)}",
                                  Details={"lines": _Lines(Duplicated)})

    Counts = Frame.groupby("class_id")["class_id"].transform("size")
    Singleton = Counts < 2
    if Singleton.any():
        Classes = Frame.loc[Singleton, "class_id"].unique().tolist()
        raise DegenerateClassroomError(
            f"Classrooms with a single student {Classes[:10]} on lines {_Lines(Singleton)}",
            Details={"classrooms": Classes, "lines": _Lines(Singleton)})

    Data = Sample.FromFrame(Frame, HetBy=HetBy, HetTypes=HetTypes)
    Report["classrooms"] = Data.NumClassrooms
    Report["students"] = Data.NumStudents
    Report["missing_outcome"] = int(Data.Students[["y1", "y2"]].isna().any(axis=1).sum())
    Log.Info(f"Ingested {Data.NumStudents} students in {Data.NumClassrooms} classrooms from {FilePath.name}")
    return IngestResult(Data, Report)


def SampleToFrame(Data: Sample) -> pd.DataFrame:
    """Sample back in the input schema column order"""
    Students = Data.Students
    Base = ["student_id", "class_id", "school_id", "class_type", "y1", "y2"]
    Covariates = [Column for Column in Students.columns if Column.startswith(InputSchema().Prefixes)]
    return Students[Base + Covariates].copy()


def WriteSampleCsv(Data: Sample, FilePath: Union[str, Path], Schema: Optional[InputSchema] = None) -> Path:
    Schema = Schema or InputSchema()
    Text = SampleToFrame(Data).to_csv(sep=Schema.Delimiter, index=False, float_format="%.17g",
                                      na_rep=Schema.MissingMarker)
    return AtomicWrite(FilePath, Text)
