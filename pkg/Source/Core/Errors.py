#!/usr/bin/env python3
"""
File: Errors.py
Path: ClassroomPeers/Source/Core/Errors.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Exception hierarchy for ClassroomPeers

Purpose: Every failure the library can raise derives from PeerEffectsError and
carries the CLI exit code it maps to, the estimation stage it happened in, and
optional structured details (line numbers, offending classrooms).
"""

from typing import Any, Dict, Optional

EXIT_SUCCESS = 0
EXIT_VALIDATION = 2
EXIT_IDENTIFICATION = 3
EXIT_CONVERGENCE = 4


class PeerEffectsError(Exception):
    """Base class for all ClassroomPeers errors"""

    ExitCode = EXIT_VALIDATION

    def __init__(self, Message: str, Stage: Optional[str] = None,
                 Details: Optional[Dict[str, Any]] = None):
        super().__init__(Message)
        self.Message = Message
        self.Stage = Stage
        self.Details = Details or {}

    def ToDict(self) -> Dict[str, Any]:
        """Machine-readable form used by --error-json"""
        return {
            "error": type(self).__name__,
            "stage": self.Stage,
            "message": self.Message,
            "exit_code": self.ExitCode,
            "details": self.Details,
        }


# ===== VALIDATION (exit 2) =====

class DataValidationError(PeerEffectsError):
    pass


class DegenerateClassroomError(PeerEffectsError):
    pass


class UnusableClassroomError(PeerEffectsError):
    pass


class MissingDataError(PeerEffectsError):
    pass


class DimensionError(PeerEffectsError):
    pass


class ParameterBoundsError(PeerEffectsError):
    pass


class ConfigurationError(PeerEffectsError):
    pass


# ===== IDENTIFICATION (exit 3) =====

class IdentificationError(PeerEffectsError):
    ExitCode = EXIT_IDENTIFICATION


class SingularBlockError(IdentificationError):
    pass


class WeakInstrumentError(IdentificationError):
    pass


class CollinearityError(IdentificationError):
    pass


class InsufficientTypeCountError(IdentificationError):
    pass


class DegenerateVarianceError(IdentificationError):
    pass


# ===== NUMERICS / CONVERGENCE (exit 4) =====

class NumericError(PeerEffectsError):
    ExitCode = EXIT_CONVERGENCE


class NonConvergenceError(PeerEffectsError):
    ExitCode = EXIT_CONVERGENCE
