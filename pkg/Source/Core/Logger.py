#!/usr/bin/env python3
"""
File: Logger.py
Path: ClassroomPeers/Source/Core/Logger.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Colored logging for ClassroomPeers

Purpose: Thin PascalCase wrapper over the standard logging module with a
colorlog console handler and an optional plain-text file handler.
"""

import logging
from pathlib import Path
from typing import Optional

import colorlog

from .Errors import ConfigurationError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
LOG_PREFIX = "[ClassroomPeers]"
CONSOLE_FORMAT = f"%(log_color)s{LOG_PREFIX} %(levelname)s:%(reset)s %(message)s"
FILE_FORMAT = f"%(asctime)s {LOG_PREFIX} %(levelname)s %(name)s: %(message)s"
ROOT_NAME = "ClassroomPeers"


class PeerLogger:
    """Logger facade with the project's method naming"""

    def __init__(self, Name: str):
        self.Name = Name
        self._Logger = logging.getLogger(f"{ROOT_NAME}.{Name}")

    def Debug(self, Message: str, *Args) -> None:
        self._Logger.debug(Message, *Args)

    def Info(self, Message: str, *Args) -> None:
        self._Logger.info(Message, *Args)

    def Warning(self, Message: str, *Args) -> None:
        self._Logger.warning(Message, *Args)

    def Error(self, Message: str, *Args) -> None:
        self._Logger.error(Message, *Args)

    def IsDebug(self) -> bool:
        return self._Logger.isEnabledFor(logging.DEBUG)


def ConfigureLogging(Level: str = "INFO", LogFile: Optional[str] = None) -> None:
    """Install console (and optional file) handlers on the package root logger"""
    if Level.upper() not in LOG_LEVELS:
        raise ConfigurationError(f"Unknown log level '{Level}', expected one of {LOG_LEVELS}")
    Root = logging.getLogger(ROOT_NAME)
    Root.handlers.clear()
    Root.setLevel(Level.upper())
    Root.propagate = False

    Console = colorlog.StreamHandler()
    Console.setFormatter(colorlog.ColoredFormatter(
        CONSOLE_FORMAT,
        log_colors={
            "DEBUG": "cyan",
            "INFO": "green",
            "WARNING": "yellow",
            "ERROR": "red",
            "CRITICAL": "bold_red",
        },
    ))
    Root.addHandler(Console)

    if LogFile:
        Path(LogFile).parent.mkdir(parents=True, exist_ok=True)
        FileHandler = logging.FileHandler(LogFile, encoding="utf-8")
        FileHandler.setFormatter(logging.Formatter(FILE_FORMAT))
        Root.addHandler(FileHandler)


def GetLogger(Name: str) -> PeerLogger:
    return PeerLogger(Name)
