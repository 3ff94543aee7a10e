#!/usr/bin/env python3
"""
File: ClassroomPeers.py
Path: ClassroomPeers/ClassroomPeers.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: ClassroomPeers main entry point

Purpose: Peer effects in classrooms from paired test scores. Estimates,
simulates, runs Monte Carlo studies and first-step diagnostics.

Usage: python ClassroomPeers.py [command] [options]
Commands: estimate, simulate, montecarlo, diagnose
"""

import sys

from Source.Interface.CommandLine import Main

if __name__ == "__main__":
    sys.exit(Main())
