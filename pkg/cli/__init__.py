"""Command-line interface module for mfgpen.

This module provides the `mfgpen` batch commands solve, sweep and verify.
"""
