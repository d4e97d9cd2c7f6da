"""Harness for LLM-driven computer-algebra problem solving and its evaluation bench."""

__version__ = "0.1.0"
