"""Bilevel optimal motion planning for autonomous parking."""

__version__ = "0.1.0"
