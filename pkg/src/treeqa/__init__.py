"""Syntax-tree-guided retrieval and reasoning engine for complex QA."""

__version__ = "0.1.0"
