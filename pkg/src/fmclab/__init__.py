"""fmclab: a workbench for a multi-stack lambda-calculus with sequencing."""

__version__ = "0.1.0"
