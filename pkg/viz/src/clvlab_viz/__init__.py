"""Standalone figure rendering for the alignment-analysis pipeline artifacts.

Consumes only the documented CSV/JSON files a pipeline run writes; no code
dependency on the package that produced them.
"""

from .jobs import KINDS, PlotJob, SchemaError, load_job, read_manifest
from .render import diverging_mapping, render

__all__ = [
    "KINDS",
    "PlotJob",
    "SchemaError",
    "diverging_mapping",
    "load_job",
    "read_manifest",
    "render",
]
