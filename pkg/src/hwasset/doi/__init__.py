"""Bit-level connectivity and degree-of-influence computation."""

from .engine import DoIRecord, Hop, compute_doi, doi_for_design, select_primary, unroll_assets
from .graph import BitEdge, InfluenceGraph

__all__ = [
    "BitEdge", "DoIRecord", "Hop", "InfluenceGraph",
    "compute_doi", "doi_for_design", "select_primary", "unroll_assets",
]
