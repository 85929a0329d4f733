"""Offload analyzer: remote-pointer marking, slicing, cost model, placement and rewrite."""

from .cost import CostModel, Site, access_cost, candidate_sites, choose_site, estimate_window, host_site
from .labels import insert_profile_labels, profile_label_ids
from .pipeline import Analysis, analyze, annotate, assign_sites, dump_json, dump_text
from .remotable import RegionMap, constant_values, mark_remotable, propagate_remote_pointers
from .rewrite import (
    OffloadedProgram, equivalence_error, interpret_offloaded, oracle_slice_runner,
    rewrite_with_offload,
)
from .slicing import DEFAULT_MAX_SLICE, OffloadSlice, extract_slices, near_legal, slice_as_program

__all__ = [
    "Analysis", "CostModel", "DEFAULT_MAX_SLICE", "OffloadSlice", "OffloadedProgram",
    "RegionMap", "Site", "access_cost", "analyze", "annotate", "assign_sites",
    "candidate_sites", "choose_site", "constant_values", "dump_json", "dump_text",
    "equivalence_error", "estimate_window", "extract_slices", "host_site",
    "insert_profile_labels", "interpret_offloaded", "mark_remotable", "near_legal",
    "oracle_slice_runner", "profile_label_ids", "propagate_remote_pointers",
    "rewrite_with_offload", "slice_as_program",
]
