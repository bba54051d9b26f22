"""Vicinity filter, decision gate, pan evidence, and frontier selectors."""

from .pan import (FRONTIER_VIEW_THRESHOLD, FrontierViewMatch, PanFrame, execute_pan,
                  match_frontier_views)
from .selector import (HttpSelectorEndpoint, Policy, ResponseRejected, ScriptedSelectorEndpoint,
                       SelectorDecision, build_selector_prompt, endpoint_from_env, model_select,
                       parse_selector_response, select_nfp)
from .slab import encode_png, encode_ppm, render_map_slab
from .vicinity import (UNBOUNDED, Branch, Commit, ReachableVicinitySet, Recover, decision_gate,
                       vicinity_filter)

__all__ = [
    "FRONTIER_VIEW_THRESHOLD", "FrontierViewMatch", "PanFrame", "execute_pan",
    "match_frontier_views", "HttpSelectorEndpoint", "Policy", "ResponseRejected",
    "ScriptedSelectorEndpoint", "SelectorDecision", "build_selector_prompt", "endpoint_from_env",
    "model_select", "parse_selector_response", "select_nfp", "encode_png", "encode_ppm",
    "render_map_slab", "UNBOUNDED", "Branch", "Commit", "ReachableVicinitySet", "Recover",
    "decision_gate", "vicinity_filter",
]
