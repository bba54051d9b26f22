"""Frontier selector policies, the model prompt builder and response validation."""

from __future__ import annotations

import json
import logging
import math
import os
import re
import urllib.request
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..errors import ConfigError, ContractError
from ..worldsim import Pose
from .pan import FrontierViewMatch
from .slab import png_base64
from .vicinity import ReachableVicinitySet

log = logging.getLogger(__name__)

SELECTOR_URL_ENV = "OPAL_SELECTOR_URL"
RESPONSE_KEYS = frozenset({"selected_frontier_id", "confidence", "reasoning"})


class Policy(str, Enum):
    NF = "NF"
    NFP = "NFP"
    MODEL_L = "L"
    MODEL_OF = "OF"
    MODEL_V = "V"

    @property
    def pans(self) -> bool:
        return self is not Policy.NF

    @property
    def uses_model(self) -> bool:
        return self in (Policy.MODEL_L, Policy.MODEL_OF, Policy.MODEL_V)

    @classmethod
    def parse(cls, text: str) -> "Policy":
        t = text.strip().upper()
        for p in cls:
            if t in (p.name, p.value):
                return p
        raise ConfigError(f"unknown policy {text!r}")


@dataclass(frozen=True)
class SelectorDecision:
    selected_frontier_id: int
    confidence: float
    reasoning: str
    policy: Policy


class ResponseRejected(ValueError):
    """A model response failed validation; ``code`` names the reason."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


def select_nfp(V: ReachableVicinitySet, policy: Policy = Policy.NFP) -> SelectorDecision:
    """Lowest planner cost wins; ties go to the lowest frontier ID."""
    if len(V) == 0:
        raise ContractError("cannot select from an empty vicinity set")
    best = min(V.members, key=lambda f: (f.planner_cost, f.id))
    return SelectorDecision(best.id, 1.0, f"lowest planner cost {best.planner_cost:.2f}", policy)


def _xyz(p) -> str:
    return f"x: {p[0]:.2f}, y: {p[1]:.2f}, z: {p[2]:.2f}"


def build_selector_prompt(V: ReachableVicinitySet, match: FrontierViewMatch | None,
                          slab: np.ndarray | None, pose: Pose, variant: Policy) -> str:
    if not variant.uses_model:
        raise ConfigError(f"{variant.name} is not a model-selector variant")
    if len(V) < 2:
        raise ContractError("a selector prompt needs at least two candidates")
    frames = variant in (Policy.MODEL_OF, Policy.MODEL_V)
    slabs = variant is Policy.MODEL_V and slab is not None

    if slabs:
        evaluate = "- Evaluate the attached map slabs, visual pan frames, and A* planner costs."
    elif frames:
        evaluate = "- Evaluate the attached visual pan frames and A* planner costs."
    else:
        evaluate = "- Evaluate the frontier coordinates and A* planner costs."

    lines = [
        "Prompt header",
        "You are selecting the next frontier for an autonomous exploration robot "
        "in an unknown indoor environment.",
        "",
        "Task",
        "Select the single best frontier to explore next and map the unknown indoor "
        "environment as efficiently as possible.",
        "",
        "Guidance",
        evaluate,
        "- Balance the need to uncover massive new navigable space with the goal of "
        "minimizing total travel distance.",
        "- Make your decision based entirely on the provided evidence.",
        "",
        "Current state data",
    ]
    if slabs:
        lines.append("- Map visualization slabs are provided for local spatial context.")
    lines.append("- Frontier coordinates and planner costs are included in the text metadata.")
    if frames:
        lines.append("- Frontier pan frames are ordered by frontier ID when an aligned frame exists.")
    lines += ["", f"Robot current position is {_xyz(pose.position)}", "",
              "Available frontiers include"]
    for f in sorted(V.members, key=lambda f: f.id):
        line = f"Frontier {f.id}: position is {_xyz(f.avg_position)}; planner cost is {f.planner_cost:.2f}"
        if frames:
            score = match.alignment_score(f.id) if match is not None else None
            if score is None:
                line += "; no aligned pan frame attached"
            else:
                line += f"; directional alignment score of attached pan frame is {score:.2f}"
        lines.append(line)
    ids = ", ".join(str(i) for i in sorted(V.ids()))
    lines += [
        "",
        "Constraints and output format",
        f"- Valid frontier IDs for this request are [{ids}].",
        "- Return the stable frontier ID from that list, not the temporary array index.",
    ]
    if frames:
        lines.append("- If a frontier has no attached pan frame, rely on the remaining evidence only.")
    lines += [
        "",
        "Respond with a JSON object containing",
        '{"selected_frontier_id": <int>, "confidence": <float between 0.0 and 1.0>, '
        '"reasoning": "<2-3 sentence explanation grounded in the evidence>"}',
    ]
    return "\n".join(lines)


_FENCE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)


def parse_selector_response(text: str, V: ReachableVicinitySet,
                            policy: Policy = Policy.MODEL_V) -> SelectorDecision:
    """Validate a model reply; raises ResponseRejected with a reason code."""
    body = (text or "").strip()
    m = _FENCE.match(body)
    if m:
        body = m.group(1)
    try:
        obj = json.loads(body)
    except (json.JSONDecodeError, TypeError) as exc:
        raise ResponseRejected("malformed_json", str(exc)) from None
    if not isinstance(obj, dict):
        raise ResponseRejected("not_an_object")
    missing = RESPONSE_KEYS - obj.keys()
    if missing:
        raise ResponseRejected("missing_key", ", ".join(sorted(missing)))
    extra = obj.keys() - RESPONSE_KEYS
    if extra:
        raise ResponseRejected("unexpected_key", ", ".join(sorted(extra)))
    fid, conf, why = obj["selected_frontier_id"], obj["confidence"], obj["reasoning"]
    if isinstance(fid, bool) or not isinstance(fid, int):
        raise ResponseRejected("bad_type", "selected_frontier_id must be an integer")
    if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not math.isfinite(conf):
        raise ResponseRejected("bad_type", "confidence must be a number")
    if not isinstance(why, str):
        raise ResponseRejected("bad_type", "reasoning must be a string")
    if fid not in V.ids():
        raise ResponseRejected("out_of_list", f"{fid} not in {sorted(V.ids())}")
    if not 0.0 <= conf <= 1.0:
        raise ResponseRejected("out_of_range", f"confidence {conf}")
    return SelectorDecision(fid, float(conf), why, policy)


# An endpoint takes the request object and returns the raw response body.
SelectorEndpoint = Callable[[dict], str]


def selector_request(prompt: str, V: ReachableVicinitySet, slab: np.ndarray | None) -> dict:
    return {
        "prompt": prompt,
        "slab_png_base64": png_base64(slab) if slab is not None else None,
        "valid_ids": sorted(V.ids()),
    }


class HttpSelectorEndpoint:
    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, request: dict) -> str:
        data = json.dumps(request).encode("utf-8")
        req = urllib.request.Request(self.url, data=data,
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read().decode("utf-8")


class ScriptedSelectorEndpoint:
    """Replays canned responses in order, one per call.

    Each line of the JSONL script is a response body.  Once the script runs
    out every call returns an empty body, which the caller rejects.
    """

    def __init__(self, responses: Iterable[str]):
        self.responses = [r for r in responses if r.strip()]
        self.requests: list[dict] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedSelectorEndpoint":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    def __call__(self, request: dict) -> str:
        i = len(self.requests)
        self.requests.append(request)
        return self.responses[i] if i < len(self.responses) else ""


def endpoint_from_env(env: dict | None = None) -> SelectorEndpoint | None:
    """Endpoint named by ``OPAL_SELECTOR_URL``; ``mock:<path>`` selects a scripted replay."""
    url = (env if env is not None else os.environ).get(SELECTOR_URL_ENV, "").strip()
    if not url:
        return None
    if url.startswith("mock:"):
        return ScriptedSelectorEndpoint.from_file(url[len("mock:"):])
    return HttpSelectorEndpoint(url)


def model_select(V: ReachableVicinitySet, match: FrontierViewMatch | None, slab: np.ndarray | None,
                 pose: Pose, variant: Policy,
                 endpoint: SelectorEndpoint | None) -> tuple[SelectorDecision, str | None]:
    """Ask the model; on any failure fall back to the lowest-cost rule.

    Returns the decision and the rejection code (None when the model's answer
    was accepted).
    """
    if endpoint is None:
        code = "no_endpoint"
    else:
        prompt = build_selector_prompt(V, match, slab, pose, variant)
        request = selector_request(prompt, V, slab if variant is Policy.MODEL_V else None)
        try:
            return parse_selector_response(endpoint(request), V, variant), None
        except ResponseRejected as exc:
            code = exc.code
        except OSError as exc:
            code = "transport_error"
            log.warning("selector endpoint failed: %s", exc)
    log.info("selector response rejected (%s); falling back to lowest planner cost", code)
    fallback = select_nfp(V)
    return SelectorDecision(fallback.selected_frontier_id, fallback.confidence,
                            f"fallback after {code}", Policy.NFP), code
