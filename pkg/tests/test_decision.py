from __future__ import annotations

import base64
import io
import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from conftest import box_rows, grid_from_rows, world_from_rows
from panexplore.decision import (Branch, Commit, FrontierViewMatch, HttpSelectorEndpoint, Policy,
                                 ReachableVicinitySet, Recover, ResponseRejected,
                                 ScriptedSelectorEndpoint, build_selector_prompt, decision_gate,
                                 encode_png, encode_ppm, endpoint_from_env, execute_pan,
                                 match_frontier_views, model_select, parse_selector_response,
                                 render_map_slab, select_nfp, vicinity_filter)
from panexplore.decision.pan import PanFrame
from panexplore.decision.selector import selector_request
from panexplore.decision.slab import BLUE, GREEN, MID_GRAY, RED, YELLOW
from panexplore.errors import ConfigError, ContractError
from panexplore.frontier import Frontier, FrontierSet, find_frontiers
from panexplore.planner import plan_path
from panexplore.worldsim import (OccupancyGrid, Pose, SensorConfig, cell_center, integrate_scan,
                                 scan, wrap_angle)

SAMPLE_RESPONSE = json.dumps({
    "selected_frontier_id": 17, "confidence": 0.84,
    "reasoning": "Frontier 17 trades a longer route for a well aligned view into open space.",
})


def fr(fid, x, y, z=0.25, cost=None, cells=None):
    return Frontier(fid, cells or ((0, 0, 0),), (x, y, z), Pose((x, y, z)), cost)


def vset(*members, radius=math.inf):
    return ReachableVicinitySet(radius, tuple(members))


# --- vicinity filter ---------------------------------------------------------

def test_empty_frontier_set_gives_empty_vicinity():
    g = grid_from_rows(["###", "#.#", "###"])
    V = vicinity_filter(FrontierSet(), Pose((1.5, 1.5, 0.5)), 3.5, g)
    assert len(V) == 0 and V.candidates_checked == 0


def test_radius_keeps_near_frontiers():
    g = grid_from_rows(box_rows(30, 3))
    pose = Pose((1.5, 1.5, 0.5))
    fs = FrontierSet(tuple(
        Frontier(i, ((1 + d, 1, 0),), cell_center((1 + d, 1, 0), 1.0), Pose(cell_center((1 + d, 1, 0), 1.0)))
        for i, d in enumerate((2, 4, 12))))
    V = vicinity_filter(fs, pose, 10.0, g)
    assert V.ids() == [0, 1]
    assert V.costs() == {0: 2.0, 1: 4.0}
    assert vicinity_filter(fs, pose, math.inf, g).ids() == [0, 1, 2]
    assert vicinity_filter(fs, pose, 3.5, g).ids() == [0]
    for bad in (0.0, -1.0):
        with pytest.raises(ConfigError):
            vicinity_filter(fs, pose, bad, g)


grids = arrays(np.uint8, (9, 9, 1), elements=st.sampled_from([0, 1, 1, 1, 2]))


@settings(max_examples=100, deadline=None)
@given(grids, st.integers(0, 8), st.integers(0, 8), st.floats(0.3, 6.0))
def test_filter_equals_brute_force_and_is_monotone(cells, x, y, r_v):
    g = OccupancyGrid(cells, 0.5)
    if g.cells[x, y, 0] != 1:
        return
    pose = Pose(cell_center((x, y, 0), 0.5))
    fs = find_frontiers(g)
    V = vicinity_filter(fs, pose, r_v, g, diagonal=True)
    want = {}
    for f in fs:
        if math.dist(f.avg_position, pose.position) > r_v or f.viewpoint is None:
            continue
        p = plan_path(g, pose, f.viewpoint, diagonal=True)
        if p is not None:
            want[f.id] = p.length
    assert V.costs() == want
    bigger = vicinity_filter(fs, pose, r_v * 2, g, diagonal=True)
    assert set(V.ids()) <= set(bigger.ids())


@given(st.integers(0, 6))
def test_gate_depends_only_on_cardinality(n):
    V = vset(*(fr(i, i, 0) for i in range(n)))
    out = decision_gate(V)
    if n == 0:
        assert isinstance(out, Recover)
    elif n == 1:
        assert isinstance(out, Commit) and out.frontier.id == 0
    else:
        assert isinstance(out, Branch) and out.vicinity is V


# --- pan ---------------------------------------------------------------------

def test_pan_duration_and_conservation():
    w = world_from_rows(box_rows(9, 9))
    g = OccupancyGrid.unknown_like(w)
    pose = Pose((4.5, 4.5, 0.5), 0.3)
    frames, g2, duration = execute_pan(w, g, pose, math.pi / 4, 12)
    assert duration == 8.0
    assert g2 is g
    assert len(frames) == 12
    steps = np.diff([f.unwrapped_yaw for f in frames])
    assert np.allclose(steps, 2 * math.pi / 12)
    assert np.all(steps > 0)
    assert frames[-1].unwrapped_yaw + steps[0] - frames[0].unwrapped_yaw == pytest.approx(2 * math.pi)
    assert frames[0].yaw == pose.yaw
    assert all(-math.pi < f.yaw <= math.pi for f in frames)


def test_pan_equals_union_of_directional_scans():
    w = world_from_rows(box_rows(11, 11))
    pose = Pose((5.5, 5.5, 0.5), 0.0)
    sensor = SensorConfig(fov=math.pi / 2, max_range=4.0, n_rays=15)
    g = OccupancyGrid.unknown_like(w)
    execute_pan(w, g, pose, 1.0, 8, sensor)
    ref = OccupancyGrid.unknown_like(w)
    for k in range(8):
        integrate_scan(ref, w, scan(w, pose.with_yaw(k * math.pi / 4), sensor))
    assert np.array_equal(g.cells, ref.cells)
    frames, _, _ = execute_pan(w, g, pose, 1.0, 8, sensor)
    assert sum(f.newly_known for f in frames) == 0


def test_pan_rejects_bad_arguments():
    w = world_from_rows(box_rows(5, 5))
    g = OccupancyGrid.unknown_like(w)
    with pytest.raises(ValueError):
        execute_pan(w, g, Pose((2.5, 2.5, 0.5)), 0.0)
    with pytest.raises(ValueError):
        execute_pan(w, g, Pose((2.5, 2.5, 0.5)), 1.0, 3)


def test_pan_frame_visibility_respects_walls():
    rows = box_rows(12, 7)
    rows[1] = "#....#.....#"
    rows[2] = "#....#.....#"
    w = world_from_rows(rows)
    pose = Pose((2.5, 1.5, 0.5), 0.0)
    hidden = fr(1, 8.5, 1.5, 0.5)
    visible = fr(2, 2.5, 4.5, 0.5)
    frames, _, _ = execute_pan(w, OccupancyGrid.unknown_like(w), pose, 1.0, 4,
                               SensorConfig(fov=math.pi / 2, max_range=10.0, n_rays=9), [hidden, visible])
    seen = {fid for f in frames for fid in f.visible_frontier_ids}
    assert seen == {2}
    assert frames[1].visible_frontier_ids == (2,)


# --- frontier-view matching --------------------------------------------------

def frames_at(*yaws):
    return [PanFrame(wrap_angle(y), y, (), 0) for y in yaws]


def test_exact_alignment():
    pose = Pose((0, 0, 0))
    m = match_frontier_views([fr(1, 1.0, 0.0, 0.0)], frames_at(0, math.pi / 2, math.pi, -math.pi / 2), pose)
    assert m.assignments == {1: 0} and m.errors[1] == 0.0
    assert m.alignment_score(1) == 1.0


def test_wraparound_error():
    pose = Pose((0, 0, 0))
    b = math.radians(350)
    m = match_frontier_views([fr(1, math.cos(b), math.sin(b), 0.0)], frames_at(math.radians(10)), pose)
    assert m.assignments[1] == 0
    assert math.degrees(m.errors[1]) == pytest.approx(20.0)


def test_46_degree_gap_is_unmatched_and_45_is_matched():
    pose = Pose((0, 0, 0))
    for deg, expect in ((46.0, None), (45.0, 0)):
        b = math.radians(deg)
        m = match_frontier_views([fr(1, math.cos(b), math.sin(b), 0.0)], frames_at(0.0), pose)
        assert m.assignments[1] == expect
        assert m.alignment_score(1) == (None if expect is None else pytest.approx(0.0, abs=1e-9))


def test_tie_goes_to_earlier_frame():
    pose = Pose((0, 0, 0))
    m = match_frontier_views([fr(1, 1.0, 0.0, 0.0)], frames_at(0.5, -0.5), pose)
    assert m.assignments[1] == 0


def test_match_needs_frames():
    with pytest.raises(ValueError):
        match_frontier_views([fr(1, 1, 0)], [], Pose((0, 0, 0)))


@settings(max_examples=200)
@given(st.lists(st.floats(0, 359.99), min_size=1, max_size=12),
       st.lists(st.floats(0, 359.99), min_size=1, max_size=6))
def test_match_optimal_against_degree_enumeration(frame_deg, bearing_deg):
    pose = Pose((0, 0, 0))
    frames = frames_at(*[math.radians(d) for d in frame_deg])
    fs = [fr(i, 10 * math.cos(math.radians(b)), 10 * math.sin(math.radians(b)), 0.0)
          for i, b in enumerate(bearing_deg)]
    m = match_frontier_views(fs, frames, pose)
    for i, f in enumerate(fs):
        b = math.degrees(math.atan2(f.avg_position[1], f.avg_position[0])) % 360
        errs = [min(abs(b - d % 360), 360 - abs(b - d % 360)) for d in frame_deg]
        best = min(errs)
        assert math.degrees(m.errors[i]) == pytest.approx(best, abs=1e-6)
        if m.assignments[i] is None:
            assert best > 45 - 1e-6
        else:
            assert best <= 45 + 1e-6
            assert errs[m.assignments[i]] == pytest.approx(best, abs=1e-6)


# --- map slab ----------------------------------------------------------------

def test_slab_unknown_grid_is_gray_with_red_pose():
    g = OccupancyGrid(np.zeros((6, 4, 1), np.uint8), 0.5)
    img = render_map_slab(g, Pose((1.25, 0.75, 0.25)))
    assert img.shape == (4, 6, 3)
    expect = np.empty_like(img)
    expect[:] = MID_GRAY
    expect[1, 2] = RED
    assert np.array_equal(img, expect)


def test_slab_wall_row_is_black():
    g = grid_from_rows(["......", "######", "......"])
    img = render_map_slab(g, Pose((0.5, 0.5, 0.5)))
    assert (img[1] == 0).all()
    assert (img[2] == 255).all()


def test_slab_layer_order():
    g = grid_from_rows(["......", "......", "??????"])
    f = Frontier(0, ((1, 1, 0), (2, 1, 0), (3, 1, 0)), (2.5, 1.5, 0.5))
    img = render_map_slab(g, Pose((1.5, 1.5, 0.5)),
                          trace=[(2.5, 1.5, 0.5), (4.5, 0.5, 0.5)], frontiers=[f],
                          decision_points=[((4.5, 0.5, 0.5), False), ((5.5, 0.5, 0.5), False),
                                           ((0.5, 0.5, 0.5), True)])
    assert tuple(img[1, 1]) == RED        # pose over frontier
    assert tuple(img[1, 2]) == YELLOW     # frontier over trace
    assert tuple(img[0, 4]) == BLUE       # trace over decision point
    assert tuple(img[0, 5]) == GREEN
    assert tuple(img[0, 0]) == (80, 80, 80)


def test_slab_encodings_round_trip():
    g = grid_from_rows(["#..?", "#.??"])
    img = render_map_slab(g, Pose((1.5, 0.5, 0.5)))
    back = np.asarray(Image.open(io.BytesIO(encode_png(img))).convert("RGB"))
    assert np.array_equal(back, img)
    ppm = encode_ppm(img)
    assert ppm.startswith(b"P6\n4 2\n255\n") and len(ppm) == len(b"P6\n4 2\n255\n") + img.size


# --- selectors ---------------------------------------------------------------

def test_nfp_examples():
    V = vset(fr(17, 1, 2, cost=4.32), fr(22, 3, 4, cost=1.94))
    d = select_nfp(V)
    assert d.selected_frontier_id == 22 and d.confidence == 1.0 and d.policy is Policy.NFP
    assert select_nfp(vset(fr(3, 0, 0, cost=9.0))).selected_frontier_id == 3
    assert select_nfp(vset(fr(9, 0, 0, cost=1.0), fr(5, 0, 0, cost=1.0))).selected_frontier_id == 5
    assert select_nfp(V, Policy.NF).policy is Policy.NF
    with pytest.raises(ContractError):
        select_nfp(vset())


SECTIONS = ["Prompt header", "Task", "Guidance", "Current state data", "Robot current position is",
            "Available frontiers include", "Constraints and output format",
            "Respond with a JSON object containing"]


def fig4_inputs():
    V = vset(fr(22, 3.0, 4.0, cost=1.94), fr(17, 1.0, 2.0, cost=4.32))
    match = FrontierViewMatch({17: 0, 22: None}, {17: 0.12 * math.pi / 4, 22: 1.2})
    slab = np.zeros((3, 3, 3), np.uint8)
    return V, match, slab, Pose((0.5, 0.5, 0.25))


@pytest.mark.parametrize("variant", [Policy.MODEL_L, Policy.MODEL_OF, Policy.MODEL_V])
def test_prompt_sections_and_valid_ids(variant):
    V, match, slab, pose = fig4_inputs()
    text = build_selector_prompt(V, match, slab, pose, variant)
    lines = text.splitlines()
    pos = [next(i for i, ln in enumerate(lines) if ln.startswith(s)) for s in SECTIONS]
    assert pos == sorted(pos)
    assert "- Valid frontier IDs for this request are [17, 22]." in lines
    assert "Frontier 17: position is x: 1.00, y: 2.00, z: 0.25; planner cost is 4.32" in text
    has_frames = variant is not Policy.MODEL_L
    assert ("frame" in text.lower()) == has_frames
    assert ("slab" in text.lower()) == (variant is Policy.MODEL_V)


def test_prompt_frontier_lines_mirror_sample():
    V, match, slab, pose = fig4_inputs()
    text = build_selector_prompt(V, match, slab, pose, Policy.MODEL_V)
    assert ("Frontier 17: position is x: 1.00, y: 2.00, z: 0.25; planner cost is 4.32; "
            "directional alignment score of attached pan frame is 0.88") in text
    assert ("Frontier 22: position is x: 3.00, y: 4.00, z: 0.25; planner cost is 1.94; "
            "no aligned pan frame attached") in text
    assert text.index("Frontier 17:") < text.index("Frontier 22:")


def test_prompt_contract_errors():
    V, match, slab, pose = fig4_inputs()
    with pytest.raises(ConfigError):
        build_selector_prompt(V, match, slab, pose, Policy.NFP)
    with pytest.raises(ContractError):
        build_selector_prompt(vset(fr(1, 0, 0, cost=1.0)), match, slab, pose, Policy.MODEL_L)


def test_parse_sample_response():
    V, *_ = fig4_inputs()
    d = parse_selector_response(SAMPLE_RESPONSE, V)
    assert (d.selected_frontier_id, d.confidence) == (17, 0.84)
    fenced = "```json\n" + SAMPLE_RESPONSE + "\n```"
    assert parse_selector_response(fenced, V).selected_frontier_id == 17


@pytest.mark.parametrize("body, code", [
    ('{"selected_frontier_id": 99, "confidence": 0.5, "reasoning": "x"}', "out_of_list"),
    ('{"selected_frontier_id": 17, "confidence": 1.5, "reasoning": "x"}', "out_of_range"),
    ('{"selected_frontier_id": 17, "confidence": -0.1, "reasoning": "x"}', "out_of_range"),
    ('{"selected_frontier_id": 17, "confidence": 0.5}', "missing_key"),
    ('{"selected_frontier_id": 17, "confidence": 0.5, "reasoning": "x", "extra": 1}', "unexpected_key"),
    ('{"selected_frontier_id": "17", "confidence": 0.5, "reasoning": "x"}', "bad_type"),
    ('{"selected_frontier_id": true, "confidence": 0.5, "reasoning": "x"}', "bad_type"),
    ('{"selected_frontier_id": 17, "confidence": "high", "reasoning": "x"}', "bad_type"),
    ('{"selected_frontier_id": 17, "confidence": 0.5, "reasoning": 3}', "bad_type"),
    ("[17]", "not_an_object"),
    ("not json", "malformed_json"),
    ("", "malformed_json"),
])
def test_parse_rejections(body, code):
    V, *_ = fig4_inputs()
    with pytest.raises(ResponseRejected) as exc:
        parse_selector_response(body, V)
    assert exc.value.code == code


@pytest.mark.parametrize("body, code", [
    ('{"selected_frontier_id": 99, "confidence": 0.5, "reasoning": "x"}', "out_of_list"),
    ('{"selected_frontier_id": 17, "confidence": 1.5, "reasoning": "x"}', "out_of_range"),
])
def test_rejected_response_falls_back_to_nfp(body, code):
    V, match, slab, pose = fig4_inputs()
    ep = ScriptedSelectorEndpoint([body])
    d, rejection = model_select(V, match, slab, pose, Policy.MODEL_V, ep)
    assert rejection == code
    assert d.selected_frontier_id == 22 and d.policy is Policy.NFP


def test_model_select_accepts_and_sends_wire_format():
    V, match, slab, pose = fig4_inputs()
    ep = ScriptedSelectorEndpoint([SAMPLE_RESPONSE])
    d, rejection = model_select(V, match, slab, pose, Policy.MODEL_V, ep)
    assert rejection is None and d.selected_frontier_id == 17 and d.policy is Policy.MODEL_V
    (req,) = ep.requests
    assert set(req) == {"prompt", "slab_png_base64", "valid_ids"}
    assert req["valid_ids"] == [17, 22]
    assert base64.b64decode(req["slab_png_base64"]).startswith(b"\x89PNG")
    d, rejection = model_select(V, match, slab, pose, Policy.MODEL_OF, ep)
    assert rejection == "malformed_json"  # script exhausted
    assert ep.requests[1]["slab_png_base64"] is None


def test_model_select_without_endpoint_falls_back():
    V, match, slab, pose = fig4_inputs()
    d, rejection = model_select(V, match, slab, pose, Policy.MODEL_L, None)
    assert rejection == "no_endpoint" and d.selected_frontier_id == 22


def test_selector_request_without_slab():
    V, *_ = fig4_inputs()
    assert selector_request("p", V, None) == {"prompt": "p", "slab_png_base64": None, "valid_ids": [17, 22]}


def test_endpoint_from_env(tmp_path):
    script = tmp_path / "replay.jsonl"
    script.write_text(SAMPLE_RESPONSE + "\n")
    assert endpoint_from_env({}) is None
    ep = endpoint_from_env({"OPAL_SELECTOR_URL": f"mock:{script}"})
    assert isinstance(ep, ScriptedSelectorEndpoint) and ep({}) == SAMPLE_RESPONSE
    assert isinstance(endpoint_from_env({"OPAL_SELECTOR_URL": "http://localhost:1/x"}), HttpSelectorEndpoint)


def test_http_endpoint_round_trip():
    seen = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers["Content-Length"]))
            seen.append(json.loads(body))
            out = SAMPLE_RESPONSE.encode()
            self.send_response(200)
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    try:
        ep = HttpSelectorEndpoint(f"http://127.0.0.1:{server.server_port}/select", timeout=5)
        V, match, slab, pose = fig4_inputs()
        d, rejection = model_select(V, match, slab, pose, Policy.MODEL_L, ep)
    finally:
        server.shutdown()
    assert rejection is None and d.selected_frontier_id == 17
    assert seen[0]["valid_ids"] == [17, 22] and seen[0]["slab_png_base64"] is None


def test_transport_failure_falls_back():
    V, match, slab, pose = fig4_inputs()
    ep = HttpSelectorEndpoint("http://127.0.0.1:9/none", timeout=0.5)
    d, rejection = model_select(V, match, slab, pose, Policy.MODEL_L, ep)
    assert rejection == "transport_error" and d.selected_frontier_id == 22
