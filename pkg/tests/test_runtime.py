import random

import pytest

from appgen import make_app
from fetchahead.app_ir import build_ecg, parse_app
from fetchahead.callback_analysis import FetchSignature, identify_trigger_callbacks
from fetchahead.errors import RunError
from fetchahead.instrumenter import RewriteRule, instrument
from fetchahead.mbm import generate_case
from fetchahead.runtime import (
    NetModel,
    ProxyState,
    Trace,
    TraceStep,
    on_fetch_from_proxy,
    on_send_definition,
    on_trigger_prefetch,
    run_log_from_json_obj,
    run_trace,
    seed_proxy_state,
)
from fetchahead.string_analysis import analyze_urls
import json


def _instrumented_case(case_id, latency, think):
    app, trace, net, _ = generate_case(case_id, latency, think)
    url_map = analyze_urls(app)
    tm = identify_trigger_callbacks(
        app, app.ccfg, build_ecg(app), FetchSignature("fetch")
    )
    ia = instrument(app, url_map, tm, FetchSignature("fetch"))
    return app, ia, trace, net, url_map


# ---------------------------------------------------------------------------
# run_trace timelines
# ---------------------------------------------------------------------------

def test_hit_case_timeline_cache():
    # prefetch at trigger end (t=0), ready at 1000, demand at 2000
    _, ia, trace, net, url_map = _instrumented_case(1, 1000, 2000)
    log = run_trace(ia, trace, net, seed_url_map=url_map)
    (prefetch,) = log.prefetches()
    assert (prefetch.issued_at, prefetch.ready_at) == (0, 1000)
    (demand,) = log.demands()
    assert demand.at == 2000
    assert demand.served_from == "cache"
    assert demand.response_time_ms == 0


def test_hit_case_timeline_waited():
    # demand at 300 waits until the prefetch lands at 1000
    _, ia, trace, net, url_map = _instrumented_case(1, 1000, 300)
    log = run_trace(ia, trace, net, seed_url_map=url_map)
    (demand,) = log.demands()
    assert demand.served_from == "waited"
    assert demand.waited_ms == 700
    assert demand.response_time_ms == 700
    # the prefetch is the only origin fetch
    assert len(log.prefetches()) == 1
    assert not [d for d in log.demands() if d.served_from == "origin"]


def test_original_app_all_origin():
    app, _, trace, net, _ = _instrumented_case(1, 1000, 2000)
    log = run_trace(app, trace, net)
    assert not log.instrumented
    for d in log.demands():
        assert d.served_from == "origin"
        assert d.response_time_ms == 1000
        assert d.via == "direct"


def test_invalid_trace_step_message(weather_app, weather_net):
    bad = Trace((
        TraceStep("onCreate", 0, {}),
        TraceStep("DisplayActivity.onCreate", 0, {}),  # only via goto
    ))
    with pytest.raises(RunError, match="invalid trace step 1"):
        run_trace(weather_app, bad, weather_net)


def test_trace_must_start_at_entry(weather_app, weather_net):
    bad = Trace((TraceStep("onClick", 0, {"cityIdText": "1"}),))
    with pytest.raises(RunError, match="invalid trace step 0"):
        run_trace(weather_app, bad, weather_net)


def test_goto_moves_current_screen(weather_app, weather_net):
    # after onClick's goto, the app sits on DisplayActivity.onCreate,
    # which has no outgoing wait edges: no further step is valid
    trace = Trace((
        TraceStep("onCreate", 0, {}),
        TraceStep("onClick", 100, {"cityIdText": "1"}),
        TraceStep("onClick", 100, {"cityIdText": "2"}),
    ))
    with pytest.raises(RunError, match="invalid trace step 2"):
        run_trace(weather_app, trace, weather_net)


def test_missing_input_is_an_error(weather_app, weather_net):
    trace = Trace((
        TraceStep("onCreate", 0, {}),
        TraceStep("onClick", 0, {}),
    ))
    with pytest.raises(RunError, match="missing input"):
        run_trace(weather_app, trace, weather_net)


def test_instrumented_requires_seed_map(weather_pipeline, weather_trace, weather_net):
    ia = weather_pipeline[4]
    with pytest.raises(RunError, match="seed url map"):
        run_trace(ia, weather_trace, weather_net)


def test_unselected_city_defaults_to_empty(weather_app, weather_net):
    # skipping onItemSelected leaves cityName unset; url2 still resolves
    trace = Trace((
        TraceStep("onCreate", 0, {}),
        TraceStep("onClick", 2000, {"cityIdText": "842"}),
    ))
    log = run_trace(weather_app, trace, weather_net)
    urls = [d.url for d in log.demands()]
    assert urls[1] == "http://weatherapi/weather?&cityName="


def test_skipped_selection_scenario(weather_pipeline, weather_net):
    # url1 from cache; url2 and url3 go to the origin
    _, url_map, _, _, ia = weather_pipeline
    trace = Trace((
        TraceStep("onCreate", 0, {}),
        TraceStep("onClick", 2000, {"cityIdText": "842"}),
    ))
    log = run_trace(ia, trace, weather_net, seed_url_map=url_map)
    served = {d.url_id: d.served_from for d in log.demands()}
    assert served == {"url1": "cache", "url2": "origin", "url3": "origin"}


def test_full_weather_scenario(weather_pipeline, weather_trace, weather_net):
    _, url_map, _, _, ia = weather_pipeline
    log = run_trace(ia, weather_trace, weather_net, seed_url_map=url_map)
    first, second = log.trigger_evals()
    assert first.issued == ("url1",)
    assert first.skipped_unknown == ("url2", "url3")
    assert second.issued == ("url2",)
    assert second.skipped_known_cached == ("url1",)
    served = {d.url_id: d.served_from for d in log.demands()}
    assert served == {"url1": "cache", "url2": "cache", "url3": "origin"}


def test_run_log_json_round_trip(weather_pipeline, weather_trace, weather_net):
    _, url_map, _, _, ia = weather_pipeline
    log = run_trace(ia, weather_trace, weather_net, seed_url_map=url_map)
    restored = run_log_from_json_obj(json.loads(log.canonical_json()))
    assert restored.canonical_json() == log.canonical_json()


def test_determinism_byte_identical(weather_pipeline, weather_trace, weather_net):
    _, url_map, _, _, ia = weather_pipeline
    first = run_trace(ia, weather_trace, weather_net, seed_url_map=url_map)
    second = run_trace(ia, weather_trace, weather_net, seed_url_map=url_map)
    assert first.canonical_json() == second.canonical_json()


def test_configured_costs_accumulate(weather_pipeline, weather_trace):
    from fetchahead.runtime import Costs

    _, url_map, _, _, ia = weather_pipeline
    net = NetModel(costs=Costs(send_definition_ms=1,
                               trigger_prefetch_ms=2,
                               fetch_from_proxy_ms=3))
    log = run_trace(ia, weather_trace, net, seed_url_map=url_map)
    assert log.overhead_ms == {
        "send_definition": 2,   # cityName, cityId
        "trigger_prefetch": 4,  # onCreate, onItemSelected
        "fetch_from_proxy": 9,  # three demands
    }
    assert log.total_overhead_ms() == 15


# ---------------------------------------------------------------------------
# proxy operations in isolation
# ---------------------------------------------------------------------------

def _weather_proxy(weather_pipeline) -> ProxyState:
    url_map = weather_pipeline[1]
    return seed_proxy_state(url_map)


def test_send_definition_updates_map(weather_pipeline):
    state = _weather_proxy(weather_pipeline)
    on_send_definition(state, "url2", 3, "Gothenburg", now=5)
    assert state.runtime_url_map["url2"] == [
        "http://weatherapi/", "weather?&cityName=", "Gothenburg",
    ]


def test_send_definition_last_write_wins(weather_pipeline):
    state = _weather_proxy(weather_pipeline)
    on_send_definition(state, "url2", 3, "Oslo")
    on_send_definition(state, "url2", 3, "Bergen")
    assert state.runtime_url_map["url2"][2] == "Bergen"


def test_send_definition_applies_rewrite_rules(weather_pipeline):
    state = _weather_proxy(weather_pipeline)
    rules = (RewriteRule("url2", 3, "small", "large"),)
    ev = on_send_definition(state, "url2", 3, "img1_small", rules)
    assert ev.value == "img1_large"
    assert state.runtime_url_map["url2"][2] == "img1_large"


def test_send_definition_unknown_part_errors(weather_pipeline):
    state = _weather_proxy(weather_pipeline)
    with pytest.raises(RunError, match="unknown url part"):
        on_send_definition(state, "url2", 9, "x")
    with pytest.raises(RunError, match="unknown url part"):
        on_send_definition(state, "ghost", 1, "x")


def test_trigger_prefetch_only_known_uncached(weather_pipeline):
    state = _weather_proxy(weather_pipeline)
    ev, prefetches = on_trigger_prefetch(
        state, ("url1", "url2", "url3"), 0, "onCreate",
        latency_for_url=lambda uid: 800, payload_for=lambda url: "p",
    )
    assert ev.issued == ("url1",)
    assert ev.skipped_unknown == ("url2", "url3")
    assert len(prefetches) == 1
    assert prefetches[0].ready_at == 800


def test_trigger_prefetch_skips_cached(weather_pipeline):
    state = _weather_proxy(weather_pipeline)
    args = dict(latency_for_url=lambda uid: 800, payload_for=lambda url: "p")
    on_trigger_prefetch(state, ("url1",), 0, "onCreate", **args)
    ev, prefetches = on_trigger_prefetch(state, ("url1",), 10, "again", **args)
    assert ev.skipped_known_cached == ("url1",)
    assert not prefetches


def test_trigger_prefetch_threshold():
    state = ProxyState(
        {f"u{i}": [f"http://x/{i}"] for i in range(7)}, {}, threshold=5,
    )
    ev, prefetches = on_trigger_prefetch(
        state, tuple(f"u{i}" for i in range(7)), 0, "c",
        latency_for_url=lambda uid: 100, payload_for=lambda url: "p",
    )
    assert len(ev.issued) == 5
    assert len(prefetches) == 5
    assert len(ev.considered) == 7
    assert not ev.skipped_known_cached and not ev.skipped_unknown


def test_same_concrete_url_not_prefetched_twice():
    # two url ids resolving to the same string: one fetch, one skip
    state = ProxyState({"a": ["http://x/same"], "b": ["http://x/same"]}, {})
    ev, prefetches = on_trigger_prefetch(
        state, ("a", "b"), 0, "c",
        latency_for_url=lambda uid: 100, payload_for=lambda url: "p",
    )
    assert ev.issued == ("a",)
    assert ev.skipped_known_cached == ("b",)
    assert len(prefetches) == 1


def test_fetch_from_proxy_three_ways():
    state = ProxyState({"u": ["http://x/"]}, {})
    payloads = {"http://x/": "P"}

    origin = on_fetch_from_proxy(state, "u", "http://x/", 0, 500,
                                 payloads.get, "get")
    assert origin.served_from == "origin"
    assert origin.response_time_ms == 500
    assert origin.payload == "P"

    # cached now (ready at 500); a demand at 200 waits 300
    waited = on_fetch_from_proxy(state, "u", "http://x/", 200, 500,
                                 payloads.get, "get")
    assert waited.served_from == "waited"
    assert waited.waited_ms == 300

    cached = on_fetch_from_proxy(state, "u", "http://x/", 600, 500,
                                 payloads.get, "get")
    assert cached.served_from == "cache"
    assert cached.response_time_ms == 0


def test_stale_prefetch_misses_on_different_url():
    # prefetched ...v1, demanded ...v2: exact-string keys force a miss
    state = ProxyState({"u": ["http://x/", "v1"]}, {})
    on_trigger_prefetch(state, ("u",), 0, "c",
                        latency_for_url=lambda uid: 100,
                        payload_for=lambda url: "p")
    demand = on_fetch_from_proxy(state, "u", "http://x/v2", 50, 100,
                                 lambda url: "q", "get")
    assert demand.served_from == "origin"


def test_per_method_latency_override():
    app = parse_app("""
app lat
netmethod get latency=500
callback c {
  url u = "http://x/"
  get(u)
}
ccfg {
}
""")
    trace = Trace((TraceStep("c", 0, {}),))
    log = run_trace(app, trace, NetModel(per_method={"get": 50}))
    assert log.demands()[0].response_time_ms == 50
    # a global default sits between per-method overrides and declarations
    log = run_trace(app, trace, NetModel(default_latency_ms=75))
    assert log.demands()[0].response_time_ms == 75


def test_fetch_before_build_is_an_error():
    app = parse_app("""
app early
netmethod get latency=10
callback first {
  get(u)
}
callback second {
  url u = "http://x/"
}
ccfg {
  wait w
  first -> w
  w -> second
}
""")
    trace = Trace((TraceStep("first", 0, {}),))
    with pytest.raises(RunError, match="before being built"):
        run_trace(app, trace, NetModel())


def test_send_definition_before_assignment_is_an_error():
    app = parse_app("""
app weird
netmethod get latency=10
callback c {
  send_definition(v, u, 2)
  let v = input(t)
  url u = "http://x/" + v
  get(u)
}
ccfg {
}
""")
    trace = Trace((TraceStep("c", 0, {"t": "x"}),))
    with pytest.raises(RunError, match="before 'v' is assigned"):
        run_trace(app, trace, NetModel(), seed_url_map=analyze_urls(app))


def test_net_config_validation():
    from fetchahead.runtime import net_model_from_json_obj, net_model_to_json_obj

    with pytest.raises(RunError, match="threshold"):
        net_model_from_json_obj({"threshold": 0})
    with pytest.raises(RunError, match="latency"):
        net_model_from_json_obj({"default_latency_ms": -5})
    net = NetModel(default_latency_ms=250, per_method={"get": 10},
                   server={"http://x/": "p"}, threshold=3)
    assert net_model_from_json_obj(net_model_to_json_obj(net)) == net


def test_in_flight_count():
    state = ProxyState({"u": ["http://x/"]}, {})
    on_trigger_prefetch(state, ("u",), 0, "c",
                        latency_for_url=lambda uid: 100,
                        payload_for=lambda url: "p")
    assert state.in_flight(50) == 1
    assert state.in_flight(100) == 0


def test_rewrite_rule_turns_non_hit_into_hit():
    """Thumbnail-to-full-image trick: the early definition spot only knows
    the small name; a rewrite rule makes its send warm the large URL that
    the detail page will actually demand."""
    from fetchahead.instrumenter import Hints, RewriteRule, apply_hints

    app = parse_app("""
app wallpaper
netmethod fetch latency=400
callback list {
  let img = input(thumb)
}
callback detail {
  let img = input(full)
  url u = "http://pics/" + img
  fetch(u)
}
ccfg {
  wait w
  list -> w
  w -> detail
}
""")
    trace = Trace((
        TraceStep("list", 0, {"thumb": "img1_small.jpg"}),
        TraceStep("detail", 2000, {"full": "img1_large.jpg"}),
    ))
    net = NetModel()
    url_map = analyze_urls(app)
    sig = FetchSignature("fetch")
    tm = identify_trigger_callbacks(app, app.ccfg, build_ecg(app), sig)
    ia = instrument(app, url_map, tm, sig)

    plain = run_trace(ia, trace, net, seed_url_map=url_map)
    (demand,) = plain.demands()
    assert demand.served_from == "origin"  # stale small-name prefetch misses

    hints = Hints(rewrite_rules=(RewriteRule("u", 2, "small", "large"),))
    hinted = apply_hints(ia, hints)
    log = run_trace(hinted, trace, net, seed_url_map=url_map, hints=hints)
    (demand,) = log.demands()
    assert demand.url == "http://pics/img1_large.jpg"
    assert demand.served_from == "cache"
    assert [p.url for p in log.prefetches()] == ["http://pics/img1_large.jpg"]


# ---------------------------------------------------------------------------
# cache transparency and no-duplicate-fetch over random apps
# ---------------------------------------------------------------------------

def _event_time(ev) -> int:
    return getattr(ev, "at", getattr(ev, "issued_at", 0))


def test_random_apps_cache_transparent_and_deduplicated():
    for seed in range(50):
        app, trace, net = make_app(random.Random(seed))
        url_map = analyze_urls(app)
        sig = FetchSignature("fetch")
        tm = identify_trigger_callbacks(app, app.ccfg, build_ecg(app), sig)
        ia = instrument(app, url_map, tm, sig)
        log = run_trace(ia, trace, net, seed_url_map=url_map)
        origin_fetches: dict[str, int] = {}
        for p in log.prefetches():
            origin_fetches[p.url] = origin_fetches.get(p.url, 0) + 1
        for d in log.demands():
            assert d.payload == net.payload_for(d.url)
            if d.served_from == "origin" and d.via == "proxy":
                origin_fetches[d.url] = origin_fetches.get(d.url, 0) + 1
        assert all(count == 1 for count in origin_fetches.values())
        # virtual-clock monotonicity over the event stream
        times = [_event_time(ev) for ev in log.events]
        assert times == sorted(times)
        # zero response time exactly when served from cache
        for d in log.demands():
            assert (d.response_time_ms == 0) == (d.served_from == "cache")


def test_definition_updates_track_last_executed_definition():
    """Write-after-write resolution: the proxy's final value for every
    dynamic part equals the last executed definition of its variable."""
    from fetchahead.metrics import replay_trace
    from fetchahead.runtime import DefinitionUpdate
    from fetchahead.string_analysis import Unknown

    sig = FetchSignature("fetch")
    for seed in range(60):
        app, trace, net = make_app(random.Random(seed))
        url_map = analyze_urls(app)
        tm = identify_trigger_callbacks(app, app.ccfg, build_ecg(app), sig)
        ia = instrument(app, url_map, tm, sig)
        log = run_trace(ia, trace, net, seed_url_map=url_map)
        replay = replay_trace(app, trace)
        spots = app.url_spots()
        for url_id, parts in url_map.entries.items():
            for m, (part, state) in enumerate(
                zip(spots[url_id][2].parts, parts), start=1
            ):
                if not isinstance(state, Unknown):
                    continue
                updates = [
                    e.value for e in log.events
                    if isinstance(e, DefinitionUpdate)
                    and e.url_id == url_id and e.part_index == m
                ]
                last = replay.last_definition_of(part.value)
                if last is not None:
                    assert updates and updates[-1] == last.value
