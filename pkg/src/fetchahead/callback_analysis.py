"""Callback analysis: where to prefetch.

Profiling a run of the original app identifies the fetch signature (the
net-library method that dominates cumulative network time). Every call to
that method is a fetch spot; its enclosing body is a target method; the
callbacks reaching that method in the extended call graph are target
callbacks. Trigger callbacks are the CCFG predecessors of a target
callback separated from it by exactly one wait node: prefetching at the
end of such a callback exploits the user's think time at the wait node.

The resulting trigger map sends each trigger callback to the URLs that
should be prefetched when it finishes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .app_ir import App, Ccfg, Ecg, NetCall
from .errors import AnalysisError
from .runtime import NetModel, Trace, run_trace


@dataclass(frozen=True)
class FetchSignature:
    net_method: str


@dataclass(frozen=True)
class TriggerMap:
    """trigger callback -> URL ids to prefetch at its end, in fetch-spot
    program order."""

    entries: dict[str, tuple[str, ...]]


def profile_fetch_signature(app: App, trace: Trace, net: NetModel) -> FetchSignature:
    """Run the original app and pick the net method with the largest
    cumulative simulated time; ties break to the lexicographically
    smaller name."""
    if app.is_instrumented:
        raise AnalysisError("profiling runs on the original app")
    log = run_trace(app, trace, net)
    totals: dict[str, int] = {}
    for d in log.demands():
        totals[d.method] = totals.get(d.method, 0) + d.response_time_ms
    if not totals:
        raise AnalysisError("nothing to profile: the trace issued no network calls")
    best = min(totals.items(), key=lambda kv: (-kv[1], kv[0]))[0]
    return FetchSignature(best)


def heuristic_fetch_signature(app: App) -> FetchSignature:
    """Fallback when no profiling trace is available: the declared-latency
    maximum (ties lexicographic). Matches profiling whenever each method
    is called the same number of times."""
    if not app.netlib:
        raise AnalysisError("app declares no net methods")
    best = min(app.netlib, key=lambda m: (-m.latency_ms, m.name)).name
    return FetchSignature(best)


def _entry_callbacks(app: App, ecg: Ecg, method: str) -> list[str]:
    """Callbacks that can reach `method` in the ECG (the method itself if
    it is a callback), in declaration order."""
    reverse: dict[str, list[str]] = {}
    for e in ecg.edges:
        reverse.setdefault(e.dst, []).append(e.src)
    seen = {method}
    stack = [method]
    while stack:
        node = stack.pop()
        for pred in reverse.get(node, ()):
            if pred not in seen:
                seen.add(pred)
                stack.append(pred)
    order = {name: i for i, name in enumerate(app.callback_names)}
    return sorted((n for n in seen if n in order), key=order.__getitem__)


def _wait_separated_predecessors(app: App, ccfg: Ccfg, target: str) -> list[str]:
    """Callbacks p with a path p -> wait -> target of length exactly two."""
    waits = set(ccfg.wait_nodes)
    callbacks = set(app.callback_names)
    preds = []
    for w in ccfg.predecessors(target):
        if w not in waits:
            continue
        for p in ccfg.predecessors(w):
            if p in callbacks and p not in preds:
                preds.append(p)
    order = {name: i for i, name in enumerate(app.callback_names)}
    return sorted(preds, key=order.__getitem__)


def identify_trigger_callbacks(
    app: App, ccfg: Ccfg, ecg: Ecg, sig: FetchSignature
) -> TriggerMap:
    """Build the trigger map for every fetch spot matching the signature."""
    if app.is_instrumented:
        raise AnalysisError("trigger analysis runs on the original app")
    entries: dict[str, list[str]] = {}
    for container, body in app.containers():
        for st in body:
            if not (isinstance(st, NetCall) and st.method == sig.net_method):
                continue
            for target_cb in _entry_callbacks(app, ecg, container):
                for trigger in _wait_separated_predecessors(app, ccfg, target_cb):
                    urls = entries.setdefault(trigger, [])
                    if st.url_id not in urls:
                        urls.append(st.url_id)
    return TriggerMap({k: tuple(v) for k, v in entries.items()})


# ---------------------------------------------------------------------------
# JSON form: {callback: [urlIds...]}
# ---------------------------------------------------------------------------

def trigger_map_to_json_obj(tm: TriggerMap) -> dict:
    return {cb: list(urls) for cb, urls in tm.entries.items()}


def trigger_map_from_json_obj(obj: dict) -> TriggerMap:
    return TriggerMap({cb: tuple(urls) for cb, urls in obj.items()})
