"""Accuracy and effectiveness measures over run logs.

Accuracy compares what the proxy issued at each trigger point against a
ground-truth oracle computed by replaying the app's definitions along the
trace, independently of the proxy path: a URL is prefetchable at a
trigger point iff every part is determined by the definitions executed so
far and an ideal prefetcher would not already hold it (it was neither
ideally prefetched at an earlier trigger nor already demanded).

Effectiveness compares a baseline run against an optimized run of the
same app/trace/network: per-request latency reduction, the hit rate
(cache or waited demands over all demands), and instrumentation overhead.
Both are micro-averaged.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

from .app_ir import (
    App,
    AsyncCall,
    BuildUrl,
    Call,
    DefineDynamic,
    DefineStatic,
    FetchFromProxy,
    NetCall,
    Transition,
    TriggerPrefetch,
)
from .errors import MetricsError
from .runtime import SERVED_CACHE, SERVED_WAITED, RunLog, Trace


@dataclass
class Metrics:
    precision: float | None
    recall: float | None
    hit_rate: float
    latency_reduction_pct: list[float]
    mean_reduction_pct: float
    overhead_ms: int

    def to_json_obj(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "hit_rate": self.hit_rate,
            "latency_reduction_pct": {
                "per_request": self.latency_reduction_pct,
                "mean": self.mean_reduction_pct,
            },
            "overhead_ms": self.overhead_ms,
        }


# ---------------------------------------------------------------------------
# ground-truth replay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefEvent:
    container: str
    stmt_index: int
    var: str
    value: str


@dataclass(frozen=True)
class TriggerPoint:
    callback: str
    considered: tuple[str, ...]
    prefetchable: tuple[str, ...]


@dataclass
class Replay:
    definitions: list[DefEvent] = field(default_factory=list)
    trigger_points: list[TriggerPoint] = field(default_factory=list)

    def last_definition_of(self, var: str) -> DefEvent | None:
        for ev in reversed(self.definitions):
            if ev.var == var:
                return ev
        return None


def replay_trace(app_like, trace: Trace) -> Replay:
    """Walk the trace tracking variable values only (no clock, no proxy).

    Network statements never change control flow or values, so this walk
    is value-equivalent to a full run regardless of caching behavior.
    """
    app: App = getattr(app_like, "app", app_like)
    bodies = dict(app.containers())
    url_spots = app.url_spots()
    variables: dict[str, str] = {}
    built: dict[str, str] = {}
    ideal_cache: set[str] = set()
    replay = Replay()
    step_inputs: dict[str, str] = {}

    def resource_value(key: str) -> str:
        if key not in app.resources:
            raise MetricsError(f"unknown resource key '{key}'")
        return app.resources[key]

    def knowable_value(url_id: str) -> str | None:
        """Concrete URL under current values, or None while any part is
        undetermined. Hint-seeded URLs have no URL spot; they are always
        concrete, modeled with a stable marker string."""
        spot = url_spots.get(url_id)
        if spot is None:
            return f"<static:{url_id}>"
        values = []
        for part in spot[2].parts:
            if part.kind == "literal":
                values.append(part.value)
            elif part.kind == "resource":
                values.append(resource_value(part.value))
            elif part.value in variables:
                values.append(variables[part.value])
            else:
                return None
        return "".join(values)

    def walk(name: str, depth: int) -> None:
        if depth > 64:
            raise MetricsError(f"call depth exceeded at '{name}'")
        for idx, st in enumerate(bodies[name]):
            if isinstance(st, DefineStatic):
                if st.source_kind == "literal":
                    value = st.source
                else:
                    table = (app.resources if st.source_kind == "resource"
                             else app.settings)
                    if st.source not in table:
                        raise MetricsError(
                            f"unknown {st.source_kind} key '{st.source}'"
                        )
                    value = table[st.source]
                variables[st.var] = value
                replay.definitions.append(DefEvent(name, idx, st.var, value))
            elif isinstance(st, DefineDynamic):
                value = step_inputs.get(st.input_tag, "")
                variables[st.var] = value
                replay.definitions.append(DefEvent(name, idx, st.var, value))
            elif isinstance(st, BuildUrl):
                # app-side resolution: unset variables read as ""
                built[st.url_id] = "".join(
                    part.value if part.kind == "literal"
                    else resource_value(part.value) if part.kind == "resource"
                    else variables.get(part.value, "")
                    for part in st.parts
                )
            elif isinstance(st, (NetCall, FetchFromProxy)):
                if st.url_id in built:
                    ideal_cache.add(built[st.url_id])
            elif isinstance(st, (Call, AsyncCall, Transition)):
                walk(st.target, depth + 1)
            elif isinstance(st, TriggerPrefetch):
                prefetchable = []
                for uid in st.url_ids:
                    concrete = knowable_value(uid)
                    if concrete is None or concrete in ideal_cache:
                        continue
                    ideal_cache.add(concrete)
                    prefetchable.append(uid)
                replay.trigger_points.append(
                    TriggerPoint(name, st.url_ids, tuple(prefetchable))
                )
            # SendDefinition does not affect ground truth.

    for step in trace.steps:
        step_inputs = dict(step.inputs)
        walk(step.event, 0)
    return replay


def compute_oracle(app_like, trace: Trace) -> list[dict]:
    """Per-trigger-point prefetchable sets, aligned with the run log's
    trigger evaluations. JSON-ready."""
    replay = replay_trace(app_like, trace)
    return [
        {"callback": tp.callback, "prefetchable": list(tp.prefetchable)}
        for tp in replay.trigger_points
    ]


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def accuracy_counts(
    run_log: RunLog, oracle: list[dict]
) -> tuple[int, int, int, int]:
    """Micro-average components: (precision num, precision den,
    recall num, recall den) summed over trigger points."""
    evals = run_log.trigger_evals()
    if len(oracle) != len(evals):
        raise MetricsError(
            f"oracle covers {len(oracle)} trigger points, run log has "
            f"{len(evals)}"
        )
    np = dp = nr = dr = 0
    for ev, entry in zip(evals, oracle):
        if entry["callback"] != ev.callback:
            raise MetricsError(
                f"oracle trigger point '{entry['callback']}' does not match "
                f"run log '{ev.callback}'"
            )
        prefetchable = set(entry["prefetchable"])
        issued = set(ev.issued)
        np += len(issued & prefetchable)
        dp += len(issued)
        nr += len(issued & prefetchable)
        dr += len(prefetchable)
    return np, dp, nr, dr


def compute_accuracy(run_log: RunLog, oracle: list[dict]) -> tuple[float, float]:
    """(precision, recall); empty denominators count as 1.0."""
    np, dp, nr, dr = accuracy_counts(run_log, oracle)
    precision = np / dp if dp else 1.0
    recall = nr / dr if dr else 1.0
    return precision, recall


# ---------------------------------------------------------------------------
# effectiveness
# ---------------------------------------------------------------------------

def compute_effectiveness(base: RunLog, opt: RunLog) -> Metrics:
    """Compare a baseline run with an optimized run of the same workload.

    The demanded (url id, url) sequences must match exactly; anything else
    means the instrumentation changed the app's behavior.
    """
    base_demands = base.demands()
    opt_demands = opt.demands()
    base_reqs = [(d.url_id, d.url) for d in base_demands]
    opt_reqs = [(d.url_id, d.url) for d in opt_demands]
    if base_reqs != opt_reqs:
        raise MetricsError(
            "request sets differ between runs; behavioral transparency is "
            "violated"
        )
    reductions = []
    for b, o in zip(base_demands, opt_demands):
        if b.response_time_ms > 0:
            reductions.append(
                (b.response_time_ms - o.response_time_ms)
                / b.response_time_ms * 100.0
            )
        else:
            reductions.append(0.0)
    return Metrics(
        precision=None,
        recall=None,
        hit_rate=hit_rate(opt),
        latency_reduction_pct=reductions,
        mean_reduction_pct=(sum(reductions) / len(reductions)) if reductions else 0.0,
        overhead_ms=opt.total_overhead_ms(),
    )


def hit_rate(run_log: RunLog) -> float:
    """Cache-or-waited demands over all demands; waited requests count as
    hits (the response still comes from the prefetch)."""
    demands = run_log.demands()
    if not demands:
        return 0.0
    hits = sum(1 for d in demands
               if d.served_from in (SERVED_CACHE, SERVED_WAITED))
    return hits / len(demands)


# ---------------------------------------------------------------------------
# multi-pair summary (min/max/avg/stddev table)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairStats:
    requests: int
    hit_rate: float
    mean_reduction_pct: float


def _spread(values: list[float]) -> dict:
    return {
        "min": min(values),
        "max": max(values),
        "avg": sum(values) / len(values),
        "stddev": statistics.pstdev(values) if len(values) > 1 else 0.0,
    }


def summarize_pairs(stats: list[PairStats]) -> dict:
    """Table-style summary across app/trace pairs."""
    if not stats:
        raise MetricsError("nothing to summarize")
    return {
        "pairs": len(stats),
        "runtime_requests": _spread([float(s.requests) for s in stats]),
        "hit_rate": _spread([s.hit_rate for s in stats]),
        "latency_reduction_pct": _spread([s.mean_reduction_pct for s in stats]),
    }


def format_summary(summary: dict) -> str:
    """Plain-text rendering of a summarize_pairs() result."""
    def pct(x: float) -> str:
        return f"{x * 100:.1f}%"

    def num(x: float) -> str:
        return f"{x:.2f}"

    rows = [
        ("Runtime Requests", summary["runtime_requests"], num),
        ("Hit Rate", summary["hit_rate"], pct),
        ("Latency Reduction",
         {k: v / 100.0 for k, v in summary["latency_reduction_pct"].items()},
         pct),
    ]
    lines = [f"{'':18} {'Min.':>10} {'Max.':>10} {'Avg.':>10} {'Std. Dev.':>10}"]
    for label, cells, fmt in rows:
        lines.append(
            f"{label:18} {fmt(cells['min']):>10} {fmt(cells['max']):>10} "
            f"{fmt(cells['avg']):>10} {fmt(cells['stddev']):>10}"
        )
    return "\n".join(lines)
