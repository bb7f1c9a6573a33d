"""Kernel lifecycle, activation ordering, dispatch semantics and logging."""

import itertools
import random
import threading
import time

import pytest

from labkit.config import Configuration, ModuleSpec, validate
from labkit.errors import (
    ActivationFailed,
    BusyError,
    LabError,
    LayerViolation,
    NotActive,
    ReentrantDispatch,
    UnknownModule,
    UnknownOperation,
)
from labkit.kernel import Kernel, LifecycleState, resolve_activation_order
from labkit.module import Module, register_module_kind, unregister_module_kind

from conftest import make_config


def spec(name, layer="logic", kind=None, connectors=None):
    kinds = {"hardware": "dummy_hw", "logic": "dummy_logic", "gui": "dummy_gui"}
    return {"name": name, "layer": layer, "kind": kind or kinds[layer],
            "connectors": connectors or {}}


# -- resolve_activation_order ---------------------------------------------------


def test_order_single_chain(dummy_kinds):
    cfg = make_config([
        spec("gui_a", "gui", connectors={"l": "logic_b"}),
        spec("logic_b", "logic", connectors={"h": "hw_c"}),
        spec("hw_c", "hardware"),
    ])
    assert resolve_activation_order(cfg, {"gui_a"}) == ["hw_c", "logic_b", "gui_a"]


def test_order_diamond_matches_brute_force(dummy_kinds):
    cfg = make_config([
        spec("a", connectors={"x": "b", "y": "c"}),
        spec("b", connectors={"x": "d"}),
        spec("c", connectors={"x": "d"}),
        spec("d"),
    ])
    order = resolve_activation_order(cfg, {"a"})
    assert order == ["d", "b", "c", "a"]
    edges = [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")]
    legal = [list(p) for p in itertools.permutations("abcd")
             if all(p.index(v) < p.index(u) for u, v in edges)]
    assert order in legal


def test_order_leaf_root():
    cfg = make_config([spec("hw_c", "hardware")])
    assert resolve_activation_order(cfg, {"hw_c"}) == ["hw_c"]


def test_order_unknown_root():
    cfg = make_config([spec("a")])
    with pytest.raises(UnknownModule):
        resolve_activation_order(cfg, {"ghost"})


def test_order_restricted_to_root_closure():
    cfg = make_config([
        spec("a", connectors={"x": "b"}),
        spec("b"),
        spec("unrelated"),
    ])
    assert resolve_activation_order(cfg, {"a"}) == ["b", "a"]


# -- random-graph property suite -------------------------------------------------


def _random_config(rng, n):
    """Arbitrary directed graph over n modules; may contain cycles and
    layer violations (validate and the reference detector must agree on
    cyclicity regardless). Half the graphs restrict edges to earlier
    modules so both branches stay well populated."""
    names = [f"m{i:02d}" for i in range(n)]
    layers = [rng.choice(("hardware", "logic", "gui")) for _ in names]
    forward_only = rng.random() < 0.5
    modules = []
    for i, name in enumerate(names):
        connectors = {}
        pool = names[:i] if forward_only else names
        for k in range(rng.randint(0, 3) if pool else 0):
            connectors[f"c{k}"] = rng.choice(pool)
        modules.append(ModuleSpec(name=name, layer=layers[i], kind="k",
                                  connectors=connectors))
    return Configuration(modules=modules)


def _random_valid_config(rng, n):
    """Acyclic, layer-legal graph: edges only point at earlier modules
    with compatible layers."""
    names = [f"m{i:02d}" for i in range(n)]
    layers = [rng.choice(("hardware", "logic", "gui")) for _ in names]
    modules = []
    for i, name in enumerate(names):
        connectors = {}
        if layers[i] != "hardware":
            wanted = {"logic", "hardware"} if layers[i] == "logic" else {"logic"}
            candidates = [names[j] for j in range(i) if layers[j] in wanted]
            rng.shuffle(candidates)
            for k, target in enumerate(candidates[:rng.randint(0, 3)]):
                connectors[f"c{k}"] = target
        modules.append(ModuleSpec(name=name, layer=layers[i], kind="k",
                                  connectors=connectors))
    return Configuration(modules=modules)


def _dfs_has_cycle(cfg):
    """Reference cycle detector: plain three-color DFS, no shared code
    with the validator."""
    edges = {s.name: [t for t in s.connectors.values()
                      if cfg.module(t) is not None]
             for s in cfg.modules}
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in edges}
    for start in edges:
        if color[start] != WHITE:
            continue
        stack = [(start, iter(edges[start]))]
        color[start] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GRAY:
                    return True
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, iter(edges[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return False


def test_thousand_random_graphs_cycle_agreement_and_edge_property():
    rng = random.Random(20260816)
    started = time.monotonic()
    cyclic_seen = acyclic_seen = 0
    for i in range(1000):
        n = rng.randint(1, 50)
        cfg = _random_config(rng, n)
        flagged = any(v.rule_id == "CYCLE" for v in validate(cfg))
        assert flagged == _dfs_has_cycle(cfg), f"graph {i} disagrees"
        if flagged:
            cyclic_seen += 1
            continue
        acyclic_seen += 1
        order = resolve_activation_order(cfg, set(cfg.names()))
        index = {name: k for k, name in enumerate(order)}
        for s in cfg.modules:
            for target in s.connectors.values():
                assert index[target] < index[s.name], \
                    f"graph {i}: edge {s.name}->{target} out of order"
    elapsed = time.monotonic() - started
    # the generator must exercise both branches to mean anything
    assert cyclic_seen > 100 and acyclic_seen > 100
    assert elapsed < 10.0, f"property suite took {elapsed:.1f} s"


def test_random_valid_configs_activate_and_deactivate_cleanly(dummy_kinds, tmp_path):
    rng = random.Random(7)
    for trial in range(10):
        cfg_model = _random_valid_config(rng, rng.randint(1, 12))
        kinds = {"hardware": "dummy_hw", "logic": "dummy_logic",
                 "gui": "dummy_gui"}
        cfg = make_config([
            {"name": s.name, "layer": s.layer, "kind": kinds[s.layer],
             "connectors": s.connectors}
            for s in cfg_model.modules], tmp_path=tmp_path)
        if not cfg.modules:
            continue
        with Kernel(cfg) as kernel:
            target = rng.choice([s.name for s in cfg.modules])
            closure = resolve_activation_order(cfg, {target})
            kernel.activate(target)
            for name in closure:
                assert kernel.state(name) is LifecycleState.ACTIVE_IDLE
            # deactivating the target leaves its prerequisites active
            kernel.deactivate(target)
            assert kernel.state(target) is LifecycleState.LOADED
            # unwinding the whole closure in reverse returns all to loaded
            for name in reversed(closure):
                kernel.deactivate(name)
            for name in closure:
                assert kernel.state(name) is LifecycleState.LOADED
            untouched = set(cfg.names()) - set(closure)
            for name in untouched:
                assert kernel.state(name) is LifecycleState.UNLOADED


# -- lifecycle ------------------------------------------------------------------


def test_activate_chain_all_active(dummy_kinds, tmp_path):
    cfg = make_config([
        spec("gui_a", "gui", connectors={"l": "logic_b"}),
        spec("logic_b", "logic", connectors={"h": "hw_c"}),
        spec("hw_c", "hardware"),
    ], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        kernel.activate("gui_a")
        for name in ("gui_a", "logic_b", "hw_c"):
            assert kernel.state(name) is LifecycleState.ACTIVE_IDLE


def test_double_activate_initializes_once(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        kernel.activate("l")
        assert kernel.activate("l") is LifecycleState.ACTIVE_IDLE
        assert kernel.dispatch("l", "init_calls") == 1


class FailingHardware(Module):
    LAYER = "hardware"

    def on_activate(self):
        raise RuntimeError("power supply missing")


def test_activation_failure_names_the_hardware(dummy_kinds, tmp_path):
    register_module_kind("failing_hw", FailingHardware)
    try:
        cfg = make_config([
            spec("l", connectors={"h": "h"}),
            spec("h", "hardware", kind="failing_hw"),
        ], tmp_path=tmp_path)
        with Kernel(cfg) as kernel:
            with pytest.raises(ActivationFailed) as err:
                kernel.activate("l")
            assert err.value.module == "h"
            assert kernel.state("h") is LifecycleState.ERROR
            # reset clears the error state for a retry
            assert kernel.reset("h") is LifecycleState.LOADED
    finally:
        unregister_module_kind("failing_hw")


def test_activation_failure_keeps_dependencies_active(dummy_kinds, tmp_path):
    register_module_kind("failing_hw", FailingHardware)
    try:
        cfg = make_config([
            spec("top", connectors={"ok": "a_hw", "bad": "bad_logic"}),
            spec("bad_logic", connectors={"h": "bad_hw"}),
            spec("a_hw", "hardware"),
            spec("bad_hw", "hardware", kind="failing_hw"),
        ], tmp_path=tmp_path)
        with Kernel(cfg) as kernel:
            with pytest.raises(ActivationFailed):
                kernel.activate("top")
            # a_hw sorts first in the activation order, so it came up
            # before the failure and stays up (cheap retry semantics)
            assert kernel.state("a_hw") is LifecycleState.ACTIVE_IDLE
            assert kernel.state("top") is not LifecycleState.ACTIVE_IDLE
    finally:
        unregister_module_kind("failing_hw")


def test_deactivate_order_dependents_first(dummy_kinds, tmp_path):
    cfg = make_config([
        spec("gui_a", "gui", connectors={"l": "logic_b"}),
        spec("logic_b", "logic", connectors={"h": "hw_c"}),
        spec("hw_c", "hardware"),
    ], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        kernel.activate("gui_a")
        kernel.deactivate("hw_c")
        for name in ("gui_a", "logic_b", "hw_c"):
            assert kernel.state(name) is LifecycleState.LOADED
        log = [e.message for e in kernel.recent_log(50)
               if e.message.startswith("deactivated ")]
        assert log == ["deactivated gui_a", "deactivated logic_b",
                       "deactivated hw_c"]


def test_deactivate_unloaded_is_noop(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        assert kernel.deactivate("l") is LifecycleState.UNLOADED


class BusyLogic(Module):
    LAYER = "logic"

    def go_busy(self) -> None:
        self.ctx.set_busy(True)

    def go_idle(self) -> None:
        self.ctx.set_busy(False)


def test_deactivate_busy_requires_force(dummy_kinds, tmp_path):
    register_module_kind("busy_logic", BusyLogic)
    try:
        cfg = make_config([
            spec("l", kind="busy_logic", connectors={"h": "h"}),
            spec("h", "hardware"),
        ], tmp_path=tmp_path)
        with Kernel(cfg) as kernel:
            kernel.activate("l")
            kernel.dispatch("l", "go_busy")
            assert kernel.state("l") is LifecycleState.ACTIVE_BUSY
            with pytest.raises(BusyError):
                kernel.deactivate("h")
            assert kernel.state("l") is LifecycleState.ACTIVE_BUSY
            kernel.deactivate("h", force=True)
            assert kernel.state("l") is LifecycleState.LOADED
            assert kernel.state("h") is LifecycleState.LOADED
    finally:
        unregister_module_kind("busy_logic")


# -- dispatch -------------------------------------------------------------------


def test_dispatch_to_inactive_module(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        with pytest.raises(NotActive):
            kernel.dispatch("l", "echo", {"value": 1})
        with pytest.raises(UnknownModule):
            kernel.dispatch("ghost", "echo", {"value": 1})


def test_dispatch_unknown_operation(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        kernel.activate("l")
        with pytest.raises(UnknownOperation):
            kernel.dispatch("l", "no_such_op")
        with pytest.raises(UnknownOperation):
            kernel.dispatch("l", "_private")
        with pytest.raises(UnknownOperation):
            kernel.dispatch("l", "on_activate")
        with pytest.raises(UnknownOperation):
            kernel.dispatch("l", "echo", {"bogus_param": 1})


def test_dispatch_wraps_operation_error_with_module_name(dummy_kinds, tmp_path):
    class Exploding(Module):
        LAYER = "logic"

        def boom(self) -> None:
            raise ValueError("inner detail")

    register_module_kind("exploding", Exploding)
    try:
        cfg = make_config([spec("l", kind="exploding")], tmp_path=tmp_path)
        with Kernel(cfg) as kernel:
            kernel.activate("l")
            with pytest.raises(LabError) as err:
                kernel.dispatch("l", "boom")
            assert err.value.module == "l"
            assert "inner detail" in str(err.value)
    finally:
        unregister_module_kind("exploding")


class SequenceLogic(Module):
    LAYER = "logic"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.trace = []
        self.inside = False

    def stamp(self, tag: int) -> int:
        assert not self.inside, "operation observed another mid-execution"
        self.inside = True
        self.trace.append(tag)
        time.sleep(0)
        self.inside = False
        return tag

    def trace_len(self) -> int:
        return len(self.trace)


def test_serialized_execution_under_contention(dummy_kinds, tmp_path):
    register_module_kind("seq_logic", SequenceLogic)
    try:
        cfg = make_config([spec("l", kind="seq_logic")], tmp_path=tmp_path)
        with Kernel(cfg) as kernel:
            kernel.activate("l")
            n_threads, per_thread = 4, 250
            errors = []

            def hammer(base):
                try:
                    for i in range(per_thread):
                        kernel.dispatch("l", "stamp", {"tag": base + i})
                except Exception as exc:  # pragma: no cover
                    errors.append(exc)

            threads = [threading.Thread(target=hammer, args=(t * 1000,))
                       for t in range(n_threads)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert not errors
            assert kernel.dispatch("l", "trace_len") == n_threads * per_thread
    finally:
        unregister_module_kind("seq_logic")


class ReentrantLogic(Module):
    LAYER = "logic"

    def recurse(self) -> None:
        self.ctx.dispatch(self.ctx.name, "recurse")


def test_synchronous_self_dispatch_is_refused(dummy_kinds, tmp_path):
    register_module_kind("reentrant_logic", ReentrantLogic)
    try:
        cfg = make_config([spec("l", kind="reentrant_logic")], tmp_path=tmp_path)
        with Kernel(cfg) as kernel:
            kernel.activate("l")
            with pytest.raises((ReentrantDispatch, LabError)):
                kernel.dispatch("l", "recurse")
    finally:
        unregister_module_kind("reentrant_logic")


# -- layer enforcement at dispatch ------------------------------------------------


@pytest.fixture
def layered_kernel(dummy_kinds, tmp_path):
    cfg = make_config([
        spec("gui_a", "gui", connectors={"l": "logic_b"}),
        spec("gui_z", "gui", connectors={"l": "logic_b"}),
        spec("logic_b", "logic", connectors={"h": "hw_c"}),
        spec("hw_c", "hardware"),
    ], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        kernel.activate("gui_a")
        kernel.activate("gui_z")
        yield kernel


def test_dispatch_gui_to_hardware_refused(layered_kernel):
    with pytest.raises(LayerViolation):
        layered_kernel.dispatch("gui_a", "call_peer",
                                {"target": "hw_c", "op": "echo",
                                 "params": {"value": 1}})


def test_dispatch_gui_to_gui_refused(layered_kernel):
    with pytest.raises(LayerViolation):
        layered_kernel.dispatch("gui_a", "call_peer",
                                {"target": "gui_z", "op": "echo",
                                 "params": {"value": 1}})


def test_dispatch_hardware_to_anything_refused(layered_kernel):
    for target in ("logic_b", "gui_a", "hw_c"):
        with pytest.raises((LayerViolation, ReentrantDispatch, LabError)):
            layered_kernel.dispatch("hw_c", "call_peer",
                                    {"target": target, "op": "echo",
                                     "params": {"value": 1}})


def test_dispatch_legal_edges_pass(layered_kernel):
    assert layered_kernel.dispatch(
        "gui_a", "call_peer",
        {"target": "logic_b", "op": "echo", "params": {"value": 7}}) == 7
    assert layered_kernel.dispatch(
        "logic_b", "call_peer",
        {"target": "hw_c", "op": "echo", "params": {"value": 9}}) == 9


def test_external_callers_are_layerless(layered_kernel):
    assert layered_kernel.dispatch("hw_c", "echo", {"value": 3}) == 3
    assert layered_kernel.dispatch("gui_a", "echo", {"value": 4}) == 4


# -- logging ----------------------------------------------------------------------


def test_log_file_line_shape(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        kernel.log("info", "kernel", "started")
    lines = (tmp_path / "labkit.log").read_text().splitlines()
    started = [ln for ln in lines if ln.endswith("kernel started")]
    assert started
    stamp, level, source, message = started[-1].split(" ", 3)
    assert level == "INFO" and source == "kernel" and message == "started"
    assert stamp.endswith("Z") and "T" in stamp
    assert len(stamp.split("T")[1]) == len("00:00:00.000Z")


def test_log_ring_capacity(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        for i in range(10_001):
            kernel.log("debug", "kernel", f"entry {i}")
        ring = list(kernel.log_ring)
        assert len(ring) == 10_000
        assert ring[-1].message == "entry 10000"
        assert "entry 0" not in {e.message for e in ring[:5]}


def test_log_newline_escaped_one_entry_per_line(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        kernel.log("warning", "kernel", "line one\nline two")
    lines = (tmp_path / "labkit.log").read_text().splitlines()
    match = [ln for ln in lines if "line one" in ln]
    assert len(match) == 1
    assert "line one\\nline two" in match[0]


def test_log_timestamps_non_decreasing(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        for i in range(200):
            kernel.log("debug", "kernel", f"m{i}")
        stamps = [e.timestamp for e in kernel.log_ring]
    assert stamps == sorted(stamps)


def test_log_file_failure_degrades_to_memory(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path,
                      log_path=str(tmp_path))  # a directory: open() fails
    with Kernel(cfg) as kernel:
        kernel.log("info", "kernel", "still alive")
        messages = [e.message for e in kernel.log_ring]
    assert any("still alive" in m for m in messages)
    assert any("log file" in m.lower() for m in messages)


def test_log_events_published(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        seen = []
        kernel.events.subscribe(["log.error"],
                                lambda topic, payload: seen.append(payload))
        kernel.log("error", "kernel", "it broke")
        kernel.log("debug", "kernel", "not this one")
    assert len(seen) == 1
    assert seen[0]["message"] == "it broke"


# -- events -----------------------------------------------------------------------


def test_module_state_events(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        seen = []
        kernel.events.subscribe(["module.state"],
                                lambda topic, payload: seen.append(payload))
        kernel.activate("l")
        kernel.deactivate("l")
    states = [(p["module"], p["state"]) for p in seen]
    assert ("l", "active_idle") in states
    assert states.index(("l", "loaded")) < states.index(("l", "active_idle"))


def test_event_waiter_buffers_from_creation(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        with kernel.events.waiter("custom.topic") as waiter:
            kernel.events.publish("custom.topic", {"n": 1})
            kernel.events.publish("custom.topic", {"n": 2})
            got = waiter.wait(timeout=1.0,
                              predicate=lambda t, p: p["n"] == 2)
        assert got == ("custom.topic", {"n": 2})


def test_event_waiter_timeout_returns_none(dummy_kinds, tmp_path):
    cfg = make_config([spec("l")], tmp_path=tmp_path)
    with Kernel(cfg) as kernel:
        with kernel.events.waiter("never.fires") as waiter:
            assert waiter.wait(timeout=0.05) is None
