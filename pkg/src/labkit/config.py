"""Configuration parsing, validation and canonical serialization.

The configuration declares every module instance, which layer it lives in,
how its connectors are wired and which modules start automatically. All
functions here are pure; nothing is instantiated until the kernel takes
over.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigSyntaxError, SchemaError

LAYERS = ("hardware", "logic", "gui")

#: layer -> layers its connectors may target
LAYER_MAY_TARGET = {
    "gui": frozenset({"logic"}),
    "logic": frozenset({"logic", "hardware"}),
    "hardware": frozenset(),
}

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

DEFAULT_LOG_PATH = "./labkit.log"
DEFAULT_DATA_DIR = "./data"


@dataclass
class ModuleSpec:
    name: str
    layer: str
    kind: str
    connectors: dict[str, str] = field(default_factory=dict)
    options: dict[str, Any] = field(default_factory=dict)
    remote_address: str | None = None
    implements: str | None = None


@dataclass
class Configuration:
    modules: list[ModuleSpec] = field(default_factory=list)
    startup: list[str] = field(default_factory=list)
    log_path: str = DEFAULT_LOG_PATH
    data_dir: str = DEFAULT_DATA_DIR
    seed: int = 0

    def module(self, name: str) -> ModuleSpec | None:
        for spec in self.modules:
            if spec.name == name:
                return spec
        return None

    def names(self) -> set[str]:
        return {spec.name for spec in self.modules}


@dataclass(frozen=True)
class Violation:
    rule_id: str
    module: str
    message: str


# --- parsing ----------------------------------------------------------------

_TOP_KEYS = ("modules", "startup", "log_path", "data_dir", "seed")
_MODULE_KEYS = ("name", "layer", "kind", "connectors", "options",
                "remote_address", "implements")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SchemaError(message)


def _is_str(value: Any) -> bool:
    return isinstance(value, str)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _parse_module(obj: Any, index: int) -> ModuleSpec:
    _require(isinstance(obj, dict), f"modules[{index}]: module entry must be an object")
    label = obj.get("name") if _is_str(obj.get("name")) else f"modules[{index}]"
    for key in obj:
        _require(key in _MODULE_KEYS, f"module '{label}': unknown field '{key}'")
    for key in ("name", "layer", "kind"):
        _require(key in obj, f"module '{label}': missing required field '{key}'")
        _require(_is_str(obj[key]), f"module '{label}': field '{key}' must be a string")
    _require(obj["layer"] in LAYERS,
             f"module '{label}': field 'layer' must be one of {list(LAYERS)}")

    connectors = obj.get("connectors", {})
    _require(isinstance(connectors, dict), f"module '{label}': field 'connectors' must be an object")
    for cname, target in connectors.items():
        _require(_is_str(target),
                 f"module '{label}': connector '{cname}' target must be a string")

    options = obj.get("options", {})
    _require(isinstance(options, dict), f"module '{label}': field 'options' must be an object")

    remote_address = obj.get("remote_address")
    if remote_address is not None:
        _require(_is_str(remote_address),
                 f"module '{label}': field 'remote_address' must be a string")
    implements = obj.get("implements")
    if implements is not None:
        _require(_is_str(implements),
                 f"module '{label}': field 'implements' must be a string")

    return ModuleSpec(
        name=obj["name"],
        layer=obj["layer"],
        kind=obj["kind"],
        connectors=dict(connectors),
        options=dict(options),
        remote_address=remote_address,
        implements=implements,
    )


def parse_config(text: str) -> Configuration:
    """Parse a configuration document.

    Raises ConfigSyntaxError for malformed JSON (with line/column) and
    SchemaError for schema offenses, naming the offending field.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from exc

    _require(isinstance(doc, dict), "top-level document must be an object")
    for key in doc:
        _require(key in _TOP_KEYS, f"unknown top-level field '{key}'")

    modules_raw = doc.get("modules", [])
    _require(isinstance(modules_raw, list), "field 'modules' must be an array")
    modules = [_parse_module(obj, i) for i, obj in enumerate(modules_raw)]

    startup = doc.get("startup", [])
    _require(isinstance(startup, list), "field 'startup' must be an array")
    for entry in startup:
        _require(_is_str(entry), "field 'startup' entries must be strings")

    log_path = doc.get("log_path", DEFAULT_LOG_PATH)
    _require(_is_str(log_path), "field 'log_path' must be a string")
    data_dir = doc.get("data_dir", DEFAULT_DATA_DIR)
    _require(_is_str(data_dir), "field 'data_dir' must be a string")
    seed = doc.get("seed", 0)
    _require(_is_int(seed), "field 'seed' must be an integer")
    _require(0 <= seed < 2 ** 64, "field 'seed' must fit an unsigned 64-bit integer")

    return Configuration(modules=modules, startup=list(startup),
                         log_path=log_path, data_dir=data_dir, seed=seed)


# --- validation -------------------------------------------------------------

def _cyclic_components(specs: list[ModuleSpec]) -> list[list[str]]:
    """Strongly connected components of the connector graph that contain a
    cycle (size > 1, or a self-loop), via iterative Tarjan."""
    names = {s.name for s in specs}
    edges = {s.name: sorted(t for t in s.connectors.values() if t in names)
             for s in specs}

    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = 0
    result: list[list[str]] = []

    for root in sorted(edges):
        if root in index:
            continue
        work = [(root, iter(edges[root]))]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = lowlink[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(edges[succ])))
                    advanced = True
                    break
                if succ in on_stack:
                    lowlink[node] = min(lowlink[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                if len(component) > 1 or node in edges[node]:
                    result.append(sorted(component))
    return result


def validate(cfg: Configuration) -> list[Violation]:
    """All invariant violations, sorted by rule-id then module name.

    Pure and deterministic; an empty list means the configuration is valid.
    """
    violations: list[Violation] = []

    seen: set[str] = set()
    for spec in cfg.modules:
        if spec.name in seen:
            violations.append(Violation("DUP_NAME", spec.name,
                                        f"module name '{spec.name}' declared more than once"))
        seen.add(spec.name)
        if not _NAME_RE.match(spec.name):
            violations.append(Violation("BAD_NAME", spec.name,
                                        f"module name '{spec.name}' is not a valid identifier"))

    names = cfg.names()
    by_name = {spec.name: spec for spec in cfg.modules}

    for spec in cfg.modules:
        if spec.layer == "hardware" and spec.connectors:
            violations.append(Violation("LAYER_HW_HAS_CONNECTOR", spec.name,
                                        "hardware modules declare no connectors"))
        if spec.remote_address is not None and spec.connectors:
            violations.append(Violation("REMOTE_HAS_CONNECTOR", spec.name,
                                        "a remote module's wiring belongs to its owning process"))
        for cname, target in sorted(spec.connectors.items()):
            if target not in names:
                violations.append(Violation("DANGLING_TARGET", spec.name,
                                            f"connector '{cname}' targets undeclared module '{target}'"))
                continue
            target_layer = by_name[target].layer
            if spec.layer == "hardware":
                continue  # already flagged once per module above
            if target_layer in LAYER_MAY_TARGET[spec.layer]:
                continue
            if spec.layer == "gui" and target_layer == "hardware":
                rule = "LAYER_GUI_TO_HW"
            elif spec.layer == "gui" and target_layer == "gui":
                rule = "LAYER_GUI_TO_GUI"
            else:
                rule = "LAYER_LOGIC_TO_GUI"
            violations.append(Violation(rule, spec.name,
                                        f"{spec.layer} module may not target {target_layer} "
                                        f"module '{target}' (connector '{cname}')"))

    for entry in cfg.startup:
        if entry not in names:
            violations.append(Violation("DANGLING_TARGET", entry,
                                        "startup entry does not name a declared module"))

    for component in _cyclic_components(cfg.modules):
        violations.append(Violation("CYCLE", component[0],
                                    "connector cycle through " + ", ".join(component)))

    violations.sort(key=lambda v: (v.rule_id, v.module, v.message))
    return violations


# --- serialization ----------------------------------------------------------

def serialize_config(cfg: Configuration) -> str:
    """Canonical document: fixed key order, 2-space indent, UTF-8 friendly.

    parse_config(serialize_config(cfg)) reproduces cfg exactly.
    """
    doc: dict[str, Any] = {
        "modules": [],
        "startup": list(cfg.startup),
        "log_path": cfg.log_path,
        "data_dir": cfg.data_dir,
        "seed": cfg.seed,
    }
    for spec in cfg.modules:
        entry: dict[str, Any] = {
            "name": spec.name,
            "layer": spec.layer,
            "kind": spec.kind,
            "connectors": {k: spec.connectors[k] for k in sorted(spec.connectors)},
            "options": {k: spec.options[k] for k in sorted(spec.options)},
        }
        if spec.remote_address is not None:
            entry["remote_address"] = spec.remote_address
        if spec.implements is not None:
            entry["implements"] = spec.implements
        doc["modules"].append(entry)
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
