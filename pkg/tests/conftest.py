import json
import pathlib

import pytest

from labkit.config import parse_config
from labkit.kernel import Kernel
from labkit.module import Module, register_module_kind, unregister_module_kind
from labkit.util import VirtualClock

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
EXAMPLE_CONFIG = REPO_ROOT / "examples" / "odmr_lab.json"


def make_config(modules, *, startup=(), seed=0, tmp_path=None, **extra):
    """Configuration from a list of module dicts, paths sandboxed to
    tmp_path when given."""
    doc = {
        "modules": modules,
        "startup": list(startup),
        "seed": seed,
    }
    if tmp_path is not None:
        doc["log_path"] = str(tmp_path / "labkit.log")
        doc["data_dir"] = str(tmp_path / "data")
    doc.update(extra)
    return parse_config(json.dumps(doc))


def load_example_config(tmp_path, seed=None):
    with open(EXAMPLE_CONFIG, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    doc["log_path"] = str(tmp_path / "labkit.log")
    doc["data_dir"] = str(tmp_path / "data")
    if seed is not None:
        doc["seed"] = seed
    return parse_config(json.dumps(doc))


@pytest.fixture
def example_config(tmp_path):
    return load_example_config(tmp_path)


@pytest.fixture
def lab(tmp_path):
    """Kernel over the example configuration, virtual recorder clock."""
    cfg = load_example_config(tmp_path)
    with Kernel(cfg, recorder_clock=VirtualClock()) as kernel:
        yield kernel


class DummyHardware(Module):
    LAYER = "hardware"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.init_count = 0

    def on_activate(self):
        self.init_count += 1

    def echo(self, value: int) -> int:
        return value

    def init_calls(self) -> int:
        return self.init_count

    def call_peer(self, target: str, op: str, params: dict | None = None):
        return self.ctx.dispatch(target, op, params or {})


class DummyLogic(Module):
    LAYER = "logic"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.init_count = 0

    def on_activate(self):
        self.init_count += 1

    def echo(self, value: int) -> int:
        return value

    def init_calls(self) -> int:
        return self.init_count

    def call_peer(self, target: str, op: str, params: dict | None = None):
        return self.ctx.dispatch(target, op, params or {})


class DummyGui(Module):
    LAYER = "gui"

    def echo(self, value: int) -> int:
        return value

    def call_peer(self, target: str, op: str, params: dict | None = None):
        return self.ctx.dispatch(target, op, params or {})


@pytest.fixture
def dummy_kinds():
    register_module_kind("dummy_hw", DummyHardware)
    register_module_kind("dummy_logic", DummyLogic)
    register_module_kind("dummy_gui", DummyGui)
    yield
    unregister_module_kind("dummy_hw")
    unregister_module_kind("dummy_logic")
    unregister_module_kind("dummy_gui")
