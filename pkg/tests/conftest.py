import copy
import json

import hypothesis
import pytest

from ticsim.framework.config import default_config_path, load_config
from ticsim.harness.system import build_system

hypothesis.settings.register_profile("ci", deadline=None, max_examples=60)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("ci")

RO, RW = "read-only", "read-write"


def prop(name, access, rca, codec="u16", rng=(0, 1000), kind="integer", mon=None, alarm=None, **kw):
    p = {"name": name, "access": access, "kind": kind, "units": "", "range": list(rng),
         "rca": rca, "codec": codec, "monitor_period_events": mon, "alarm": alarm}
    p.update(kw)
    return p


def fts_device(name="ANT1/FTS", bus="ANT1-CAN", walsh_index=1, node=16, chirp=True,
               lifecycle="persistent"):
    return {
        "name": name, "kind": "fts", "lifecycle": lifecycle, "bus": bus, "node": node, "slot": 0,
        "params": {"walsh_index": walsh_index, "chirp": chirp},
        "properties": [
            prop("PHASE", RW, 0x01, "u32", (0, 2**32 - 1)),
            prop("FREQ", RW, 0x02, "i48", (-(2**47), 2**47 - 1)),
            prop("CHIRP", RW, 0x03, "i32", (-(2**31), 2**31 - 1)),
            prop("PHASE_SWITCH_INDEX", RW, 0x04, "u8", (1, 63)),
            prop("STATUS", RO, 0x10, "u64", (0, 2**64 - 1)),
        ],
    }


def generic_device(name="ANT1/MON", bus="ANT1-CAN", node=32, lifecycle="persistent", slot=1,
                   properties=None, params=None):
    return {
        "name": name, "kind": "generic", "lifecycle": lifecycle, "bus": bus, "node": node,
        "slot": slot, "params": params or {},
        "properties": properties if properties is not None else [
            prop("LEVEL", RW, 0x01, "u16", (0, 1000), default=7),
            prop("TEMP", RO, 0x02, "i16", (-50, 100), kind="fixed", scale=0.01, default=21.5),
        ],
    }


def minimal_doc():
    return {
        "buses": [{"name": "ANT1-CAN", "master": "ANT1-ABM"}],
        "devices": [fts_device(walsh_index=5), generic_device()],
    }


@pytest.fixture
def doc():
    return copy.deepcopy(minimal_doc())


@pytest.fixture
def registry(doc):
    return load_config(doc)


@pytest.fixture
def system(registry):
    s = build_system(registry)
    s.start()
    return s


@pytest.fixture(scope="session")
def default_doc():
    return json.loads(default_config_path().read_text())
