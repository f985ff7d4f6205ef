"""Per-event FTS tracking error versus phase acceleration, chirp on and off.

Drives the FTS through the bus for a few hundred events per point and
measures the worst |hardware phase - exact quadratic| with the step-by-step
accumulator oracle.
"""

import argparse

from ticsim.framework.config import default_config_path, emit, load_config, load_config_file
from ticsim.fts import PhaseFunction, event_phase_errors
from ticsim.harness.system import build_system


def max_error(fdot: float, chirp: bool, events: int, f: float = 0.5) -> float:
    doc = emit(load_config_file(default_config_path()))
    for d in doc["devices"]:
        if d["name"] == "ANT1/FTS":
            d["params"]["chirp"] = chirp
    system = build_system(load_config(doc))
    system.start()
    m = system.manager
    pf = PhaseFunction(0.0, f, fdot)
    m.call(m.resolve("ANT1/FTS"), "set_phase_function", pf, at_event=2)
    system.run_events(events + 2)
    pf = PhaseFunction(pf.phi0, pf.f, pf.fdot, 2)
    latches = [x for x in system.hardware["ANT1/FTS"].latches if x.seq >= 2]
    return float(max(max(event_phase_errors(a, pf, b.seq)) for a, b in zip(latches, latches[1:])))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fdot", type=float, nargs="+", default=[0.01, 0.1, 1.0, 5.0, 20.0])
    ap.add_argument("--events", type=int, default=200)
    args = ap.parse_args()

    print(f"{'fdot':>8} {'chirp on':>12} {'chirp off':>12} {'0.5 fdot T^2':>12}")
    for fdot in args.fdot:
        on = max_error(fdot, True, args.events)
        off = max_error(fdot, False, args.events)
        print(f"{fdot:8.3g} {on:12.3e} {off:12.3e} {0.5 * fdot * 0.048 ** 2:12.3e}")


if __name__ == "__main__":
    main()
