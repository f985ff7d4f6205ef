"""Per-period bus occupancy as period-1 monitors are added to one antenna bus.

Attaches full-frame monitors until the manager refuses with Overcommitted,
running a few events at each step and reporting the measured worst period.
"""

import argparse

from ticsim.errors import Overcommitted
from ticsim.framework.config import default_config_path, load_config_file
from ticsim.framework.manager import MonitorSpec
from ticsim.harness.system import build_system
from ticsim.timebase import PERIOD_NS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--step", type=int, default=20, help="monitors added per row")
    ap.add_argument("--events", type=int, default=4)
    args = ap.parse_args()

    system = build_system(load_config_file(default_config_path()))
    system.start()
    abm = system.abm_for("ANT1/FTS")
    added = 0
    print(f"{'monitors':>9} {'budget ms':>10} {'measured ms':>12}")
    while True:
        try:
            for _ in range(args.step):
                system.manager.attach_monitor(MonitorSpec("ANT1/FTS", "STATUS", 1))
                added += 1
        except Overcommitted as exc:
            print(f"overcommitted after {added} extra monitors: {exc}")
            break
        abm.report.max_occupancy_ns = 0
        system.run_events(args.events)
        print(f"{len(abm.monitors):9d} {abm.committed_ns() / 1e6:10.3f} "
              f"{abm.report.max_occupancy_ns / 1e6:12.3f}")
    print(f"period {PERIOD_NS / 1e6:.0f} ms; overruns {abm.report.period_overruns}")


if __name__ == "__main__":
    main()
