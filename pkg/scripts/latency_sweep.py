"""Lead time versus message latency: late arrivals appear only past (lead - 1) x 48 ms.

The scenario validator refuses latencies the lead rule cannot absorb, so this
script drives the simulation class directly with a deliberately bad bound.
"""

import argparse
import random

from ticsim.framework.config import default_config_path, load_config_file
from ticsim.harness.scenario import Scenario
from ticsim.harness.simulation import Simulation
from ticsim.timebase import PERIOD_NS


def run_point(lead: int, hi_ns: int, commands: int, seed: int):
    rng = random.Random(seed)
    script = [{"at_ns": rng.randrange(0, 50 * 10**9), "op": "set", "device": "ANT1/CRYO",
               "property": "SETPOINT", "value": rng.randint(0, 1000), "lead_events": lead}
              for _ in range(commands)]
    sc = Scenario(duration_s=60, seed=seed, min_lead_events=lead, script=script,
                  latency_ns=(0, (lead - 1) * PERIOD_NS))
    sc.latency_ns = (0, hi_ns)  # bypass validation on purpose
    return Simulation(sc, load_config_file(default_config_path())).run()


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lead", type=int, default=2)
    ap.add_argument("--commands", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    print(f"{'latency hi ms':>14} {'accepted':>9} {'late arrivals':>14} {'misapplied':>11}")
    for frac in (0.25, 0.5, 0.9, 1.0, 1.25, 1.5, 2.0):
        hi = int(frac * (args.lead - 1) * PERIOD_NS)
        r = run_point(args.lead, hi, args.commands, args.seed)
        print(f"{hi / 1e6:14.1f} {r.accepted:9d} {r.late_arrivals:14d} {r.misapplied:11d}")


if __name__ == "__main__":
    main()
