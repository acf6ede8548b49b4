#!/usr/bin/env python3
"""Sum rate vs per-BS power budget for every scheme (R_min = 60 bits).

Reproduces the power-sweep comparison: the proposed scheme grows
monotonically with the budget while the uniform-power baseline drops out
at low budgets.
"""

import pathlib
import sys

from isac_planner import load_bundled, save_scenario
from isac_planner.cli import main

if __name__ == "__main__":
    scenario = load_bundled("setting1").with_updates(mi_threshold=60.0)
    pathlib.Path("results").mkdir(exist_ok=True)
    path = "results/setting1_r60.json"
    save_scenario(scenario, path)
    sys.exit(main(["sweep", "--scenario", path, "--param", "p_comm_max",
                   "--values", "6,10,14,18", "--out", "results/power_sweep",
                   "--max-outer", "12"] + sys.argv[1:]))
