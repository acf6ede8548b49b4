#!/usr/bin/env python3
"""Sum rate vs mission MI requirement for every scheme (P_max = 10 W)."""

import pathlib
import sys

from isac_planner import load_bundled, save_scenario
from isac_planner.cli import main

if __name__ == "__main__":
    scenario = load_bundled("setting1")
    pathlib.Path("results").mkdir(exist_ok=True)
    path = "results/setting1_p10.json"
    save_scenario(scenario, path)
    sys.exit(main(["sweep", "--scenario", path, "--param", "mi_threshold",
                   "--values", "20,40,60,80,100", "--out",
                   "results/mi_sweep", "--max-outer", "12"] + sys.argv[1:]))
