#!/usr/bin/env python3
"""Optimize the bundled Setting-1 mission and export all result series."""

import sys

from isac_planner import bundled_scenario_path
from isac_planner.cli import main

if __name__ == "__main__":
    scenario = str(bundled_scenario_path("setting1"))
    sys.exit(main(["run", "--scenario", scenario, "--benchmark", "proposed",
                   "--out", "results/setting1", "--max-outer", "12"]
                  + sys.argv[1:]))
