"""
A small Monte Carlo table
=========================

Bias, spread, estimated SE, coverage and rejection rate of the mean
difference, U and calibrated U under two randomizers. Pass a replication
count on the command line for a longer run (default 300).
"""

import sys

from rankcal.simlab import Scenario, format_table, run_study

R = int(sys.argv[1]) if len(sys.argv) > 1 else 300

results = []
for a in (0.0, 0.2):
    for randomizer in ("simple", "stratified_block"):
        sc = Scenario(effect_a=a, randomizer=randomizer, replications=R)
        results.append(run_study(sc, threads=None))

# %%
# Under stratified blocks the unadjusted test rejects too rarely at a = 0,
# while the calibrated test keeps its level and gains power at a = 0.2.
print(format_table(results))
print("true theta at a = 0.2:", round(results[-1].truth["theta"], 4))
