"""Filter functions of six-pulse CPMG and UDD at tau = 30 ms, tau_pi = 185 us.

Writes ``filter_functions.csv`` (finite and delta-pulse columns for both
sequences) next to this script and prints the low-frequency suppression
order of each variant.
"""
from pathlib import Path

import numpy as np

from ddlab import family_sequence, filter_function, suppression_order
from ddlab.io import write_csv

OUT = Path(__file__).with_name("filter_functions.csv")

z = np.geomspace(1e-2, 1e3, 600)
cols, header = [z], ["omega_tau"]
for fam in ("cpmg", "udd"):
    fin = family_sequence(fam, 6, 30e-3, 185e-6)
    dlt = family_sequence(fam, 6, 30e-3)
    cols += [filter_function(fin, z), filter_function(dlt, z)]
    header += [f"{fam}_finite", f"{fam}_delta"]
    print(f"{fam.upper()}6: suppression order {suppression_order(dlt)} (delta pulses), "
          f"{suppression_order(fin)} (185 us pulses)")

write_csv(OUT, header, np.column_stack(cols))
F = dict(zip(header, cols))
lo = z < 1
print(f"below omega tau = 1, UDD/CPMG filter ratio (delta pulses): median "
      f"{np.median(F['udd_delta'][lo] / F['cpmg_delta'][lo]):.2e}")
print(f"wrote {OUT}")
