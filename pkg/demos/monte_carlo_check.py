"""Time-domain Monte Carlo against the spectral decay integral.

Draws random-phase noise ensembles, accumulates the phase of each
realisation through the rendered pulse sequence and compares the ensemble
coherence with exp(-chi).
"""
import math

from ddlab import (ambient_preset, chi, family_sequence, mc_coherence, ohmic_preset,
                   one_over_f_preset)

cases = [("udd", 6, ohmic_preset()), ("cpmg", 4, ambient_preset(1.0, 0.23)),
         ("pdd", 1, one_over_f_preset())]
for k, (fam, n, base) in enumerate(cases):
    seq = family_sequence(fam, n, 5e-3, 50e-6)
    spec = base.with_alpha(base.alpha * 0.5 / chi(seq, base).chi)  # aim for chi = 0.5
    c = chi(seq, spec).chi
    r = mc_coherence(seq, spec, 2000, seed=100 + k)
    z = (r.W - math.exp(-c)) / r.stderr
    print(f"{seq.label:>6} {spec.name:>10}: exp(-chi)={math.exp(-c):.4f}  "
          f"W_mc={r.W:.4f} +- {r.stderr:.4f}  ({z:+.2f} sigma, {r.components} components)")
