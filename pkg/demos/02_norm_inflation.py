"""Second Picard iterate of data with a large total integral.

The data have bounded H^s norm but a low-frequency bump of height N, so
their total integral is sqrt(2 pi) N.  The quadratic term of the flow map,
evaluated in closed form on a sparse frequency lattice, grows linearly in N
at a fixed small time: the flow map cannot be twice differentiable in H^s.
"""

import numpy as np

from kdvgauge.experiments import illposed_scan

Ns = [8, 16, 32, 64, 128]
for s in (0.0, 1.0):
    rep = illposed_scan("pilod", s, Ns, t=0.01)
    print(f"s = {s:g}")
    print("   N    ||u0||_Hs   ||A2||_Hs   ||A2|| / (t N)")
    for r in rep.rows:
        print(f"{r['N']:5.0f}   {r['data_hs']:9.4f}   {r['second_iterate_hs']:9.4f}   {r['ratio_to_tN']:9.4f}")
    fit = rep.fits["second_iterate_hs"]
    print(f"   fitted exponent {fit.slope:.4f} (expected 1)\n")
