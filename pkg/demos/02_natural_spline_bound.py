"""With a zero base curve the compensation is the natural cubic spline.

This demo interpolates sin on [0, 2pi] at finer and finer uniform knots and
compares the observed errors with the bounds
    |x - s|  <= 5/384 * ||x''''|| * tau^4
    |x' - s'| <= 1/24 * ||x''''|| * tau^3.

Run: python3 demos/02_natural_spline_bound.py
"""

from cssc.convergence import convergence_study

for fn in ("sin", "gauss_bump", "poly5"):
    rep = convergence_study(fn)
    print(f"{fn}: sup|x''''| = {rep['fourth_derivative_sup']:g}")
    print("   knots       tau     max err  ratio0   max err'  ratio1")
    for lv in rep["levels"]:
        print(f"  {lv['knots']:6d}  {lv['tau']:.5f}  {lv['max_error']:.3e}  "
              f"{lv['bound_ratio_0']:.3f}   {lv['max_deriv_error']:.3e}  {lv['bound_ratio_1']:.3f}")
    print(f"  fitted slopes: {rep['slope_0']:.3f} (values), {rep['slope_1']:.3f} (derivatives); "
          f"bounds hold: {rep['bounds_hold']}\n")
