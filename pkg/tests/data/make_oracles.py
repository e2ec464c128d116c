"""Regenerate the committed high-precision oracle tables.

Run from this directory: ``python3 make_oracles.py``. Uses mpmath at 50
significant digits; nothing from the package under test is imported.
"""

import json

import mpmath as mp

mp.mp.dps = 50


def wilson(k, n, z):
    p = mp.mpf(k) / n
    denom = 1 + z ** 2 / n
    centre = (p + z ** 2 / (2 * n)) / denom
    half = z * mp.sqrt(p * (1 - p) / n + z ** 2 / (4 * n ** 2)) / denom
    return centre - half, centre + half


def t_quantile_df2(q):
    # closed form for two degrees of freedom: t = (2q - 1) / sqrt(2 q (1 - q))
    return (2 * q - 1) / mp.sqrt(2 * q * (1 - q))


def t_two_sided(t, df):
    # P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    return mp.betainc(mp.mpf(df) / 2, mp.mpf(1) / 2, 0, df / (df + mp.mpf(t) ** 2), regularized=True)


z975 = mp.sqrt(2) * mp.erfinv(mp.mpf("0.95"))
wilson_cases = {}
for k, n in [(0, 10), (5, 10), (10, 10), (3, 17), (55, 110)]:
    lo, hi = wilson(k, n, z975)
    wilson_cases[f"{k}/{n}"] = [float(max(lo, 0)), float(min(hi, 1))]

t2 = t_quantile_df2(mp.mpf("0.975"))
intervals = {
    "z_0.975": float(z975),
    "wilson": wilson_cases,
    "t_0.975_df2": float(t2),
    "t_interval_1_2_3": [float(2 - t2 / mp.sqrt(3)), float(2 + t2 / mp.sqrt(3))],
}

z_grid = [i / 4 for i in range(-24, 25)]
t_grid = [0.0, 0.1, 0.5, 1.0, 1.5, 1.96, 2.0, 2.5, 3.0, 4.0, 5.0, 7.5, 10.0, -1.0, -2.5]
pvalues = {
    "normal": [[z, float(mp.erfc(abs(mp.mpf(z)) / mp.sqrt(2)))] for z in z_grid],
    "t": {str(df): [[t, float(t_two_sided(t, df))] for t in t_grid] for df in (2, 5, 30, 100)},
}

with open("interval_oracles.json", "w") as fh:
    json.dump(intervals, fh, indent=2)
    fh.write("\n")
with open("pvalue_oracles.json", "w") as fh:
    json.dump(pvalues, fh, indent=1)
    fh.write("\n")
