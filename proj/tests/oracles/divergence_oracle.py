#!/usr/bin/env python3
"""High-precision reference values for the divergence unit tests.

Evaluates the textbook formulas directly with mpmath at 50 significant digits.
The printed values are frozen into tests/unit/test_core.cpp; rerun this script to
regenerate them.
"""
from mpmath import mp, mpf, log, sqrt

mp.dps = 50


def kl(p, q):
    return sum(pi * log(pi / qi) for pi, qi in zip(p, q) if pi != 0)


def js_distance(p, q):
    m = [(pi + qi) / 2 for pi, qi in zip(p, q)]
    div = 0
    for pi, qi, mi in zip(p, q, m):
        if pi != 0:
            div += pi * log(pi / mi, 2) / 2
        if qi != 0:
            div += qi * log(qi / mi, 2) / 2
    return sqrt(div)


table4 = [mpf("0.06"), mpf("0.56"), mpf("0.24"), mpf("0.08"), mpf("0.06")]
uniform5 = [mpf(1) / 5] * 5
majority = [0, 1, 0, 0, 0]
reverse = [mpf("0.56"), mpf("0.06"), mpf("0.06"), mpf("0.08"), mpf("0.24")]

print("kl([0.5,0.5] || [0.25,0.75]) =", mp.nstr(kl([mpf("0.5")] * 2, [mpf("0.25"), mpf("0.75")]), 20))
print("js(uniform5, table4)         =", mp.nstr(js_distance(uniform5, table4), 20))
print("js(majority, table4)         =", mp.nstr(js_distance(majority, table4), 20))
print("js(reverse, table4)          =", mp.nstr(js_distance(reverse, table4), 20))
