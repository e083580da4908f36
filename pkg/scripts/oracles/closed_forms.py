#!/usr/bin/env python3
"""High-precision reference values for the deterministic test suite.

Evaluates every closed form the library implements with mpmath at 50
significant digits, printing copy-paste-ready literals. Test modules freeze
these numbers; they must never be regenerated with the library itself.

Run:  python scripts/oracles/closed_forms.py
"""

import mpmath as mp

mp.mp.dps = 50

SETTINGS = [
    (mp.mpf("0.5"), mp.mpf("0")),
    (mp.mpf("0.5"), mp.mpf("0.25")),
    (mp.mpf("0.5"), mp.mpf("-0.5")),
    (mp.mpf("0.3"), mp.mpf("0.25")),
    (mp.mpf("0.7"), mp.mpf("0.25")),
]


def moment_lhat(n, t, alpha, p):
    """Entire moments of the reinforced local time at time t (product form)."""
    q = 1 - 2 * p
    if n == 0:
        return mp.mpf(1)
    if n == 1:
        return (2 * t) ** alpha / (mp.gamma(1 - alpha) * q ** (alpha - 1))
    prod = mp.mpf(1)
    for k in range(1, n):
        prod *= mp.gamma(alpha * k / q) / mp.gamma(alpha * (1 + k / q))
    lead = (2 * t) ** (alpha * n) * q ** (1 - alpha * n)
    core = mp.gamma(1 + alpha) ** (n - 1) / mp.gamma(1 - alpha) ** n
    return lead * core * mp.gamma(n) * prod


def mittag_leffler_moment(n, alpha):
    c = 2 ** alpha * mp.gamma(1 + alpha) / mp.gamma(1 - alpha)
    return c ** n * mp.factorial(n) / mp.gamma(1 + alpha * n)


def phi_hat(r, alpha, p):
    q = 1 - 2 * p
    return (2 ** (-alpha) * q ** alpha * mp.gamma(1 - alpha)
            / mp.gamma(1 + alpha) * mp.gamma(alpha + r / q) / mp.gamma(r / q))


def alpha_m(alpha, p):
    q = 1 - 2 * p
    return 2 ** (-alpha) * q ** (alpha - 1) * mp.gamma(1 - alpha)


def levy_density_hat(x, alpha, p):
    q = 1 - 2 * p
    return (q ** (alpha + 1) * 2 ** (-alpha) / mp.gamma(alpha)
            * (1 - mp.e ** (-q * x)) ** (-alpha - 1) * mp.e ** (-alpha * q * x))


def mean_two_param(x, t, alpha, p):
    """E of the two-parameter local time at level x, time t (quadrature)."""
    q = 1 - 2 * p
    # substitute s = u^(1/alpha) to remove the s^(alpha-1) endpoint singularity
    def g(u):
        s = u ** (1 / alpha)
        return mp.e ** (-q * x * x / (2 * s))
    pref = alpha * 2 ** alpha / mp.gamma(1 - alpha) * q ** (1 - alpha) / alpha
    return pref * mp.quad(g, [0, t ** alpha])


def c2_fixture(alpha):
    """c2 of f(x) = x^(2a-1)(1_[0,1] - 1_(1,2]) by direct high-precision quad."""
    def g(x):
        if x <= 1:
            return x
        if x <= 2:
            return 2 - x
        return mp.mpf(0)
    return 4 / alpha * mp.quad(lambda x: g(x) ** 2 * x ** (2 * alpha - 1), [0, 1, 2])


def density_second_moment(alpha, p, s):
    q = 1 - 2 * p
    pref = 2 ** alpha / mp.gamma(1 - alpha) * (s / q) ** (alpha - 1)
    f = lambda x: x * x * pref * x ** (1 - 2 * alpha) * mp.e ** (-q * x * x / (2 * s))
    return mp.quad(f, [0, mp.inf])


def fmt(v):
    return mp.nstr(v, 17, strip_zeros=False)


print("# moment_lhat(n, t=1) per (alpha, p)")
for a, p in SETTINGS:
    for n in (1, 2, 3):
        print(f"alpha={fmt(a)} p={fmt(p)} n={n}: {fmt(moment_lhat(n, 1, a, p))}")

print("\n# moment_lhat at t=2 and t=0.5, n=1 (self-similarity anchors)")
for a, p in [SETTINGS[1]]:
    for t in (mp.mpf("0.5"), mp.mpf(2)):
        print(f"alpha={fmt(a)} p={fmt(p)} t={fmt(t)}: {fmt(moment_lhat(1, t, a, p))}")

print("\n# mittag_leffler_moment(n) at p=0")
for a in (mp.mpf("0.3"), mp.mpf("0.5"), mp.mpf("0.7")):
    for n in (1, 2, 3):
        print(f"alpha={fmt(a)} n={n}: {fmt(mittag_leffler_moment(n, a))}")

print("\n# phi_hat(r) per (alpha, p), r in {0.5, 1, 2} and r=alpha")
for a, p in SETTINGS:
    for r in (mp.mpf("0.5"), mp.mpf(1), mp.mpf(2), a):
        print(f"alpha={fmt(a)} p={fmt(p)} r={fmt(r)}: {fmt(phi_hat(r, a, p))}")

print("\n# alpha_m per (alpha, p) and 1/phi_hat(alpha) (mean exp functional)")
for a, p in SETTINGS:
    print(f"alpha={fmt(a)} p={fmt(p)}: am={fmt(alpha_m(a, p))} "
          f"EI={fmt(1 / phi_hat(a, a, p))}")

print("\n# levy_density_hat at x in {0.1, 1.0}")
for a, p in SETTINGS:
    for x in (mp.mpf("0.1"), mp.mpf(1)):
        print(f"alpha={fmt(a)} p={fmt(p)} x={fmt(x)}: {fmt(levy_density_hat(x, a, p))}")

print("\n# stable scale a = 2^a G(1+a)/G(1-a); levy_density_stable(1)")
for a in (mp.mpf("0.3"), mp.mpf("0.5"), mp.mpf("0.7")):
    sc = 2 ** a * mp.gamma(1 + a) / mp.gamma(1 - a)
    print(f"alpha={fmt(a)}: a={fmt(sc)} nu(1)={fmt(2 ** (-a) / mp.gamma(a))}")

print("\n# mean_two_param(x, t=1) at (0.5, 0.25) and (0.5, 0)")
for a, p in (SETTINGS[1], SETTINGS[0]):
    for x in (mp.mpf("0.05"), mp.mpf("0.1"), mp.mpf("0.5"), mp.mpf(1)):
        print(f"alpha={fmt(a)} p={fmt(p)} x={fmt(x)}: {fmt(mean_two_param(x, 1, a, p))}")

print("\n# c2 of the standard sign-balanced fixture")
for a in (mp.mpf("0.3"), mp.mpf("0.5"), mp.mpf("0.7")):
    print(f"alpha={fmt(a)}: {fmt(c2_fixture(a))}")

print("\n# reinforced one-point density second moment (s=1): d*s/(1-2p)")
for a, p in SETTINGS:
    want = 2 * (1 - a) / (1 - 2 * p)
    got = density_second_moment(a, p, 1)
    print(f"alpha={fmt(a)} p={fmt(p)}: quad={fmt(got)} closed={fmt(want)}")

print("\n# phi_hat via quadrature of (1 - e^{-rx}) against the Levy density")
for a, p in (SETTINGS[1],):
    for r in (mp.mpf("0.1"), mp.mpf(1), mp.mpf(10)):
        val = mp.quad(lambda x: (1 - mp.e ** (-r * x)) * levy_density_hat(x, a, p),
                      [0, mp.inf])
        print(f"alpha={fmt(a)} p={fmt(p)} r={fmt(r)}: quad={fmt(val)} "
              f"closed={fmt(phi_hat(r, a, p))}")
