"""Arbitrary-precision reference values for the certificate constant chain.

Evaluates the whole chain at 60 decimal digits with mpmath, independently of
the package, and prints the dicts that tests/test_certify.py freezes.  Two
parameter sets are covered: the unit set (c1 = a = c2 = b = M = 1,
delta0 = 0) and a second point with delta0 > 0 and b = 2, which exercises
the non-integer-N branch of the chain.  Rerun after any change to the chain
to regenerate the literals:

    python3 scripts/certificate_reference_values.py
"""

import mpmath as mp

mp.mp.dps = 60


def chain(c1, a, c2, b, M, delta0):
    c1, a, c2, b, M, delta0 = (mp.mpf(v) for v in (c1, a, c2, b, M, delta0))
    gamma = 2 ** (a / b + a)
    N = max(mp.mpf(2), 2 ** (b + 2) * delta0 / c2)
    CMg = M**2 + (gamma - 1) / (8 * M**2) * (4 * M**4 / gamma) ** (gamma / (gamma - 1))
    D = mp.e ** (-2 * c1 * (2 * N) ** (a / b)) / (8 * M**2 * N)
    A = 2 ** (b + 1) / c2 * mp.log(1 + 25 * CMg / D)
    tau0 = 3 * A / (2 * N)
    alpha0 = D * mp.e ** (-c2 * 2 ** -(b + 1) * A) / 50
    B = mp.e ** (-c2 * 2**-b * A) / 2
    beta = (8 * N * M**2 * alpha0 * tau0 / A) * mp.e ** (
        2 * c1 * (2 * N) ** (a / b) + 2 * A * delta0 / N
    )
    T = A / N
    alpha = mp.sqrt(beta)
    tau_half = A / (2 * N)
    k_half = mp.floor((A / tau_half) ** (1 / b))
    g_half = tau_half / (4 * M**2) * mp.e ** (-2 * c1 * k_half**a)
    C = mp.sqrt(mp.e ** (2 * A * delta0 / N) / g_half)
    assert 0 < beta < 1, beta
    return {
        "gamma": gamma,
        "N": N,
        "CMgamma": CMg,
        "A": A,
        "tau0": tau0,
        "T": T,
        "ln_DMN": mp.log(D),
        "ln_alpha0": mp.log(alpha0),
        "ln_B": mp.log(B),
        "ln_beta": mp.log(beta),
        "ln_alpha": mp.log(alpha),
        "ln_C": mp.log(C),
    }


CASES = {
    "GOLDEN_UNIT": dict(c1=1, a=1, c2=1, b=1, M=1, delta0=0),
    "GOLDEN_SECOND": dict(c1=0.7, a=0.5, c2=1.3, b=2, M=2, delta0=0.3),
}

if __name__ == "__main__":
    for label, params in CASES.items():
        print(f"{label} = {{")
        for name, value in chain(**params).items():
            print(f'    "{name}": {mp.nstr(value, 17)},')
        print("}")
