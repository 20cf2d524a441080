"""Brute-force alpha-prime search with exact rational binomial CDFs."""
from fractions import Fraction
from math import comb


def binom_cdf_exact(k, n, p):
    if k < 0:
        return Fraction(0)
    p = Fraction(p)
    return sum(comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(0, min(k, n) + 1))


def brute_alpha_prime(n_v, alpha, beta):
    alpha = Fraction(alpha).limit_denominator(10**9)
    beta = Fraction(beta).limit_denominator(10**9)
    best = None
    for k in range(0, 10 * n_v + 1):
        ap = Fraction(k, 10 * n_v)
        idx = (ap * (n_v + 1) - 1).__floor__()
        if binom_cdf_exact(idx, n_v, alpha) <= beta:
            best = ap
    return best


if __name__ == "__main__":
    ap = brute_alpha_prime(100, 0.05, 0.1)
    rank = ((1 - ap) * 101).__ceil__()
    print("alpha' =", ap, float(ap), "rank =", rank)
