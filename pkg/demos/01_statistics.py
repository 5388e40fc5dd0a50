"""
Confidence bounds, tests and reproducible noise
===============================================

Certification rests on three small numerical pieces: a one-sided
Clopper-Pearson bound on a binomial proportion, an accurate normal
quantile, and a Gaussian noise source that replays identically no matter
how it is chunked.
"""

import numpy as np

from smoothcert.stats import (RngStream, binom_lower_bound, binom_two_sided_test,
                              std_normal_cdf, std_normal_quantile)

# 70 successes out of 100: the 99.9% lower bound on the success rate
bound = binom_lower_bound(70, 100, 0.001)
print(f"lower bound for 70/100 at alpha=0.001: {bound.lower:.6f}")

# when every trial succeeds the bound has the closed form alpha**(1/n)
print(binom_lower_bound(100, 100, 0.001).lower, 0.001 ** (1 / 100))

# the quantile inverts the CDF far into the tails
z = np.array([-6.0, -1.0, 0.0, 2.5, 6.0])
print("round trip error:", np.abs(std_normal_quantile(std_normal_cdf(z)) - z).max())

# 65 vs 35 votes is not significant at alpha = 0.001, 80 vs 20 is
print(binom_two_sided_test(65, 100, 0.001), binom_two_sided_test(80, 100, 0.001))

# streams are keyed by (seed, stream id); chunking does not change the draws
a = RngStream(7, 1).standard_normal(10)
s = RngStream(7, 1)
b = np.concatenate([s.standard_normal(3), s.standard_normal(7)])
print("chunked draws identical:", np.array_equal(a, b))
