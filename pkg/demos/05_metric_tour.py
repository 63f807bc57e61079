"""
The evaluation battery, metric by metric
========================================

Saliency maps are scored with AUC-Judd, AUC-Borji, NSS, CC, SIM and KLD;
scanpaths with the first four MultiMatch criteria plus NSS-at-points and
a congruency rate. This tour feeds each metric inputs whose scores are
known in advance.
"""

import numpy as np

from salypath import (
    auc_borji,
    auc_judd,
    cc,
    congruency,
    kld,
    multimatch,
    nss,
    nss_scanpath,
    sim,
)

rng = np.random.default_rng(0)

# A peaky map and fixations sitting right on its brightest pixels: every
# positive outranks every negative, so Judd AUC is exactly 1.
yy, xx = np.mgrid[0:16, 0:16]
peaky = np.exp(-((yy - 4.0) ** 2 + (xx - 11.0) ** 2) / 6.0)
on_peak = np.array([[4, 11], [4, 10], [5, 11]])
off_peak = np.array([[14, 1], [15, 2], [12, 0]])

print("AUC-Judd, fixations on the peak :", auc_judd(peaky, on_peak))
print("AUC-Judd, fixations far away    : %.3f" % auc_judd(peaky, off_peak))
print("AUC-Judd, constant map          :", auc_judd(np.full((16, 16), 0.5), on_peak))

# Borji AUC resamples its negatives, so it needs a seed; same seed, same
# number.
b1 = auc_borji(peaky, on_peak, n_splits=50, rng_seed=0)
b2 = auc_borji(peaky, on_peak, n_splits=50, rng_seed=0)
print("AUC-Borji (seeded twice)        : %.4f %.4f" % (b1, b2))

# Both AUCs only see the ordering of pixel values. Cubing a positive map
# is monotone, so the scores don't move.
print("rank invariance |AUC(m^3)-AUC(m)| =",
      abs(auc_judd(peaky ** 3, on_peak) - auc_judd(peaky, on_peak)))

# NSS is the z-scored map averaged at the fixations: ~0 for unrelated
# locations, large when fixations sit on mass.
print("\nNSS on peak  : %+.2f" % nss(peaky, on_peak))
print("NSS off peak : %+.2f" % nss(peaky, off_peak))

# Distribution comparisons against a shifted copy of the map.
shifted = np.roll(peaky, 3, axis=1)
for name, fn in (("cc ", cc), ("sim", sim), ("kld", kld)):
    print(f"{name}(m, m) = {fn(peaky, peaky):.4f}    "
          f"{name}(m, shifted) = {fn(peaky, shifted):.4f}")

# Scanpaths. A path against itself is a perfect MultiMatch on all four
# criteria; jitter knocks the position score down first.
path = rng.uniform(0.1, 0.9, size=(8, 2))
print("\nmultimatch(p, p)      :", multimatch(path, path).as_tuple())
noisy = np.clip(path + rng.normal(scale=0.08, size=path.shape), 0, 1)
s = multimatch(path, noisy)
print("multimatch(p, p+noise): (%.3f, %.3f, %.3f, %.3f)  mean %.3f"
      % (s.shape, s.direction, s.length, s.position, s.mean))

# NSS along a predicted path, and the congruency rate: the fraction of
# predicted points landing inside the top-20% region of the GT map.
# Normalized coordinates denormalize by round(x * (W-1)).
on = np.array([[11 / 15, 4 / 15], [10 / 15, 5 / 15]])
print("\nscanpath NSS on the peaky map : %+.2f" % nss_scanpath(on, peaky))
print("congruency of those points    : %.2f" % congruency(on, peaky))
