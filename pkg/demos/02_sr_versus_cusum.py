# %% [markdown]
# # Shiryaev-Roberts against CUSUM at the same false-alarm rate
#
# Unit-variance Gaussian data whose mean jumps from 0 to 1.  Both rules are
# calibrated to an average run length of 100 before a false alarm, then we
# look at the integral delay, its per-change-point terms and the stationary
# delay.

# %%
import numpy as np

from srdetect import ObservationModel, calibrate, delay_profile

gauss = ObservationModel("gaussian_mean_shift", 0.0, 1.0)

cal = {kind: calibrate(kind, gauss, B=100.0, n_reps=50_000, rng=2) for kind in ("sr", "cusum")}
for kind, c in cal.items():
    print(f"{kind:5s} threshold {c.rule.threshold:.4f}  ARL {c.estimate.mean:.2f} +- {c.estimate.std_err:.2f}")

# %%
prof = {kind: delay_profile(c.rule, gauss, n_reps=50_000, rng=3) for kind, c in cal.items()}
for kind, p in prof.items():
    s = p.stationary()
    print(f"{kind:5s} integral {p.integral.value:7.2f} +- {p.integral.std_err:.2f}   "
          f"stationary {s.value:.3f} +- {s.std_err:.3f}   K={p.K}")

# %% [markdown]
# The conditional delay given no false alarm before the change.  CUSUM is
# better for a change right at the start, SR for changes that happen late,
# and the weighted sum favours SR.

# %%
for kind, p in prof.items():
    mean, _ = p.conditional()
    print(kind, np.round(mean[[0, 9, 49, 99, 199]], 3))
