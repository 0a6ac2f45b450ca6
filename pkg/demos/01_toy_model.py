# %% [markdown]
# # A model where everything is known exactly
#
# Bernoulli observations, success probability 0.5 before the change and 0.75
# after.  With the Shiryaev-Roberts threshold A = 1.4 the rule stops at the
# first success, so the run length is geometric and every operating
# characteristic has a closed form.

# %%
import numpy as np

from srdetect import ObservationModel, ThresholdRule, operating_characteristics
from srdetect import oracles

toy = ObservationModel("bernoulli", 0.5, 0.75)
rule = ThresholdRule.sr(1.4)

# %% [markdown]
# Enumerating all 2**12 paths gives exact answers.  The mean of R_n under no
# change is n, and the no-change survival P(N >= k) halves at every step.

# %%
print("E R_n:", oracles.mean_sr(toy, 8))
print("P(N >= k):", oracles.survival(rule, toy, 8))
for k in (1, 3, 6):
    t = oracles.delay_terms(rule, toy, k, 12)
    print(f"k={k}: conditional delay {t['conditional']:.6f}, unconditional {t['unconditional']:.6f}")

# %% [markdown]
# The same numbers by simulation: ARL 2, integral delay 2/3, stationary
# delay 1/3.

# %%
oc = operating_characteristics(rule, toy, n_reps=100_000, rng=1, nu=20)
for name, exact, est in [
    ("ARL", 2.0, (oc.arl2fa.mean, oc.arl2fa.std_err)),
    ("integral delay", 2 / 3, (oc.integral_add.value, oc.integral_add.std_err)),
    ("integral delay (pre-change only)", 2 / 3, (oc.integral_add_cm.value, oc.integral_add_cm.std_err)),
    ("stationary delay", 1 / 3, (oc.stationary_add.value, oc.stationary_add.std_err)),
]:
    print(f"{name:34s} {est[0]:.4f} +- {est[1]:.4f}   exact {exact:.4f}")

# %%
k = np.arange(1, 7)
print("residual time mass:", np.round(oc.residual_time.mass[:6], 4))
print("exact             :", 0.5 ** (k - 1) / 2)
