# %% [markdown]
# # Repeated application: false alarms, restarts and the change
#
# The rule restarts from zero after every alarm.  When the change comes late,
# the age of the running cycle follows the renewal law
# P(N >= k) / E N, and the delay approaches integral delay / ARL.

# %%
from srdetect import (
    ObservationModel,
    RandomStreams,
    ThresholdRule,
    delay_profile,
    mixture_add_experiment,
    multicyclic_run,
    residual_time_dist,
    tv_distance,
)

gauss = ObservationModel("gaussian_mean_shift", 0.0, 1.0)
rule = ThresholdRule.sr(27.0)

trace = multicyclic_run(rule, gauss, nu=500, rng=RandomStreams(4).substream(0))
print("alarms:", trace.alarm_epochs)
print("cycle covering the change:", trace.j_nu, " delay:", trace.delay, " age at change:", trace.age_at_change)

# %%
res = residual_time_dist(rule, gauss, nu=500, n_reps=50_000, rng=5)
prof = delay_profile(rule, gauss, n_reps=50_000, rng=6)
law = prof.survival / prof.arl.mean
print("TV(residual age, renewal law) =", round(tv_distance(res.mass, law), 4))

# %% [markdown]
# Mixing two thresholds cycle by cycle.  The delay of the mixture is the
# combination of the two component delays weighted by their ARLs, and the
# cycle covering the change is of the first kind with probability
# B1 / (B1 + B2).

# %%
rep = mixture_add_experiment(ThresholdRule.sr(27.0), ThresholdRule.sr(80.0), gauss, nu=1500, n_reps=30_000, rng=7)
print(f"mixture delay   {rep.add_mixture.value:.3f} +- {rep.add_mixture.std_err:.3f}")
print(f"prediction      {rep.prediction.value:.3f} +- {rep.prediction.std_err:.3f}")
print(f"covering type 1 {rep.covering_fraction_1.value:.3f}   predicted {rep.weight_1:.3f}")
