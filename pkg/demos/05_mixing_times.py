"""How long until the chain forgets where it started, in dataset passes.

The slowest eigendirection of the limit drift sets the autocorrelation time;
converted to epochs it says how many passes over the data one effectively
independent sample costs.  Preconditioning by the inverse curvature makes
every direction equally fast.  Predictions are exact formula evaluations;
one is then measured from an actual run.  Run:

    python3 demos/05_mixing_times.py
"""

import math

import numpy as np

from sgalab import diagnostics, engine, inference, models, theory
from sgalab.tuning import TuningConfig

d, n = 10, 1000
w = 1.0 / np.sqrt(np.arange(1, d + 1))
j_star = np.diag(w)
sigma = 0.5 * np.eye(d) + 0.5
i_star = np.diag(w) @ sigma @ np.diag(w)

CASES = [
    ("inverse-curvature SGD", 4.0, math.inf, 1.0, np.linalg.inv(j_star)),
    ("inverse-curvature SGLD", 2.0, 1.0, 2.0, np.linalg.inv(j_star)),
    ("plain SGD", 4.0, math.inf, 1.0, None),
    ("inverse-score-cov SGD", 4.0, math.inf, 1.0, np.linalg.inv(i_star)),
]

print(f"{'method':<24}{'epochs (iact)':>14}{'epochs (gap)':>14}{'iterations':>12}")
for name, c_h, frak_t, c_beta, gamma in CASES:
    cfg = TuningConfig(frak_h=1.0, c_h=c_h, frak_t=frak_t, c_beta=c_beta,
                       gamma=gamma, lam=gamma)
    mt = theory.mixing_time(theory.ou_params(cfg, j_star, i_star), n)
    print(f"{name:<24}{mt.epochs_iact:>14.2f}{mt.epochs_gap:>14.2f}"
          f"{mt.iterations:>12.0f}")

print()
print("measuring the plain-SGD prediction from one run (smaller instance):")
model, data, _ = models.generate_gaussian(300, 4, seed=7)
fit = inference.fit_mle(model, data)
info = inference.empirical_info(model, data, fit.theta_hat)
cfg = TuningConfig(frak_h=1.0, c_h=4.0, seed=5)
ou = theory.ou_params(cfg, info.j_mat, info.i_mat)
record = engine.run(model, data, cfg, epochs=2000.0, theta_hat=fit.theta_hat,
                    recording=engine.RecordingPlan(thin=10))
mix = diagnostics.mixing_summary(record, ou)
pred = theory.mixing_time(ou, record.n)
basis = "drift eigenbasis" if mix.rotated else "raw coordinates"
print(f"  measured per-direction ({basis}):"
      f" {np.round(mix.epochs_per_coordinate, 2)}")
print(f"  worst measured: {mix.worst_epochs:.2f} epochs"
      f"   predicted: {pred.epochs_iact:.2f} epochs")
