"""Averaged iterates over short windows: the second-order term is material.

Averaging m epochs of iterates shrinks the covariance roughly like
(1/m) J^-1 I J^-1, but over short windows a closed-form correction term
changes the answer substantially.  Replicated runs per window measure the
across-replicate covariance of the rescaled average, against both the
two-term prediction and the first-order form alone.  Run:

    python3 demos/04_iterate_averaging.py
"""

import numpy as np

from sgalab import diagnostics, engine, inference, models, theory
from sgalab.tuning import TuningConfig

n, d, reps = 300, 4, 150
model, data, _ = models.generate_gaussian(n, d, seed=3)
fit = inference.fit_mle(model, data)
info = inference.empirical_info(model, data, fit.theta_hat)
jinv = np.linalg.inv(info.j_mat)

cfg = TuningConfig(frak_h=1.0, c_h=4.0, gamma=jinv, lam=jinv, seed=100)
ou = theory.ou_params(cfg, info.j_mat, info.i_mat)
q_inf = theory.stationary_cov(ou)

print(f"{'window':>8} {'two-term err':>13} {'first-order err':>16}")
for m in (1.0, 2.0, 8.0):
    records = engine.run_replicates(
        model, data, cfg, reps, epochs=m, theta_hat=fit.theta_hat,
        init=("stationary", q_inf),
        recording=engine.RecordingPlan(thin=max(1, int(m * n) // 4)),
    )
    emp, _ = diagnostics.replicate_avg_cov(records)
    pred = theory.avg_cov_rescaled(ou, m)
    err_two = np.linalg.norm(emp - pred.matrix) / np.linalg.norm(pred.matrix)
    err_one = np.linalg.norm(emp - pred.simple) / np.linalg.norm(pred.simple)
    print(f"{m:>7.0f}e {err_two:>12.1%} {err_one:>15.1%}")

print()
print("the correction fades as the window grows; the first-order form has")
print("an explicit remainder bound per window:")
for m in (1.0, 2.0, 8.0):
    pred = theory.avg_cov_rescaled(ou, m)
    gap = np.linalg.norm(pred.matrix - pred.simple, 2)
    print(f"  m={m:<3.0f} |two-term - first-order| = {gap:.4f}"
          f"   bound = {pred.remainder_bound:.4f}")
