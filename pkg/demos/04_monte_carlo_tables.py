"""Desk-scale Monte Carlo tables: sup-norm loss, coverage, width ratios.

A reduced-replication version of the study tables; bump ``REPS`` for tighter
Monte Carlo error (200 is the acceptance-suite scale).

Run with:  python demos/04_monte_carlo_tables.py
"""

import numpy as np

from npivband import MultiplierPlan, a_sweep, run_mc

REPS = 50
PLAN = MultiplierPlan(n_draws=500, base_seed=0)


def show(report, n, target, label):
    print(f"\n--- {label} ---")
    print(f"{'method':>14s} {'mean loss':>10s} {'cov90':>6s} {'cov95':>6s} {'width ratio':>12s}")
    for row in report.rows:
        if row.n != n or row.target != target:
            continue
        ratio = "" if row.mean_width_ratio is None else f"{row.mean_width_ratio:.2f}"
        print(f"{row.method:>14s} {row.mean_loss:10.3f} {row.coverage90:6.2f} "
              f"{row.coverage95:6.2f} {ratio:>12s}")
    j_vals, counts = np.unique(report.j_tilde[n], return_counts=True)
    print("J~ distribution:", dict(zip(j_vals.tolist(), counts.tolist())))


# Endogenous design: the data-driven choice concentrates at small J
npiv = run_mc("npiv_sine_log", [1250], REPS, plan=PLAN, det_js=(4, 7), base_seed=1)
show(npiv, 1250, 0, "NPIV design, structural function, n=1250")

# Wiggly regression design: a high dimension is selected when needed
reg = run_mc("reg_wiggly", [2500], REPS, plan=PLAN, det_js=(19, 35), base_seed=1)
show(reg, 2500, 0, "regression design, conditional mean, n=2500")

# Trade design: elasticity target (derivative band)
trade = run_mc("trade_lognormal", [1522], REPS, plan=PLAN, det_js=(7,), base_seed=1)
show(trade, 1522, 1, "log-normal trade design, elasticity, n=1522")
print("constant-elasticity rejection rate:",
      trade.row(1522, "data_driven", 1).reject_rate)

# Fixed-A coverage sweep: nested bands make coverage nondecreasing in A
sweep = a_sweep("npiv_sine_log", 1250, REPS, a_values=(0.0, 0.2, 0.5, 1.0), plan=PLAN, base_seed=1)
print("\nfixed-A coverage sweep:", {a: round(c, 3) for a, c in sweep.items()})
