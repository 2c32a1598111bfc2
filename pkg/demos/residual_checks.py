"""quick model-checking pass: algebraic identities on tiny fixtures,
then aggregated residuals on a simulated cohort"""

from effage import mc

# identities: estimator equations that must hold on any dataset
report = mc.identity_suite(n_fixtures=20, seed=3)
print("identity checks")
for check in report.checks:
    flag = "ok " if check.passed else "BAD"
    print(f"  {flag} {check.name}: {check.observed:.2e} <= {check.bound:.0e}")

# residuals: observed minus fitted event counts, summed over units.
# centered and scaled they should look like noise, not structure
report = mc.martingale_study(scenario="power-count", n=800, seed=5)
print("\nresidual checks (n=800)")
for check in report.checks:
    flag = "ok " if check.passed else "BAD"
    print(f"  {flag} {check.name}: observed {check.observed:.4f}, bound {check.bound:.4f}")

print("\noverall:", "PASS" if report.passed else "FAIL")
