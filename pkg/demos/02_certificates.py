"""
Checking a gain design before flying it
=======================================

Two certificates are computed from the gains alone.  The contractivity
test looks at the target dynamics of a single agent; the temporal test
looks at the size-independent ODE that governs errors across the mesh.
"""

import numpy as np

from formnet import (ControllerGains, build_pde_coefficients, certify_contractivity,
                     certify_temporal_stability, preset)

scenario = preset()
_, _, plant, gains = scenario.build()

c = certify_contractivity(gains, plant)
print("contractivity")
print(f"  Hessian bounds alpha={c.alpha:g}, beta={c.beta:g}, eta={c.eta:.4f}")
print("  F_d eigenvalues:", np.round(np.sort(c.fd_eigenvalues.real), 4))
print("  epsilon probes passed:", dict(zip(c.epsilon_grid, c.epsilon_passed)))
print("  certified:", c.certified)

coeffs = build_pde_coefficients(gains, plant, scenario.extents)
t = certify_temporal_stability(coeffs, gains, plant)
print("\ntemporal system T'' + F2 T' + F1 T = 0")
print("  B eigenvalues:", np.round(np.sort(t.b_eigenvalues.real), 4))
print(f"  largest sampled Vdot {t.max_vdot:.3g}, skew term {t.max_skew_contribution:.1e}")
print(f"  error bound factor gamma = {t.gamma:.4f}  (sqrt(30) = {np.sqrt(30):.4f})")
print("  certified:", t.certified)

# remove all damping: the energy no longer decreases and both tests fail
undamped = ControllerGains(gains.K, gains.Jbar, np.zeros((3, 3)))
c0 = certify_contractivity(undamped, plant)
t0 = certify_temporal_stability(build_pde_coefficients(undamped, plant, scenario.extents),
                                undamped, plant)
print(f"\nwithout damping: contractivity {c0.certified}, temporal {t0.certified}")
print("  max Re(F_d) =", np.max(c0.fd_eigenvalues.real))
