"""
Parallel MRI with a log-sum gradient penalty
============================================

Simulate a 64x64 phantom seen by four coils through a 30% Poisson-disc
mask, then reconstruct.  The x-step uses the shifted-Gram metric, which
turns the data-consistency subproblem into one explicit gradient step.
"""

import numpy as np

from cpalm import mri
from cpalm.solver import SolverConfig, run_multi_cpalm

data = mri.synthesize_dataset(64, num_coils=4, mask_kind="poisson", ratio=0.3,
                              noise_sigma=0.005, seed=1)
print(f"sampled {data.mask.mean():.1%} of k-space")
print(f"zero-filled SNR {mri.snr(data.zero_filled(), data.ground_truth):.2f} dB")

problem = mri.build_problem(data, mri.ModelSpec(kind="logsum"))
snr = []
result = run_multi_cpalm(problem, SolverConfig(max_iter=300, tol_residual=0.0),
                         callback=lambda z, rec: snr.append(mri.snr(z[0], data.ground_truth)))

for k in (0, 9, 49, 99, 299):
    r = result.trace[k]
    print(f"k={r.k:3d}  F={r.objective:.6g}  SNR={snr[k]:.2f} dB  |dz|={r.increment:.2e}")

u = result.z[0]
print(f"final: SNR {mri.snr(u, data.ground_truth):.2f} dB, "
      f"relErr {mri.rel_err(u, data.ground_truth):.4f}, "
      f"objective never increased: "
      f"{all(r.objective <= r.objective_prev for r in result.trace)}")
