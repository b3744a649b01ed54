"""
From calibrated parameters to a projection
==========================================

A smooth scalar response (here an area-weighted integral of the simulator's
square-root field, a stand-in for ice volume) is emulated with a
constant-mean Gaussian process. Calibrated parameter draws are pushed
through it and compared with draws that treat every setting as equally
likely.
"""

import numpy as np

from binarycal import calibration as cal
from binarycal import discrepancy as disc
from binarycal import emulator as emu
from binarycal import lpca
from binarycal import projection as proj
from binarycal import synthetic as syn

cfg = syn.SyntheticConfig(seed=0)
ens = syn.synth_ensemble(cfg)
obs, _ = syn.make_observation(cfg)
model = lpca.fit(ens, 10, max_iter=500)
em = emu.fit_emulator(model, ens.design, restarts=3)
basis = disc.build_basis(disc.mismatch_proportions(ens, obs))
prob = cal.CalibrationProblem(obs, model, em.gps, basis, cal.PriorConfig.unit(2))
chain = cal.calibrate(prob, cal.RunConfig(iterations=30_000, burn_in=10_000, thin=10))

native = syn.unit_to_native(cfg, ens.design.points)
response = np.array([syn.ice_volume(t, cfg.grid) for t in native])
sgp = proj.fit_scalar(ens.design, response)

samples, calibrated = proj.project_chain(chain, sgp)
_, baseline = proj.uncalibrated_baseline(ens.design, sgp, len(samples), seed=1)

print(f"response at the truth: {syn.ice_volume(cfg.truth, cfg.grid):.3f}")
for name, s in (("calibrated", calibrated), ("no calibration", baseline)):
    print(f"{name:>15}: median {s['p50']:.3f}  95% [{s['p2.5']:.3f}, {s['p97.5']:.3f}]")
