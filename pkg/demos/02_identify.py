"""Simulate one noisy record and identify the first two modes.

Run: python3 demos/02_identify.py [noise case 1-4]
"""
import sys

import numpy as np

from frameupdate import pipeline as P
from frameupdate.frame_core import assemble, solve_modal

case = int(sys.argv[1]) if len(sys.argv) > 1 else 1
cfg = P.PipelineConfig.from_json(P.bundled_config_path())
cfg = P.PipelineConfig.from_dict({**cfg.to_dict(), "noise": {"case": case, "seed": cfg.noise.seed}})
model = cfg.load_model()

sim = P.simulate(cfg, model)
print(f"noise case {case}: ratios {cfg.noise.accel_sigma_ratio}, {cfg.noise.moment_sigma_ratio}")
print("peak a5x (clean) %.1f mm/s^2, peak r1i %.3e N*mm" % (np.abs(sim.clean["a5x"]).max(), np.abs(sim.clean["r1i"]).max()))

ds = P.identify(cfg, sim.noisy, sim.dt, model)
mats = assemble(model, *model.targets())
w, phi = solve_modal(mats.K_red, mats.mass_red, 2)
for k, e in enumerate(ds.modes):
    d_true = phi[:, k] / np.linalg.norm(phi[:, k])
    mac = (d_true @ e.d_bar) ** 2 / (e.d_bar @ e.d_bar)
    r_true = mats.S @ d_true * np.sign(d_true @ e.d_bar)
    print(f"mode {k + 1}: omega {e.omega:.3f} (true {w[k]:.3f}, {100 * (e.omega / w[k] - 1):+.2f}%), "
          f"damping {e.damping:.3f}, MAC {mac:.5f}, MBM error {np.linalg.norm(e.r_bar - r_true) / np.linalg.norm(r_true):.3f}")
