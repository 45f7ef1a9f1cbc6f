"""Short posterior run followed by a predictive peak distribution.

Uses 2 chains x 300 draws so it finishes in about a minute; the bundled
configuration (4 x 1000) is what the acceptance suite runs.

Run: python3 demos/03_update_and_predict.py
"""
import dataclasses
import warnings

import numpy as np

from frameupdate import pipeline as P
from frameupdate import predict as PR
from frameupdate.excitation import synthesize_record

cfg = P.PipelineConfig.from_json(P.bundled_config_path())
cfg = dataclasses.replace(cfg, inference=dataclasses.replace(cfg.inference, chains=2, draws=300, burn_in=300))
model = cfg.load_model()

with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    sim, ds, samples = P.run_replicate(cfg, model)
targets = {p.name: p.target for p in model.parameters if p.target is not None}
print(PR.markdown_table(samples.summary(), targets, "Posterior (case 1, short run)"))
print("max R-hat %.3f, divergences %d" % (max(samples.rhat().values()), samples.divergent.sum()))

# held-out excitation: same spectrum, prediction seed
gm = cfg.ground_motion.with_seed(cfg.prediction.seed)
ag = synthesize_record(gm)
draws = PR.thinned_draws(samples, 6)
pred = PR.predict_peaks(model, draws, ag, gm.dt, ["a5x", "r1i"])
tk, tm = model.targets()
truth = PR.predict_peaks(model, np.concatenate([tm, tk])[None], ag, gm.dt, ["a5x", "r1i"])
for q, r in pred.items():
    t = truth[q].samples[0]
    print(f"{q}: {r.samples.size} draws, 5/50/95% = {r.percentile(5):.4g} / {r.percentile(50):.4g} / "
          f"{r.percentile(95):.4g}; true-parameter peak {t:.4g} ({'inside' if r.brackets(t) else 'outside'} 5-95%)")
