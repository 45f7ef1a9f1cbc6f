"""Command-line driver: ``frameupdate <stage> --config cfg.json --out dir``.

Stages hand over through files in ``--out``:

========== ============================== =====================================
stage      reads                          writes
========== ============================== =====================================
simulate   config                         timehistory_clean.csv, timehistory.csv
identify   timehistory.csv                modal_dataset.json
update     modal_dataset.json             draws.csv, diagnostics.json, summary.md
predict    draws.csv, diagnostics.json    predictive_<qoi>_cdf.csv / _kde.csv,
                                          predictive_summary.json
report     draws.csv, diagnostics.json    report.md
========== ============================== =====================================
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import pipeline as P
from . import predict as PR
from .bayes import AdaptationError, PosteriorEvaluationError
from .bayes.samples import PosteriorSamples
from .dynamics import IntegrationError
from .excitation import synthesize_record
from .frame_core import FrameError
from .sysid import IdentificationError, ModalDataset

log = logging.getLogger("frameupdate")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 2, 3, 4
STAGES = ("simulate", "identify", "update", "predict", "report", "all")


class ConvergenceFailure(RuntimeError):
    pass


def _header(cfg: P.PipelineConfig) -> str:
    seeds = ",".join(f"{k}:{v}" for k, v in cfg.seeds().items())
    return f"# frameupdate config_hash={cfg.hash()} seeds={seeds}\n"


def _prepend(path: Path, header: str):
    path.write_text(header + path.read_text())


# -- stages ------------------------------------------------------------------------


def stage_simulate(cfg, out: Path, args):
    sim = P.simulate(cfg)
    P.write_channels_csv(out / "timehistory_clean.csv", sim.dt, sim.clean)
    P.write_channels_csv(out / "timehistory.csv", sim.dt, sim.noisy)
    for name in ("timehistory_clean.csv", "timehistory.csv"):
        _prepend(out / name, _header(cfg))
    log.info("simulated %d samples at dt=%g s", len(next(iter(sim.noisy.values()))), sim.dt)


def stage_identify(cfg, out: Path, args):
    dt, channels = P.read_channels_csv(P.require(out / "timehistory.csv"))
    ds = P.identify(cfg, channels, dt, magnitude_phase=True if args.magnitude_phase else None)
    ds.to_json(out / "modal_dataset.json")
    log.info("identified frequencies (rad/s): %s", np.round(ds.omega, 4).tolist())


def stage_update(cfg, out: Path, args):
    ds = ModalDataset.from_json(P.require(out / "modal_dataset.json"))
    samples = P.update(cfg, ds, threads=args.threads)
    samples.to_csv(out / "draws.csv")
    _prepend(out / "draws.csv", _header(cfg))
    P.write_json(out / "diagnostics.json", samples.diagnostics())
    model = cfg.load_model()
    targets = {p.name: p.target for p in model.parameters if p.target is not None}
    (out / "summary.md").write_text(PR.markdown_table(samples.summary(), targets, "Posterior summary")
                                    + _provenance_md(cfg))
    _check_convergence(samples, args)


def _load_samples(out: Path) -> PosteriorSamples:
    draws = P.require(out / "draws.csv")
    diag = P.require(out / "diagnostics.json")
    return PosteriorSamples.from_csv(draws, diag)


def _check_convergence(samples, args):
    bad = {k: v for k, v in samples.rhat().items() if not v < 1.1}
    if bad:
        msg = "R-hat >= 1.1 for " + ", ".join(f"{k} ({v:.3f})" for k, v in sorted(bad.items()))
        if args.allow_unconverged:
            log.warning("%s; continuing as requested", msg)
        else:
            raise ConvergenceFailure(msg)


def stage_predict(cfg, out: Path, args):
    samples = _load_samples(out)
    _check_convergence(samples, args)
    model = cfg.load_model()
    pred = cfg.prediction
    gm = cfg.ground_motion.with_seed(pred.seed)
    ag = synthesize_record(gm)
    draws = PR.thinned_draws(samples, pred.thinning)
    dyn = cfg.dynamics
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = PR.predict_peaks(model, draws, ag, gm.dt, pred.qoi, dyn.damping_ratio, dyn.substeps, dyn.method)
    for w in caught:
        log.warning("%s", w.message)
    tk, tm = model.targets()
    truth = PR.predict_peaks(model, np.concatenate([tm, tk])[None, :], ag, gm.dt, pred.qoi,
                             dyn.damping_ratio, dyn.substeps, dyn.method)
    summary = {"provenance": cfg.provenance(), "n_draws": int(draws.shape[0]), "quantities": {}}
    hdr = _header(cfg)
    for q, r in res.items():
        r.add_density(pred.kde_points)
        lines = [hdr, "value,ecdf,plotting_position\n"]
        lines += [f"{v!r},{a!r},{b!r}\n" for v, a, b in r.to_rows()]
        (out / f"predictive_{q}_cdf.csv").write_text("".join(lines))
        if r.grid is not None:
            kl = [hdr, "value,density\n"] + [f"{float(x)!r},{float(d)!r}\n" for x, d in zip(r.grid, r.density)]
            (out / f"predictive_{q}_kde.csv").write_text("".join(kl))
        t = float(truth[q].samples[0])
        summary["quantities"][q] = {**r.summary, "n_failed": r.n_failed, "true_parameter_peak": t,
                                    "bracketed_5_95": bool(r.brackets(t))}
    modal = PR.predict_modal(model, draws, cfg.sysid.n_modes)
    summary["modal"] = {k: v.summary for k, v in modal.items() if k.startswith("f")}
    P.write_json(out / "predictive_summary.json", summary)


def stage_report(cfg, out: Path, args):
    runs = [out] + [Path(r) for r in (args.runs or [])]
    model = cfg.load_model()
    targets = {p.name: p.target for p in model.parameters if p.target is not None}
    summaries = []
    text = []
    for i, r in enumerate(runs):
        s = _load_samples(r)
        summaries.append(s.summary())
        title = "Posterior summary" + (f" (run {i + 1})" if len(runs) > 1 else "")
        text.append(PR.markdown_table(summaries[-1], targets, title))
        text.append(_diagnostics_md(s))
    if len(summaries) > 1:
        text.append("### Across runs\n\n" + PR.cross_run_table(PR.cross_run_summary(summaries), targets))
    pred = out / "predictive_summary.json"
    if pred.exists():
        d = json.loads(pred.read_text())
        text.append(PR.markdown_table({k: v for k, v in d["quantities"].items()}, None, "Predicted peaks"))
    text.append(_provenance_md(cfg))
    report = "\n".join(text)
    (out / "report.md").write_text(report)
    print(report)


def _diagnostics_md(s: PosteriorSamples) -> str:
    r = s.rhat()
    worst = max(r, key=lambda k: r[k])
    return (f"\nchains: {s.n_chains}, draws per chain: {s.n_draws}, divergences: {int(s.divergent.sum())}, "
            f"max R-hat: {r[worst]:.4f} ({worst})\n")


def _provenance_md(cfg) -> str:
    seeds = ", ".join(f"{k} {v}" for k, v in cfg.seeds().items())
    return f"\nconfig hash `{cfg.hash()}`; seeds: {seeds}\n"


def stage_all(cfg, out, args):
    for name in ("simulate", "identify", "update", "predict", "report"):
        log.info("stage %s", name)
        HANDLERS[name](cfg, out, args)


HANDLERS = {
    "simulate": stage_simulate,
    "identify": stage_identify,
    "update": stage_update,
    "predict": stage_predict,
    "report": stage_report,
    "all": stage_all,
}


# -- entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frameupdate", description="Bayesian frame model updating pipeline.")
    ap.add_argument("stage", choices=STAGES)
    ap.add_argument("--config", help="pipeline JSON (default: bundled example frame)")
    ap.add_argument("--out", default="frameupdate_out", help="artifact directory")
    ap.add_argument("--seed-override", type=int, help="derive every seed from this value")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for chains")
    ap.add_argument("--magnitude-phase", action="store_true", help="rotate modes with magnitude and phase")
    ap.add_argument("--allow-unconverged", action="store_true", help="continue when R-hat >= 1.1")
    ap.add_argument("--runs", nargs="*", help="report: further run directories to aggregate")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = P.PipelineConfig.from_json(args.config or P.bundled_config_path())
        if args.seed_override is not None:
            if args.seed_override < 0:
                raise P.ConfigError("--seed-override: must be nonnegative")
            cfg = cfg.with_seed_override(args.seed_override)
        if args.threads < 1:
            raise P.ConfigError("--threads: must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.stage](cfg, out, args)
    except P.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except P.StageInputError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (IdentificationError, PosteriorEvaluationError, AdaptationError, IntegrationError, FrameError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
