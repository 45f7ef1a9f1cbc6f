"""Pipeline configuration and the stage functions behind the command line.

Each stage is a pure function of the configuration and its input artifacts;
all randomness comes from the named seeds in the configuration.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import sysid
from .bayes import ModalPosterior, NUTSConfig, Priors, sample_posterior
from .bayes.samples import PosteriorSamples
from .dynamics import integrate
from .excitation import NOISE_CASES, GroundMotionSpec, NoiseSpec, add_noise, synthesize_record
from .frame_core import FrameModel, bundled_model_path


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class StageInputError(FileNotFoundError):
    """A stage was run before the artifact it depends on exists."""


@dataclass(frozen=True)
class DynamicsSettings:
    damping_ratio: float = 0.02
    substeps: int = 10
    method: str = "newmark"


@dataclass(frozen=True)
class InferenceSettings:
    chains: int = 4
    draws: int = 1000
    burn_in: int = 1000
    target_accept: float = 0.8
    max_depth: int = 10
    seed: int = 2024
    s_omega: float = 0.4 * np.pi
    s_d: float = 0.05
    s_r: float = 5.0e4

    def nuts_config(self) -> NUTSConfig:
        return NUTSConfig(chains=self.chains, draws=self.draws, burn_in=self.burn_in,
                          target_accept=self.target_accept, max_depth=self.max_depth, seed=self.seed)


@dataclass(frozen=True)
class PredictionSettings:
    qoi: tuple = ("a5x", "r1i")
    thinning: int = 40
    seed: int = 7
    kde_points: int = 512


@dataclass(frozen=True)
class PipelineConfig:
    model: str | None = None
    ground_motion: GroundMotionSpec = field(default_factory=GroundMotionSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    noise_case: int | None = 1
    accel_reference: str = "a5x"
    moment_reference: str = "r1i"
    input_channels: tuple = ("a1x", "a1y")
    dynamics: DynamicsSettings = field(default_factory=DynamicsSettings)
    sysid: sysid.SysIdSettings = field(default_factory=sysid.SysIdSettings)
    inference: InferenceSettings = field(default_factory=InferenceSettings)
    prediction: PredictionSettings = field(default_factory=PredictionSettings)
    base_dir: str = "."

    # -- construction ----------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)} - {"base_dir", "noise_case"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration field(s): {sorted(unknown)}")
        kw = {"base_dir": str(base_dir)}
        if "model" in d:
            if d["model"] is not None and not isinstance(d["model"], str):
                raise ConfigError("model: expected a path string or null")
            kw["model"] = d["model"]
        kw["ground_motion"] = _section(GroundMotionSpec, d.get("ground_motion", {}), "ground_motion")
        noise = dict(d.get("noise", {"case": 1}))
        if not isinstance(noise, dict):
            raise ConfigError("noise: expected an object")
        case = noise.pop("case", None)
        if case is not None:
            if case not in NOISE_CASES:
                raise ConfigError(f"noise.case: must be one of {sorted(NOISE_CASES)}, got {case!r}")
            if "accel_sigma_ratio" in noise or "moment_sigma_ratio" in noise:
                raise ConfigError("noise: give either case or explicit ratios, not both")
            a, m = NOISE_CASES[case]
            noise.update(accel_sigma_ratio=a, moment_sigma_ratio=m)
        kw["noise"] = _section(NoiseSpec, noise, "noise")
        kw["noise_case"] = case
        for key in ("accel_reference", "moment_reference"):
            if key in d:
                if not isinstance(d[key], str):
                    raise ConfigError(f"{key}: expected a channel name")
                kw[key] = d[key]
        if "input_channels" in d:
            kw["input_channels"] = tuple(d["input_channels"])
        kw["dynamics"] = _section(DynamicsSettings, d.get("dynamics", {}), "dynamics")
        kw["sysid"] = _section(sysid.SysIdSettings, d.get("sysid", {}), "sysid")
        kw["inference"] = _section(InferenceSettings, d.get("inference", {}), "inference")
        pred = dict(d.get("prediction", {}))
        if "qoi" in pred:
            pred["qoi"] = tuple(pred["qoi"])
        kw["prediction"] = _section(PredictionSettings, pred, "prediction")
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, base_dir=path.parent)

    def validate(self):
        dyn = self.dynamics
        if not dyn.damping_ratio >= 0:
            raise ConfigError("dynamics.damping_ratio: must be nonnegative")
        if dyn.substeps < 1:
            raise ConfigError("dynamics.substeps: must be >= 1")
        if dyn.method not in ("newmark", "exact"):
            raise ConfigError("dynamics.method: must be 'newmark' or 'exact'")
        s = self.sysid
        if s.block_rows < 1 or s.order < 2 or s.n_modes < 1:
            raise ConfigError("sysid: block_rows, order and n_modes must be positive")
        if s.variant not in ("po", "ordinary"):
            raise ConfigError("sysid.variant: must be 'po' or 'ordinary'")
        if s.selection not in ("contribution", "frequency"):
            raise ConfigError("sysid.selection: must be 'contribution' or 'frequency'")
        if not s.max_damping > 0:
            raise ConfigError("sysid.max_damping: must be positive")
        inf = self.inference
        if inf.chains < 1 or inf.draws < 1 or inf.burn_in < 0:
            raise ConfigError("inference: chains and draws must be positive")
        if not 0 < inf.target_accept < 1:
            raise ConfigError("inference.target_accept: must lie in (0, 1)")
        for k in ("s_omega", "s_d", "s_r"):
            if not getattr(inf, k) > 0:
                raise ConfigError(f"inference.{k}: must be positive")
        p = self.prediction
        if p.thinning < 1:
            raise ConfigError("prediction.thinning: must be >= 1")
        if p.kde_points < 16:
            raise ConfigError("prediction.kde_points: must be >= 16")
        if self.model is not None and not self.model_path().exists():
            raise ConfigError(f"model: file {self.model_path()} does not exist")

    # -- helpers ---------------------------------------------------------------
    def model_path(self) -> Path:
        if self.model is None:
            return bundled_model_path()
        p = Path(self.model)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def load_model(self) -> FrameModel:
        return FrameModel.from_json(self.model_path())

    def to_dict(self) -> dict:
        d = {
            "model": self.model,
            "ground_motion": asdict(self.ground_motion),
            "noise": asdict(self.noise),
            "accel_reference": self.accel_reference,
            "moment_reference": self.moment_reference,
            "input_channels": list(self.input_channels),
            "dynamics": asdict(self.dynamics),
            "sysid": asdict(self.sysid),
            "inference": asdict(self.inference),
            "prediction": asdict(self.prediction),
        }
        d["ground_motion"]["stationary_window"] = list(d["ground_motion"]["stationary_window"])
        d["prediction"]["qoi"] = list(d["prediction"]["qoi"])
        if self.noise_case is not None:
            d["noise"]["case"] = self.noise_case
        return d

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form (16 hex digits)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def seeds(self) -> dict:
        return {"excitation": self.ground_motion.seed, "noise": self.noise.seed,
                "chains": self.inference.seed, "prediction": self.prediction.seed}

    def provenance(self) -> dict:
        return {"config_hash": self.hash(), "seeds": self.seeds()}

    def with_seed_offset(self, offset: int) -> "PipelineConfig":
        """Shift every seed by ``offset`` (a fresh, fully reproducible replicate)."""
        o = int(offset)
        return replace(
            self,
            ground_motion=self.ground_motion.with_seed(self.ground_motion.seed + o),
            noise=replace(self.noise, seed=self.noise.seed + o),
            inference=replace(self.inference, seed=self.inference.seed + o),
            prediction=replace(self.prediction, seed=self.prediction.seed + o),
        )

    def with_seed_override(self, seed: int) -> "PipelineConfig":
        """Derive every stage seed from one master seed."""
        ss = np.random.SeedSequence(int(seed)).generate_state(4)
        e, n, c, p = (int(v) for v in ss)
        return replace(
            self,
            ground_motion=self.ground_motion.with_seed(e),
            noise=replace(self.noise, seed=n),
            inference=replace(self.inference, seed=c),
            prediction=replace(self.prediction, seed=p),
        )


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{name}: unknown field(s) {sorted(unknown)}")
    for f in fields(cls):
        if f.name not in data or not isinstance(f.default, (int, float)):
            continue
        v = data[f.name]
        if isinstance(f.default, bool):
            ok = isinstance(v, bool)
        elif isinstance(f.default, int):
            ok = isinstance(v, int) and not isinstance(v, bool)
        else:
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        if not ok:
            raise ConfigError(f"{name}.{f.name}: expected {type(f.default).__name__}, got {v!r}")
    try:
        if hasattr(cls, "from_dict"):
            return cls.from_dict(data)
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def bundled_config_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "two_storey_pipeline.json"


# ---------------------------------------------------------------------------
# stages


@dataclass
class SimulationOutput:
    dt: float
    clean: dict
    noisy: dict
    accel_labels: list
    moment_labels: list


def simulate(config: PipelineConfig, model: FrameModel | None = None) -> SimulationOutput:
    """Ground motion, time history at the target parameters and observation noise."""
    model = model or config.load_model()
    tk, tm = model.targets()
    gm = config.ground_motion
    ag = synthesize_record(gm)
    ground = np.column_stack([ag, np.zeros_like(ag)])
    dyn = config.dynamics
    res = integrate(model, tk, tm, dyn.damping_ratio, ground, gm.dt, substeps=dyn.substeps, method=dyn.method)
    clean = res.channels(ground_labels=config.input_channels)
    accel = list(config.input_channels) + list(res.accel_labels)
    noisy = add_noise(clean, config.noise, accel, res.moment_labels, config.accel_reference, config.moment_reference)
    return SimulationOutput(gm.dt, clean, noisy, list(res.accel_labels), list(res.moment_labels))


def identify(config: PipelineConfig, channels: dict, dt: float, model: FrameModel | None = None,
             magnitude_phase: bool | None = None) -> sysid.ModalDataset:
    model = model or config.load_model()
    settings = config.sysid
    if magnitude_phase is not None:
        settings = replace(settings, magnitude_phase=magnitude_phase)
    accel = [f"a{nid}{d}" for nid, d in model.master_dofs]
    ds = sysid.identify_dataset(channels, dt, list(config.input_channels), accel, model.observed_labels(),
                                settings, md_labels=model.master_labels())
    ds.metadata.update(config.provenance())
    return ds


def build_posterior(config: PipelineConfig, model: FrameModel, dataset: sysid.ModalDataset) -> ModalPosterior:
    inf = config.inference
    priors = Priors.from_model(model, s_omega=inf.s_omega, s_d=inf.s_d, s_r=inf.s_r)
    return ModalPosterior(model, dataset, priors)


def update(config: PipelineConfig, dataset: sysid.ModalDataset, model: FrameModel | None = None,
           threads: int = 1) -> PosteriorSamples:
    model = model or config.load_model()
    post = build_posterior(config, model, dataset)
    samples = sample_posterior(post, config.inference.nuts_config(), threads=threads)
    samples.metadata.update(config.provenance())
    return samples


def run_replicate(config: PipelineConfig, model: FrameModel | None = None, threads: int = 1):
    """simulate -> identify -> update for one data realisation."""
    model = model or config.load_model()
    sim = simulate(config, model)
    ds = identify(config, sim.noisy, sim.dt, model)
    return sim, ds, update(config, ds, model, threads)


# ---------------------------------------------------------------------------
# artifact I/O


def write_channels_csv(path, dt: float, channels: dict):
    """Time column followed by one column per channel, 17 significant digits."""
    names = list(channels)
    n = len(next(iter(channels.values())))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time"] + names)
    cols = [np.asarray(channels[k]) for k in names]
    for i in range(n):
        w.writerow([repr(round(i * dt, 10))] + [repr(float(c[i])) for c in cols])
    Path(path).write_text(buf.getvalue())


def read_channels_csv(path) -> tuple[float, dict]:
    path = Path(path)
    if not path.exists():
        raise StageInputError(f"missing artifact {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header = rows[0]
    if not header or header[0] != "time":
        raise ConfigError(f"{path}: first column must be 'time'")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    dt = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 1.0
    return dt, {name: data[:, j + 1] for j, name in enumerate(header[1:])}


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise StageInputError(f"missing artifact {p}; run the stage that produces it first")
    return p


def warn_unconverged(samples: PosteriorSamples, threshold=1.1):
    bad = {k: v for k, v in samples.rhat().items() if not v < threshold}
    if bad:
        warnings.warn(f"R-hat >= {threshold} for {sorted(bad)}", RuntimeWarning, stacklevel=2)
    return bad
