"""Scenario documents: defaults, merging, validation and construction.

A scenario is a nested JSON object merged over the packaged
``physical_defaults.yaml``.  Validation errors carry the dotted path of the
offending field (``trap.lambda``, ``imaging.shape`` ...).
"""

import copy
import json
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dynamics import MixtureSpec, TrapModel
from .exceptions import ConfigError
from .fock import OscillatorSpec
from .imaging import ImagingGeometry, NoiseModel, PsfModel
from .mle import MleConfig
from .pipeline import ScenarioConfig
from .quadrature import uniform_angles

__all__ = [
    "LAMBDA_BOUND",
    "load_defaults",
    "load_scenario",
    "merge",
    "apply_overrides",
    "validate",
    "build_scenario",
    "ResolvedScenario",
]

#: Largest accepted ``|lambda|``; beyond it the quartic term dominates low levels.
LAMBDA_BOUND = 0.05
NOISE_MODELS = ("none", "preset", "gaussian", "custom")


def load_defaults():
    """The packaged default scenario document."""
    text = resources.files("toftomo").joinpath("data/physical_defaults.yaml").read_text()
    return yaml.safe_load(text)


def merge(base, update, path=""):
    """Recursive merge of ``update`` into a copy of ``base``; unknown keys raise."""
    out = copy.deepcopy(base)
    if not isinstance(update, dict):
        raise ConfigError("expected an object", path or "<root>")
    for key, value in update.items():
        sub = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError("unknown key", sub)
        if isinstance(base[key], dict):
            out[key] = merge(base[key], value, sub)
        else:
            out[key] = copy.deepcopy(value)
    return out


def apply_overrides(doc, overrides):
    """Apply ``key.path=value`` strings; values are parsed as YAML scalars or lists."""
    update = {}
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        node = update
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError("cannot set a field below a scalar", key)
        try:
            node[parts[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse value {raw!r}", key) from exc
    return merge(doc, update)


def load_scenario(path=None, overrides=None):
    """Defaults, then the JSON file at ``path``, then ``overrides``; validated."""
    doc = load_defaults()
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"no such file {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON ({exc})") from exc
        user.pop("$schema", None)
        doc = merge(doc, user)
    doc = apply_overrides(doc, overrides)
    validate(doc)
    return doc


# ---------------------------------------------------------------------------
# Field checks


def _number(doc, path, lo=None, hi=None, lo_open=False, integer=False, allow_none=False):
    val = _get(doc, path)
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", path)
    if not np.isfinite(val):
        raise ConfigError("must be finite", path)
    if integer and int(val) != val:
        raise ConfigError(f"expected an integer, got {val}", path)
    if lo is not None and (val < lo or (lo_open and val == lo)):
        raise ConfigError(f"must be {'>' if lo_open else '>='} {lo}, got {val}", path)
    if hi is not None and val > hi:
        raise ConfigError(f"must be <= {hi}, got {val}", path)
    return int(val) if integer else float(val)


def _get(doc, path):
    node = doc
    for part in path.split("."):
        node = node[part]
    return node


def _choice(doc, path, options):
    val = _get(doc, path)
    if val not in options:
        raise ConfigError(f"expected one of {list(options)}, got {val!r}", path)
    return val


def _bool(doc, path):
    val = _get(doc, path)
    if not isinstance(val, bool):
        raise ConfigError(f"expected true or false, got {val!r}", path)
    return val


def validate(doc):
    """Check every field; raises :class:`ConfigError` naming the first bad path."""
    _number(doc, "seed", lo=0, integer=True)
    _number(doc, "trap.frequency_hz", lo=0, lo_open=True)
    lam = _number(doc, "trap.lambda")
    if abs(lam) > LAMBDA_BOUND:
        raise ConfigError(f"|lambda| must be <= {LAMBDA_BOUND}, got {lam}", "trap.lambda")
    _number(doc, "trap.n_max", lo=2, integer=True)
    _number(doc, "trap.mass_kg", lo=0, lo_open=True)

    pops = doc["state"]["populations"]
    if not isinstance(pops, list) or len(pops) != 3:
        raise ConfigError("expected a list of three populations", "state.populations")
    try:
        MixtureSpec(tuple(pops))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "state.populations") from exc
    _number(doc, "state.displacement_m")
    _number(doc, "state.depth_jump_ratio", lo=0, lo_open=True)

    values = doc["angles"]["values"]
    if values is None:
        _number(doc, "angles.count", lo=1, integer=True)
        _number(doc, "angles.start_rad")
    elif (not isinstance(values, list) or not values
          or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v) for v in values)):
        raise ConfigError("expected a non-empty list of finite numbers", "angles.values")

    for key in ("magnification", "flight_time_s", "pixel_pitch_m", "exposure_s", "total_counts"):
        _number(doc, f"imaging.{key}", lo=0, lo_open=True)
    _number(doc, "imaging.n_averaged", lo=1, integer=True)
    shape = doc["imaging"]["shape"]
    if (not isinstance(shape, list) or len(shape) != 2
            or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 8 for s in shape)):
        raise ConfigError(f"expected two integers >= 8, got {shape!r}", "imaging.shape")
    _bool(doc, "imaging.blur")

    _number(doc, "psf.sigma_x_m", lo=0, lo_open=True)
    _number(doc, "psf.sigma_y_m", lo=0, lo_open=True)

    model = _choice(doc, "noise.model", NOISE_MODELS)
    _choice(doc, "noise.preset", ("displaced_n0", "n1", "displaced_n1"))
    _number(doc, "noise.gaussian_rms", lo=0)
    _number(doc, "noise.gain", lo=0, allow_none=True)
    _number(doc, "noise.cic_rate", lo=0, hi=1)
    for key in ("em_gain_counts", "readout_sigma", "offset", "averaged_amplitude", "scale_factor"):
        _number(doc, f"noise.{key}", lo=0)
    if model == "gaussian" and doc["noise"]["gaussian_rms"] == 0:
        raise ConfigError("gaussian noise needs gaussian_rms > 0", "noise.gaussian_rms")

    _number(doc, "deconvolution.iterations", lo=0, integer=True)
    _number(doc, "deconvolution.filter_floor", lo=0)
    _number(doc, "integration.u_max", lo=0, lo_open=True)
    _number(doc, "mle.tolerance", lo=0, lo_open=True)
    _number(doc, "mle.max_iterations", lo=1, integer=True)
    _choice(doc, "mle.initial", ("identity", "ones"))
    reps = _number(doc, "bootstrap.replicas", lo=0, integer=True)
    if reps == 1:
        raise ConfigError("must be 0 (off) or >= 2", "bootstrap.replicas")
    _number(doc, "wigner.extent", lo=0, lo_open=True)
    _number(doc, "wigner.step", lo=0, lo_open=True)
    return doc


# ---------------------------------------------------------------------------
# Construction


def _noise(doc):
    n = doc["noise"]
    if n["model"] == "none":
        return None
    if n["model"] == "preset":
        return NoiseModel.preset(n["preset"])
    if n["model"] == "gaussian":
        return NoiseModel.gaussian(n["gaussian_rms"])
    return NoiseModel(n["cic_rate"], n["em_gain_counts"], n["readout_sigma"], n["offset"],
                      n["averaged_amplitude"], n["scale_factor"])


class ResolvedScenario:
    """A validated document and the :class:`ScenarioConfig` built from it."""

    def __init__(self, doc, config, wigner_extent, wigner_step):
        self.doc = doc
        self.config = config
        self.wigner_extent = wigner_extent
        self.wigner_step = wigner_step


def build_scenario(doc):
    """Construct a :class:`ScenarioConfig` from a validated document."""
    validate(doc)
    t, s, im = doc["trap"], doc["state"], doc["imaging"]
    spec = OscillatorSpec.from_frequency(float(t["mass_kg"]), float(t["frequency_hz"]), int(t["n_max"]))
    trap = TrapModel(spec, float(t["lambda"]))
    a = doc["angles"]
    angles = (np.asarray(a["values"], dtype=float) if a["values"] is not None
              else uniform_angles(int(a["count"]), float(a["start_rad"])))
    geometry = ImagingGeometry(float(im["magnification"]), float(im["flight_time_s"]),
                               float(im["pixel_pitch_m"]), float(im["exposure_s"]))
    mle = MleConfig(n_max=int(t["n_max"]), tolerance=float(doc["mle"]["tolerance"]),
                    max_iterations=int(doc["mle"]["max_iterations"]), initial=doc["mle"]["initial"])
    try:
        cfg = ScenarioConfig(
            trap=trap,
            mixture=MixtureSpec(tuple(s["populations"])),
            displacement=float(s["displacement_m"]),
            depth_jump_ratio=float(s["depth_jump_ratio"]),
            angles=angles,
            imaging=geometry,
            psf=PsfModel(float(doc["psf"]["sigma_x_m"]), float(doc["psf"]["sigma_y_m"])),
            noise=_noise(doc),
            mle=mle,
            seed=int(doc["seed"]),
            shape=tuple(im["shape"]),
            total_counts=float(im["total_counts"]),
            n_averaged=int(im["n_averaged"]),
            blur=bool(im["blur"]),
            rl_iterations=int(doc["deconvolution"]["iterations"]),
            rl_filter_floor=float(doc["deconvolution"]["filter_floor"]),
            u_max=float(doc["integration"]["u_max"]),
            bootstrap_replicas=int(doc["bootstrap"]["replicas"]),
            noise_gain=None if doc["noise"]["gain"] is None else float(doc["noise"]["gain"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ResolvedScenario(doc, cfg, float(doc["wigner"]["extent"]), float(doc["wigner"]["step"]))
