"""
JSON run configuration: parsing with field-level diagnostics and serialization.

The scene's subbands are given either explicitly (``"subbands": [...]``) or
as a band plan (``"band": {...}``) that expands to the default frequency
grid and absorption table. Serialization always writes the explicit form, so
parse -> serialize -> parse is idempotent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .channel import Reference, SceneConfig, TargetTruth, default_subbands
from .errors import InvalidParameterError
from .experiments import SweepSpec
from .sensing import SensingOptions
from .waveform import SubbandParams

SCHEMA_VERSION = 1
PAPER_SCALE = {"num_subbands": 8, "M": 256, "N": 256, "trials": 500,
               "snr_grid_db": [float(s) for s in range(-12, 16)]}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    sweep: SweepSpec
    schema_version: int = SCHEMA_VERSION

    @property
    def scene(self) -> SceneConfig:
        return self.sweep.scene


def _mapping(obj, path: str, required: set[str], optional: set[str]) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - required - optional)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
    missing = sorted(required - set(obj))
    if missing:
        raise ConfigError(f"{path}.{missing[0]}" if path else missing[0], "missing required field")
    return obj


def _number(obj: dict, key: str, path: str, default=None, integer: bool = False):
    if key not in obj:
        if default is None:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{path}.{key}", f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _bool(obj: dict, key: str, path: str, default: bool) -> bool:
    value = obj.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", f"expected true/false, got {value!r}")
    return value


def _number_list(obj: dict, key: str, path: str, default) -> tuple[float, ...]:
    value = obj.get(key, default)
    if not isinstance(value, list) or not value or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{path}.{key}", "expected a nonempty list of numbers")
    return tuple(float(v) for v in value)


def _even_m(value: int, field: str) -> int:
    if value < 2 or value % 2:
        raise ConfigError(field, f"M must be even and >= 2 (the DFnT eigenvalues require an "
                                 f"even chirp count), got {value}")
    return value


def _parse_subbands(scene: dict) -> tuple[SubbandParams, ...]:
    if ("band" in scene) == ("subbands" in scene):
        raise ConfigError("scene.subbands", "give exactly one of 'band' or 'subbands'")
    if "band" in scene:
        path = "scene.band"
        band = _mapping(scene["band"], path, {"num_subbands", "M", "N"},
                        {"delta_f", "f_start", "f_step", "noise_var"})
        K = _number(band, "num_subbands", path, integer=True)
        if K < 1:
            raise ConfigError(f"{path}.num_subbands", "need at least one subband")
        M = _even_m(_number(band, "M", path, integer=True), f"{path}.M")
        N = _number(band, "N", path, integer=True)
        try:
            return default_subbands(K, M, N,
                                    delta_f=_number(band, "delta_f", path, 3.9e6),
                                    f_start=_number(band, "f_start", path, 0.30e12),
                                    f_step=_number(band, "f_step", path, 50e9),
                                    noise_var=_number(band, "noise_var", path, 1.0))
        except InvalidParameterError as exc:
            raise ConfigError(path, str(exc)) from None
    items = scene["subbands"]
    if not isinstance(items, list) or not items:
        raise ConfigError("scene.subbands", "expected a nonempty list")
    out = []
    for i, item in enumerate(items):
        path = f"scene.subbands[{i}]"
        sb = _mapping(item, path, {"f_c", "delta_f", "M", "N"}, {"index", "k_abs", "noise_var"})
        M = _even_m(_number(sb, "M", path, integer=True), f"{path}.M")
        try:
            out.append(SubbandParams(
                index=_number(sb, "index", path, i, integer=True),
                f_c=_number(sb, "f_c", path), delta_f=_number(sb, "delta_f", path),
                M=M, N=_number(sb, "N", path, integer=True),
                k_abs=_number(sb, "k_abs", path, 0.0),
                noise_var=_number(sb, "noise_var", path, 1.0)))
        except InvalidParameterError as exc:
            raise ConfigError(path, str(exc)) from None
    return tuple(out)


def _parse_scene(obj) -> SceneConfig:
    scene = _mapping(obj, "scene", {"targets", "reference"},
                     {"band", "subbands", "max_velocity", "p_avg", "pl_threshold_db"})
    targets_raw = scene["targets"]
    if not isinstance(targets_raw, list) or not targets_raw:
        raise ConfigError("scene.targets", "expected a nonempty list")
    targets = []
    for i, t in enumerate(targets_raw):
        path = f"scene.targets[{i}]"
        t = _mapping(t, path, {"range", "velocity"}, {"amplitude"})
        rng = _number(t, "range", path)
        if rng <= 0:
            raise ConfigError(f"{path}.range", f"must be positive, got {rng}")
        amp = _number(t, "amplitude", path, 1.0)
        if amp <= 0:
            raise ConfigError(f"{path}.amplitude", f"must be positive, got {amp}")
        targets.append(TargetTruth(range=rng, velocity=_number(t, "velocity", path),
                                   scatter_coeff=complex(amp)))
    ref = _mapping(scene["reference"], "scene.reference", {"snr_db", "range"}, {"subband"})
    reference = Reference(snr_db=_number(ref, "snr_db", "scene.reference"),
                          range=_number(ref, "range", "scene.reference"),
                          subband=_number(ref, "subband", "scene.reference", 0, integer=True))
    subbands = _parse_subbands(scene)
    try:
        return SceneConfig(targets=tuple(targets), subbands=subbands, reference=reference,
                           max_velocity=_number(scene, "max_velocity", "scene", 50.0),
                           p_avg=_number(scene, "p_avg", "scene", 1.0),
                           pl_threshold_db=_number(scene, "pl_threshold_db", "scene", 110.0))
    except InvalidParameterError as exc:
        raise ConfigError("scene", str(exc)) from None


_SWEEP_KEYS = {"snr_grid_db", "distance_grid", "trials", "seed", "oversampling", "guard",
               "refine_factor", "refine_levels", "use_true_amplitude", "random_phase"}


def _parse_sweep(obj, scene: SceneConfig) -> SweepSpec:
    path = "sweep"
    sw = _mapping(obj, path, set(), _SWEEP_KEYS)
    defaults = SweepSpec(scene=scene)
    over = sw.get("oversampling", list(defaults.sensing.oversampling))
    if (not isinstance(over, list) or len(over) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 2 for v in over)):
        raise ConfigError(f"{path}.oversampling", "expected two integers >= 2")
    trials = _number(sw, "trials", path, defaults.trials, integer=True)
    if trials < 1:
        raise ConfigError(f"{path}.trials", "must be >= 1")
    distances = _number_list(sw, "distance_grid", path, list(defaults.distance_grid))
    if any(d <= 0 for d in distances):
        raise ConfigError(f"{path}.distance_grid", "distances must be positive")
    guard = _number(sw, "guard", path, defaults.sensing.guard, integer=True)
    factor = _number(sw, "refine_factor", path, defaults.sensing.refine_factor, integer=True)
    levels = _number(sw, "refine_levels", path, defaults.sensing.refine_levels, integer=True)
    if guard < 0:
        raise ConfigError(f"{path}.guard", "must be >= 0")
    if factor < 2:
        raise ConfigError(f"{path}.refine_factor", "must be >= 2")
    if levels < 0:
        raise ConfigError(f"{path}.refine_levels", "must be >= 0")
    seed = _number(sw, "seed", path, defaults.seed, integer=True)
    if seed < 0:
        raise ConfigError(f"{path}.seed", "must be nonnegative")
    return SweepSpec(
        scene=scene,
        snr_grid_db=_number_list(sw, "snr_grid_db", path, list(defaults.snr_grid_db)),
        distance_grid=distances,
        trials=trials,
        seed=seed,
        sensing=SensingOptions(oversampling=(over[0], over[1]), guard=guard,
                               refine_factor=factor, refine_levels=levels, p_avg=scene.p_avg),
        use_true_amplitude=_bool(sw, "use_true_amplitude", path, False),
        random_phase=_bool(sw, "random_phase", path, True),
    )


def parse_config(obj) -> RunConfig:
    top = _mapping(obj, "", {"schema_version", "scene"}, {"sweep"})
    version = top["schema_version"]
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported schema version {version!r} "
                                            f"(supported: {SCHEMA_VERSION})")
    scene = _parse_scene(top["scene"])
    return RunConfig(sweep=_parse_sweep(top.get("sweep", {}), scene))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
    return parse_config(obj)


def default_config_text() -> str:
    return resources.files("thz_ocdm").joinpath("data/desk.json").read_text()


def load_default_config() -> RunConfig:
    return parse_config(json.loads(default_config_text()))


def config_to_dict(config: RunConfig) -> dict:
    scene, sweep = config.scene, config.sweep
    return {
        "schema_version": config.schema_version,
        "scene": {
            "targets": [{"range": t.range, "velocity": t.velocity, "amplitude": abs(t.scatter_coeff)}
                        for t in scene.targets],
            "subbands": [{"index": sb.index, "f_c": sb.f_c, "delta_f": sb.delta_f, "M": sb.M,
                          "N": sb.N, "k_abs": sb.k_abs, "noise_var": sb.noise_var}
                         for sb in scene.subbands],
            "reference": {"snr_db": scene.reference.snr_db, "range": scene.reference.range,
                          "subband": scene.reference.subband},
            "max_velocity": scene.max_velocity,
            "p_avg": scene.p_avg,
            "pl_threshold_db": scene.pl_threshold_db,
        },
        "sweep": {
            "snr_grid_db": list(sweep.snr_grid_db),
            "distance_grid": list(sweep.distance_grid),
            "trials": sweep.trials,
            "seed": sweep.seed,
            "oversampling": list(sweep.sensing.oversampling),
            "guard": sweep.sensing.guard,
            "refine_factor": sweep.sensing.refine_factor,
            "refine_levels": sweep.sensing.refine_levels,
            "use_true_amplitude": sweep.use_true_amplitude,
            "random_phase": sweep.random_phase,
        },
    }


def with_overrides(config: RunConfig, *, seed: int | None = None,
                   pl_threshold_db: float | None = None, paper_scale: bool = False) -> RunConfig:
    sweep = config.sweep
    scene = sweep.scene
    if paper_scale:
        first = scene.subbands[0]
        subbands = default_subbands(PAPER_SCALE["num_subbands"], PAPER_SCALE["M"], PAPER_SCALE["N"],
                                    delta_f=first.delta_f, noise_var=first.noise_var)
        ref = scene.reference
        if ref.subband not in {sb.index for sb in subbands}:
            ref = replace(ref, subband=subbands[0].index)
        scene = replace(scene, subbands=subbands, reference=ref)
        sweep = replace(sweep, trials=max(sweep.trials, PAPER_SCALE["trials"]),
                        snr_grid_db=tuple(PAPER_SCALE["snr_grid_db"]))
    if pl_threshold_db is not None:
        scene = replace(scene, pl_threshold_db=float(pl_threshold_db))
    if seed is not None:
        sweep = replace(sweep, seed=int(seed))
    return replace(config, sweep=replace(sweep, scene=scene))
