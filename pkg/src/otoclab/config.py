"""Campaign configuration: typed configs, JSON round-trip, validation.

Config files use explicit unit suffixes (``*_hz``, ``*_s``) to keep the
2*pi bookkeeping out of user hands; in memory everything is rad/s and
seconds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Optional

from .noise import NoiseSpec
from .spin import TWO_PI, HamiltonianSpec


class ConfigError(ValueError):
    """Invalid or inconsistent campaign configuration."""


@dataclass(frozen=True)
class ShotsOverride:
    """Shot-count override for readout times at or beyond ``min_time_s``."""

    min_time_s: float
    n_shots: int


@dataclass(frozen=True)
class CampaignConfig:
    """Full description of one OTOC measurement campaign."""

    hamiltonian: HamiltonianSpec
    times: tuple[float, ...]
    n_unitaries: int
    order: int = 2
    w_sites: tuple[int, ...] = ()  # empty = all sites
    v_site: int = 1
    v_pauli: str = "z"
    n_shots: int = 150
    n_shots_overrides: tuple[ShotsOverride, ...] = ()
    noise: Optional[NoiseSpec] = None
    exact_expectations: bool = False
    seed: int = 0
    output_dir: str = "runs/otoc"

    def __post_init__(self):
        if not self.times:
            raise ConfigError("times must be non-empty")
        if any(t < 0 for t in self.times):
            raise ConfigError("times must be >= 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("times must be strictly increasing")
        if self.n_unitaries < 2:
            raise ConfigError("n_unitaries must be >= 2")
        if not 0 <= self.order <= self.hamiltonian.n_spins:
            raise ConfigError("order must be within 0..n_spins")
        if not self.exact_expectations:
            if self.n_shots < 1:
                raise ConfigError("n_shots must be >= 1 in shot mode")
            if any(o.n_shots < 1 for o in self.n_shots_overrides):
                raise ConfigError("n_shots overrides must be >= 1")
        if self.exact_expectations and self.noise is not None:
            raise ConfigError(
                "per-shot dephasing requires shot sampling; disable exact_expectations"
            )
        n = self.hamiltonian.n_spins
        if not 1 <= self.v_site <= n:
            raise ConfigError(f"v_site outside 1..{n}")
        if any(not 1 <= w <= n for w in self.w_sites):
            raise ConfigError(f"w_sites outside 1..{n}")

    @property
    def resolved_w_sites(self) -> tuple[int, ...]:
        return self.w_sites or tuple(range(1, self.hamiltonian.n_spins + 1))

    def n_shots_at(self, t: float) -> int:
        """Shot count for one readout time (0 in exact-expectation mode)."""
        if self.exact_expectations:
            return 0
        n = self.n_shots
        for override in sorted(self.n_shots_overrides, key=lambda o: o.min_time_s):
            if t >= override.min_time_s - 1e-12:
                n = override.n_shots
        return n


@dataclass(frozen=True)
class EntropyCampaignConfig:
    """Randomized z-basis readout campaign for Renyi entropies.

    One fixed random product state (drawn from the campaign seed) is evolved
    to each readout time; fresh local random unitaries are applied before
    every z readout.  ``partitions=()`` means all prefixes {1..k}.
    """

    hamiltonian: HamiltonianSpec
    times: tuple[float, ...]
    n_unitaries: int
    n_shots: int = 150
    partitions: tuple[tuple[int, ...], ...] = ()
    noise: Optional[NoiseSpec] = None
    exact_probabilities: bool = False
    seed: int = 0
    output_dir: str = "runs/entropy"

    def __post_init__(self):
        if not self.times:
            raise ConfigError("times must be non-empty")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("times must be strictly increasing")
        if self.n_unitaries < 2:
            raise ConfigError("n_unitaries must be >= 2")
        if not self.exact_probabilities and self.n_shots < 2:
            raise ConfigError("n_shots must be >= 2 for the pair estimator")
        if self.exact_probabilities and self.noise is not None:
            raise ConfigError(
                "per-shot dephasing requires shot sampling; disable exact_probabilities"
            )
        n = self.hamiltonian.n_spins
        for part in self.partitions:
            if not part:
                raise ConfigError("partitions must be non-empty site lists")
            if any(not 1 <= s <= n for s in part):
                raise ConfigError(f"partition sites outside 1..{n}")
            if len(set(part)) != len(part):
                raise ConfigError("partition sites must be unique")

    @property
    def resolved_partitions(self) -> tuple[tuple[int, ...], ...]:
        if self.partitions:
            return self.partitions
        n = self.hamiltonian.n_spins
        return tuple(tuple(range(1, k + 1)) for k in range(1, n + 1))


# --- JSON round trip --------------------------------------------------------


def _angular(obj: dict, name: str, default=None) -> float:
    """Read an angular frequency given either as <name>_rad_per_s or <name>_hz.

    Serialized configs always write rad/s (exact float round trip); hand
    written configs may use the friendlier Hz form.
    """
    rad_key, hz_key = f"{name}_rad_per_s", f"{name}_hz"
    if rad_key in obj and hz_key in obj:
        raise ConfigError(f"give only one of {rad_key} / {hz_key}")
    if rad_key in obj:
        return float(obj[rad_key])
    if hz_key in obj:
        return TWO_PI * float(obj[hz_key])
    if default is None:
        raise ConfigError(f"missing {rad_key} or {hz_key}")
    return default


def _hamiltonian_to_json(spec: HamiltonianSpec) -> dict:
    return {
        "n_spins": spec.n_spins,
        "j0_rad_per_s": spec.j0,
        "alpha": spec.alpha,
        "b_field_rad_per_s": spec.b_field,
        "double_count_pairs": spec.double_count_pairs,
    }


def _hamiltonian_from_json(obj: dict) -> HamiltonianSpec:
    try:
        return HamiltonianSpec(
            n_spins=int(obj["n_spins"]),
            j0=_angular(obj, "j0"),
            alpha=float(obj["alpha"]),
            b_field=_angular(obj, "b_field"),
            double_count_pairs=bool(obj.get("double_count_pairs", False)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad hamiltonian section: {exc}") from exc


def _noise_to_json(spec: Optional[NoiseSpec]) -> Optional[dict]:
    if spec is None:
        return None
    return {
        "white_std_rad_per_s": spec.white_std,
        "dt_s": spec.dt,
        "periodic_amplitude_rad_per_s": spec.periodic_amplitude,
        "periodic_frequency_hz": spec.periodic_frequency,
        "phase_policy": spec.phase_policy,
        "fixed_phase_rad": spec.fixed_phase,
    }


def _noise_from_json(obj) -> Optional[NoiseSpec]:
    if obj is None:
        return None
    try:
        return NoiseSpec(
            white_std=_angular(obj, "white_std", default=TWO_PI * 120.0),
            dt=float(obj.get("dt_s", 1e-4)),
            periodic_amplitude=_angular(obj, "periodic_amplitude", default=TWO_PI * 90.0),
            periodic_frequency=float(obj.get("periodic_frequency_hz", 204.0)),
            phase_policy=str(obj.get("phase_policy", "random-per-shot")),
            fixed_phase=float(obj.get("fixed_phase_rad", 0.0)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad noise section: {exc}") from exc


def campaign_config_to_json(config: CampaignConfig) -> dict:
    return {
        "kind": "otoc",
        "hamiltonian": _hamiltonian_to_json(config.hamiltonian),
        "times_s": list(config.times),
        "n_unitaries": config.n_unitaries,
        "order": config.order,
        "w_sites": list(config.w_sites),
        "v_site": config.v_site,
        "v_pauli": config.v_pauli,
        "n_shots": config.n_shots,
        "n_shots_overrides": [
            {"min_time_s": o.min_time_s, "n_shots": o.n_shots}
            for o in config.n_shots_overrides
        ],
        "noise": _noise_to_json(config.noise),
        "exact_expectations": config.exact_expectations,
        "seed": config.seed,
        "output_dir": config.output_dir,
    }


def campaign_config_from_json(obj: dict) -> CampaignConfig:
    try:
        overrides = tuple(
            ShotsOverride(min_time_s=float(o["min_time_s"]), n_shots=int(o["n_shots"]))
            for o in obj.get("n_shots_overrides", [])
        )
        return CampaignConfig(
            hamiltonian=_hamiltonian_from_json(obj["hamiltonian"]),
            times=tuple(float(t) for t in obj["times_s"]),
            n_unitaries=int(obj["n_unitaries"]),
            order=int(obj.get("order", 2)),
            w_sites=tuple(int(w) for w in obj.get("w_sites", [])),
            v_site=int(obj.get("v_site", 1)),
            v_pauli=str(obj.get("v_pauli", "z")),
            n_shots=int(obj.get("n_shots", 150)),
            n_shots_overrides=overrides,
            noise=_noise_from_json(obj.get("noise")),
            exact_expectations=bool(obj.get("exact_expectations", False)),
            seed=int(obj.get("seed", 0)),
            output_dir=str(obj.get("output_dir", "runs/otoc")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad campaign config: {exc}") from exc


def entropy_config_to_json(config: EntropyCampaignConfig) -> dict:
    return {
        "kind": "entropy",
        "hamiltonian": _hamiltonian_to_json(config.hamiltonian),
        "times_s": list(config.times),
        "n_unitaries": config.n_unitaries,
        "n_shots": config.n_shots,
        "partitions": [list(p) for p in config.partitions] or "prefixes",
        "noise": _noise_to_json(config.noise),
        "exact_probabilities": config.exact_probabilities,
        "seed": config.seed,
        "output_dir": config.output_dir,
    }


def entropy_config_from_json(obj: dict) -> EntropyCampaignConfig:
    try:
        parts = obj.get("partitions", "prefixes")
        partitions = () if parts == "prefixes" else tuple(tuple(int(s) for s in p) for p in parts)
        return EntropyCampaignConfig(
            hamiltonian=_hamiltonian_from_json(obj["hamiltonian"]),
            times=tuple(float(t) for t in obj["times_s"]),
            n_unitaries=int(obj["n_unitaries"]),
            n_shots=int(obj.get("n_shots", 150)),
            partitions=partitions,
            noise=_noise_from_json(obj.get("noise")),
            exact_probabilities=bool(obj.get("exact_probabilities", False)),
            seed=int(obj.get("seed", 0)),
            output_dir=str(obj.get("output_dir", "runs/entropy")),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad entropy config: {exc}") from exc


def load_config_object(obj: dict):
    """Build an OTOC or entropy campaign config from a parsed JSON object."""
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    kind = obj.get("kind", "otoc")
    if kind == "otoc":
        return campaign_config_from_json(obj)
    if kind == "entropy":
        return entropy_config_from_json(obj)
    raise ConfigError(f"unknown config kind {kind!r}")


def load_config(path):
    """Load an OTOC or entropy campaign config from a JSON file."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return load_config_object(obj)


def config_to_json(config) -> dict:
    if isinstance(config, CampaignConfig):
        return campaign_config_to_json(config)
    if isinstance(config, EntropyCampaignConfig):
        return entropy_config_to_json(config)
    raise TypeError(f"not a campaign config: {type(config)!r}")


def config_digest(config) -> str:
    """Stable digest of everything that determines campaign results.

    The output directory is excluded so a moved campaign can still be
    resumed; the seed and all physics/statistics knobs are included.
    """
    obj = config_to_json(config)
    obj.pop("output_dir", None)
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def with_overrides(config, seed=None, output_dir=None):
    """Copy a config with CLI-level overrides applied."""
    updates = {}
    if seed is not None:
        updates["seed"] = int(seed)
    if output_dir is not None:
        updates["output_dir"] = str(output_dir)
    return replace(config, **updates) if updates else config
