"""Persistent measurement containers: columnar CSV plus a JSON metadata sidecar.

Every file embeds the resolved campaign config (as a comment line in CSVs,
as a field in sidecars) together with the package version, so archived
campaigns stay self-describing.  Record rows are written in a fixed sorted
order and floats use shortest round-trip formatting, which makes outputs
byte-identical across reruns, worker counts, and resume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import (
    CampaignConfig,
    EntropyCampaignConfig,
    config_digest,
    config_to_json,
    load_config_object,
)

FORMAT_VERSION = 1

OTOC_CSV = "dataset.csv"
OTOC_META = "dataset.meta.json"
ENTROPY_CSV = "bitstrings.csv"
ENTROPY_META = "bitstrings.meta.json"

BRANCH_PLAIN = "plain"
BRANCH_V = "v_applied"


class DatasetError(RuntimeError):
    """Corrupt, inconsistent, or incompatible measurement data."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _config_header(config) -> list[str]:
    return [
        f"# otoclab {__version__} format {FORMAT_VERSION} digest {config_digest(config)}",
        "# config " + json.dumps(config_to_json(config), sort_keys=True),
    ]


def _write_meta(path: Path, config, kind: str, extra: dict) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "kind": kind,
        "config_digest": config_digest(config),
        "config": config_to_json(config),
    }
    meta.update(extra)
    path.write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def _read_meta(path: Path, kind: str) -> dict:
    try:
        meta = json.loads(path.read_text())
    except OSError as exc:
        raise DatasetError(f"cannot read metadata {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"metadata {path} is not valid JSON: {exc}") from exc
    if meta.get("kind") != kind:
        raise DatasetError(f"{path}: expected kind {kind!r}, found {meta.get('kind')!r}")
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported format version {meta.get('format_version')}")
    return meta


def _time_index(times: np.ndarray, t: float) -> int:
    hits = np.nonzero(np.isclose(times, t, rtol=0.0, atol=1e-12))[0]
    if hits.size != 1:
        raise DatasetError(f"time {t} not in dataset grid {times.tolist()}")
    return int(hits[0])


@dataclass
class MeasurementDataset:
    """Per-(unitary, branch, initial state, time) estimates of <sigma_x_j>.

    ``plain`` has shape (U, 2^order, T, N); ``v_applied`` (the branch with
    the probe applied to the all-zero state) has shape (U, T, N).  The
    ``unitary_indices`` are absolute, so datasets over disjoint index ranges
    can be merged.
    """

    config: CampaignConfig
    unitary_indices: np.ndarray  # (U,)
    plain: np.ndarray  # (U, S, T, N)
    v_applied: np.ndarray  # (U, T, N)

    def __post_init__(self):
        self.unitary_indices = np.asarray(self.unitary_indices, dtype=np.int64)
        self.plain = np.asarray(self.plain, dtype=float)
        self.v_applied = np.asarray(self.v_applied, dtype=float)
        u, s, t, n = self.plain.shape
        if self.v_applied.shape != (u, t, n):
            raise DatasetError("plain/v_applied shapes disagree")
        if self.unitary_indices.shape != (u,):
            raise DatasetError("unitary index count disagrees with records")
        if s != 1 << self.config.order:
            raise DatasetError("initial-state count disagrees with config order")
        if t != len(self.config.times) or n != self.config.hamiltonian.n_spins:
            raise DatasetError("record grid disagrees with config")
        if np.unique(self.unitary_indices).size != u:
            raise DatasetError("duplicate unitary indices")
        for name, arr in (("plain", self.plain), ("v_applied", self.v_applied)):
            if arr.size and (np.max(np.abs(arr)) > 1.0 + 1e-9 or not np.all(np.isfinite(arr))):
                raise DatasetError(f"{name} estimates must lie in [-1, 1]")

    # -- indexing ------------------------------------------------------------

    @property
    def n_unitaries(self) -> int:
        return self.plain.shape[0]

    @property
    def n_spins(self) -> int:
        return self.plain.shape[3]

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.config.times, dtype=float)

    @property
    def n_shots_per_time(self) -> np.ndarray:
        return np.asarray([self.config.n_shots_at(t) for t in self.config.times], dtype=np.int64)

    def time_index(self, t: float) -> int:
        return _time_index(self.times, t)

    # -- persistence -----------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        order = np.argsort(self.unitary_indices)
        n_shots = self.n_shots_per_time
        lines = _config_header(self.config)
        lines.append("unitary_index,branch,state_id,time_s,site,estimate,n_shots")
        for u in order:
            u_idx = int(self.unitary_indices[u])
            lines.extend(
                format_records_for_unitary(
                    self.config, u_idx, self.plain[u], self.v_applied[u], n_shots
                )
            )
        (directory / OTOC_CSV).write_text("\n".join(lines) + "\n")
        _write_meta(
            directory / OTOC_META,
            self.config,
            "otoc_measurements",
            {
                "n_unitaries": self.n_unitaries,
                "unitary_indices_min": int(self.unitary_indices.min()),
                "unitary_indices_max": int(self.unitary_indices.max()),
            },
        )

    @classmethod
    def load(cls, directory) -> "MeasurementDataset":
        directory = Path(directory)
        meta = _read_meta(directory / OTOC_META, "otoc_measurements")
        config = load_config_object(meta["config"])
        if not isinstance(config, CampaignConfig):
            raise DatasetError("metadata config is not an OTOC campaign config")
        rows = _read_rows(directory / OTOC_CSV, 7)
        per_unitary = parse_otoc_rows(config, rows)
        indices = sorted(per_unitary)
        if len(indices) != meta.get("n_unitaries"):
            raise DatasetError(
                f"{directory}: {len(indices)} complete unitaries found, "
                f"metadata promises {meta.get('n_unitaries')}"
            )
        plain = np.stack([per_unitary[u][0] for u in indices])
        v_applied = np.stack([per_unitary[u][1] for u in indices])
        return cls(
            config=config,
            unitary_indices=np.array(indices, dtype=np.int64),
            plain=plain,
            v_applied=v_applied,
        )

    @classmethod
    def merge(cls, parts) -> "MeasurementDataset":
        """Combine datasets over disjoint unitary-index ranges."""
        parts = list(parts)
        if not parts:
            raise DatasetError("nothing to merge")
        ref = parts[0]
        digest = config_digest(ref.config)
        for p in parts[1:]:
            if config_digest(p.config) != digest:
                raise DatasetError("refusing to merge datasets with different configs")
        indices = np.concatenate([p.unitary_indices for p in parts])
        if np.unique(indices).size != indices.size:
            raise DatasetError("refusing to merge overlapping unitary-index ranges")
        order = np.argsort(indices)
        return cls(
            config=ref.config,
            unitary_indices=indices[order],
            plain=np.concatenate([p.plain for p in parts])[order],
            v_applied=np.concatenate([p.v_applied for p in parts])[order],
        )


def format_records_for_unitary(
    config: CampaignConfig,
    u_idx: int,
    plain_u: np.ndarray,  # (S, T, N)
    v_u: np.ndarray,  # (T, N)
    n_shots_per_time: np.ndarray,
) -> list[str]:
    """CSV rows for one unitary, in the canonical sorted order."""
    lines = []
    times = config.times
    n = config.hamiltonian.n_spins
    for s in range(plain_u.shape[0]):
        for ti, t in enumerate(times):
            for j in range(n):
                lines.append(
                    f"{u_idx},{BRANCH_PLAIN},{s},{_fmt(t)},{j + 1},"
                    f"{_fmt(plain_u[s, ti, j])},{int(n_shots_per_time[ti])}"
                )
    for ti, t in enumerate(times):
        for j in range(n):
            lines.append(
                f"{u_idx},{BRANCH_V},0,{_fmt(t)},{j + 1},"
                f"{_fmt(v_u[ti, j])},{int(n_shots_per_time[ti])}"
            )
    return lines


def parse_otoc_rows(config: CampaignConfig, rows) -> dict:
    """Group raw CSV rows into complete per-unitary record blocks.

    Incomplete blocks (e.g. the tail of an interrupted journal) are dropped;
    inconsistent rows raise.
    """
    n = config.hamiltonian.n_spins
    times = np.asarray(config.times, dtype=float)
    n_states = 1 << config.order
    expected = (n_states + 1) * len(times) * n
    blocks: dict[int, list] = {}
    for row in rows:
        u_idx, branch, state_id, t_s, site, estimate, n_shots = row
        blocks.setdefault(int(u_idx), []).append(
            (branch, int(state_id), float(t_s), int(site), float(estimate))
        )
    out = {}
    for u_idx, items in blocks.items():
        if len(items) != expected:
            continue  # incomplete block
        plain = np.full((n_states, len(times), n), np.nan)
        v_applied = np.full((len(times), n), np.nan)
        for branch, state_id, t_s, site, estimate in items:
            ti = _time_index(times, t_s)
            if branch == BRANCH_PLAIN:
                plain[state_id, ti, site - 1] = estimate
            elif branch == BRANCH_V:
                if state_id != 0:
                    raise DatasetError("v_applied branch must have state_id 0")
                v_applied[ti, site - 1] = estimate
            else:
                raise DatasetError(f"unknown branch {branch!r}")
        if np.isnan(plain).any() or np.isnan(v_applied).any():
            raise DatasetError(f"unitary {u_idx}: repeated or missing records")
        out[u_idx] = (plain, v_applied)
    return out


def _read_rows(path: Path, n_fields: int):
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.split(",")[0] == "unitary_index":
            continue  # header
        fields = line.split(",")
        if len(fields) != n_fields:
            raise DatasetError(f"{path}:{line_no}: expected {n_fields} fields")
        rows.append(fields)
    return rows


@dataclass
class BitstringDataset:
    """Randomized z-basis readout records for the entropy campaign.

    Shot mode stores raw outcome bitstrings of shape (U, T, N_M, N); exact
    mode stores the per-unitary outcome distributions (U, T, 2^N) instead.
    """

    config: EntropyCampaignConfig
    unitary_indices: np.ndarray
    bits: Optional[np.ndarray] = None
    probabilities: Optional[np.ndarray] = None

    def __post_init__(self):
        self.unitary_indices = np.asarray(self.unitary_indices, dtype=np.int64)
        u = self.unitary_indices.shape[0]
        t = len(self.config.times)
        n = self.config.hamiltonian.n_spins
        if (self.bits is None) == (self.probabilities is None):
            raise DatasetError("exactly one of bits/probabilities must be present")
        if self.bits is not None:
            self.bits = np.asarray(self.bits, dtype=np.uint8)
            if self.bits.shape != (u, t, self.config.n_shots, n):
                raise DatasetError("bitstring array shape disagrees with config")
            if self.bits.size and self.bits.max() > 1:
                raise DatasetError("bitstrings must be 0/1")
        else:
            self.probabilities = np.asarray(self.probabilities, dtype=float)
            if self.probabilities.shape != (u, t, 1 << n):
                raise DatasetError("probability array shape disagrees with config")
        if np.unique(self.unitary_indices).size != u:
            raise DatasetError("duplicate unitary indices")

    @property
    def n_unitaries(self) -> int:
        return self.unitary_indices.shape[0]

    @property
    def n_spins(self) -> int:
        return self.config.hamiltonian.n_spins

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.config.times, dtype=float)

    def time_index(self, t: float) -> int:
        return _time_index(self.times, t)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        order = np.argsort(self.unitary_indices)
        lines = _config_header(self.config)
        if self.bits is not None:
            lines.append("unitary_index,time_s,shot,bitstring")
            for u in order:
                lines.extend(
                    format_bitstring_records(
                        self.config, int(self.unitary_indices[u]), self.bits[u]
                    )
                )
        else:
            lines.append("unitary_index,time_s,basis_index,probability")
            for u in order:
                lines.extend(
                    format_probability_records(
                        self.config, int(self.unitary_indices[u]), self.probabilities[u]
                    )
                )
        (directory / ENTROPY_CSV).write_text("\n".join(lines) + "\n")
        _write_meta(
            directory / ENTROPY_META,
            self.config,
            "entropy_bitstrings",
            {
                "records": "probabilities" if self.probabilities is not None else "bitstrings",
                "n_unitaries": self.n_unitaries,
            },
        )

    @classmethod
    def load(cls, directory) -> "BitstringDataset":
        directory = Path(directory)
        meta = _read_meta(directory / ENTROPY_META, "entropy_bitstrings")
        config = load_config_object(meta["config"])
        if not isinstance(config, EntropyCampaignConfig):
            raise DatasetError("metadata config is not an entropy campaign config")
        rows = _read_rows(directory / ENTROPY_CSV, 4)
        if meta.get("records") == "probabilities":
            per_unitary = parse_probability_rows(config, rows)
        else:
            per_unitary = parse_bitstring_rows(config, rows)
        indices = sorted(per_unitary)
        if len(indices) != meta.get("n_unitaries"):
            raise DatasetError(
                f"{directory}: {len(indices)} complete unitaries found, "
                f"metadata promises {meta.get('n_unitaries')}"
            )
        stacked = np.stack([per_unitary[u] for u in indices])
        if meta.get("records") == "probabilities":
            return cls(config=config, unitary_indices=np.array(indices), probabilities=stacked)
        return cls(config=config, unitary_indices=np.array(indices), bits=stacked)

    @classmethod
    def merge(cls, parts) -> "BitstringDataset":
        parts = list(parts)
        if not parts:
            raise DatasetError("nothing to merge")
        ref = parts[0]
        digest = config_digest(ref.config)
        for p in parts[1:]:
            if config_digest(p.config) != digest:
                raise DatasetError("refusing to merge datasets with different configs")
            if (p.bits is None) != (ref.bits is None):
                raise DatasetError("refusing to merge mixed record kinds")
        indices = np.concatenate([p.unitary_indices for p in parts])
        if np.unique(indices).size != indices.size:
            raise DatasetError("refusing to merge overlapping unitary-index ranges")
        order = np.argsort(indices)
        if ref.bits is not None:
            return cls(
                config=ref.config,
                unitary_indices=indices[order],
                bits=np.concatenate([p.bits for p in parts])[order],
            )
        return cls(
            config=ref.config,
            unitary_indices=indices[order],
            probabilities=np.concatenate([p.probabilities for p in parts])[order],
        )


def format_bitstring_records(config, u_idx: int, bits_u: np.ndarray) -> list[str]:
    lines = []
    for ti, t in enumerate(config.times):
        for shot in range(bits_u.shape[1]):
            s = "".join(str(int(b)) for b in bits_u[ti, shot])
            lines.append(f"{u_idx},{_fmt(t)},{shot},{s}")
    return lines


def format_probability_records(config, u_idx: int, probs_u: np.ndarray) -> list[str]:
    lines = []
    for ti, t in enumerate(config.times):
        for b, p in enumerate(probs_u[ti]):
            lines.append(f"{u_idx},{_fmt(t)},{b},{_fmt(p)}")
    return lines


def parse_bitstring_rows(config, rows) -> dict:
    times = np.asarray(config.times, dtype=float)
    n = config.hamiltonian.n_spins
    expected = len(times) * config.n_shots
    blocks: dict[int, list] = {}
    for u_idx, t_s, shot, bitstring in rows:
        blocks.setdefault(int(u_idx), []).append((float(t_s), int(shot), bitstring))
    out = {}
    for u_idx, items in blocks.items():
        if len(items) != expected:
            continue
        bits = np.zeros((len(times), config.n_shots, n), dtype=np.uint8)
        seen = np.zeros((len(times), config.n_shots), dtype=bool)
        for t_s, shot, bitstring in items:
            ti = _time_index(times, t_s)
            if len(bitstring) != n or seen[ti, shot]:
                raise DatasetError(f"unitary {u_idx}: malformed bitstring records")
            bits[ti, shot] = [int(c) for c in bitstring]
            seen[ti, shot] = True
        out[u_idx] = bits
    return out


def parse_probability_rows(config, rows) -> dict:
    times = np.asarray(config.times, dtype=float)
    dim = config.hamiltonian.dim
    expected = len(times) * dim
    blocks: dict[int, list] = {}
    for u_idx, t_s, basis_index, prob in rows:
        blocks.setdefault(int(u_idx), []).append((float(t_s), int(basis_index), float(prob)))
    out = {}
    for u_idx, items in blocks.items():
        if len(items) != expected:
            continue
        probs = np.full((len(times), dim), np.nan)
        for t_s, b, p in items:
            probs[_time_index(times, t_s), b] = p
        if np.isnan(probs).any():
            raise DatasetError(f"unitary {u_idx}: repeated or missing records")
        out[u_idx] = probs
    return out
