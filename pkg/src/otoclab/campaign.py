"""Campaign orchestration: deterministic scheduling, persistence, resume.

Work is split at unitary-index granularity.  Each unitary's results depend
only on (campaign seed, unitary index) through keyed RNG streams, so any
worker count and any completion order produce identical datasets.  Completed
unitaries are appended to a journal file as they finish; an interrupted
campaign resumes from the journal and the final artifacts are rewritten in
canonical sorted order, byte-identical to an uninterrupted run.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    CampaignConfig,
    EntropyCampaignConfig,
    config_digest,
    config_to_json,
)
from .dataset import (
    OTOC_CSV,
    BitstringDataset,
    DatasetError,
    MeasurementDataset,
    format_bitstring_records,
    format_probability_records,
    format_records_for_unitary,
    parse_bitstring_rows,
    parse_otoc_rows,
    parse_probability_rows,
    _config_header,
    _read_rows,
)
from .noise import TRANSITION_TO_HALF_SPIN, apply_dephasing, sample_phases
from .protocol import (
    LocalOperator,
    OtocSeries,
    enumerate_initial_states,
    prepare_rotated_state,
    run_branch,
    sample_local_unitary_set,
)
from .spin import (
    apply_single_site,
    born_probabilities,
    index_bits_batch,
    propagator_for,
    sample_indices,
    sample_indices_rows,
)
from .streams import (
    STREAM_CELL,
    STREAM_CUE,
    STREAM_ENTROPY_CELL,
    STREAM_INIT_STATE,
    derive_rng,
)

JOURNAL_SUFFIX = ".partial"


# --- per-unitary work units ----------------------------------------------------


def _compute_otoc_unitary(config: CampaignConfig, u_idx: int):
    """All branches, states, and times for one unitary index."""
    spec = config.hamiltonian
    n = spec.n_spins
    prop = propagator_for(spec)
    family = enumerate_initial_states(n, config.order)
    v_op = LocalOperator(site=config.v_site, pauli=config.v_pauli)
    times = config.times
    plain = np.empty((family.n_states, len(times), n))
    v_applied = np.empty((len(times), n))
    u_set = sample_local_unitary_set(n, derive_rng(config.seed, STREAM_CUE, u_idx), u_idx)
    for s in range(family.n_states):
        bits = family.states[s]
        for ti, t in enumerate(times):
            n_shots = config.n_shots_at(t) or None
            rng = derive_rng(config.seed, STREAM_CELL, u_idx, 0, s, ti)
            plain[s, ti] = run_branch(
                prop, u_set, bits, False, v_op, t, n_shots, config.noise, rng
            )
    for ti, t in enumerate(times):
        n_shots = config.n_shots_at(t) or None
        rng = derive_rng(config.seed, STREAM_CELL, u_idx, 1, 0, ti)
        v_applied[ti] = run_branch(
            prop, u_set, family.states[0], True, v_op, t, n_shots, config.noise, rng
        )
    return u_idx, plain, v_applied


def _entropy_initial_states(config: EntropyCampaignConfig) -> np.ndarray:
    """The fixed random product state evolved to every readout time, (T, dim)."""
    spec = config.hamiltonian
    n = spec.n_spins
    u0 = sample_local_unitary_set(n, derive_rng(config.seed, STREAM_INIT_STATE), -1)
    psi0 = prepare_rotated_state(u0, np.zeros(n, dtype=np.uint8))
    prop = propagator_for(spec)
    return prop.evolve_times(psi0, np.asarray(config.times, dtype=float))


def _apply_unitary_set(states: np.ndarray, u_set) -> np.ndarray:
    for site in range(1, u_set.n_spins + 1):
        states = apply_single_site(states, u_set.unitaries[site - 1], site)
    return states


def _compute_entropy_unitary(config: EntropyCampaignConfig, u_idx: int):
    """Randomized z-basis readout records for one unitary index."""
    spec = config.hamiltonian
    n = spec.n_spins
    states_t = _entropy_initial_states(config)
    u_set = sample_local_unitary_set(n, derive_rng(config.seed, STREAM_CUE, u_idx), u_idx)
    n_times = len(config.times)
    if config.exact_probabilities:
        probs = np.empty((n_times, spec.dim))
        for ti in range(n_times):
            probs[ti] = born_probabilities(_apply_unitary_set(states_t[ti], u_set))
        return u_idx, probs
    bits = np.empty((n_times, config.n_shots, n), dtype=np.uint8)
    for ti, t in enumerate(config.times):
        rng = derive_rng(config.seed, STREAM_ENTROPY_CELL, u_idx, ti)
        if config.noise is None:
            p = born_probabilities(_apply_unitary_set(states_t[ti], u_set))
            bits[ti] = index_bits_batch(sample_indices(p, config.n_shots, rng), n)
        else:
            phis = sample_phases(config.noise, t, rng, config.n_shots)
            shot_states = apply_dephasing(
                np.broadcast_to(states_t[ti], (config.n_shots, spec.dim)),
                TRANSITION_TO_HALF_SPIN * phis,
            )
            p = born_probabilities(_apply_unitary_set(shot_states, u_set))
            bits[ti] = index_bits_batch(sample_indices_rows(p, rng), n)
    return u_idx, bits


# --- scheduling -----------------------------------------------------------------


def _run_units(compute, config, pending, workers, on_done):
    """Run per-unitary units across a worker pool, invoking on_done as they finish."""
    pending = list(pending)
    if workers <= 1:
        for u_idx in pending:
            on_done(compute(config, u_idx))
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(compute, config, u_idx) for u_idx in pending]
        for fut in futures:
            on_done(fut.result())


class _Journal:
    """Append-only per-unitary record log enabling resume."""

    def __init__(self, directory: Path, config, csv_name: str, meta_name: str):
        self.path = directory / (csv_name + JOURNAL_SUFFIX)
        self.meta_path = directory / (meta_name + JOURNAL_SUFFIX)
        self.config = config

    def verify_or_create(self, resume: bool) -> None:
        if self.meta_path.exists():
            if not resume:
                raise DatasetError(
                    f"{self.meta_path} exists; pass resume=True to continue or remove it"
                )
            meta = json.loads(self.meta_path.read_text())
            if meta.get("config_digest") != config_digest(self.config):
                raise DatasetError(
                    "refusing to resume: journal was written by a different config/seed"
                )
        else:
            self.meta_path.write_text(
                json.dumps(
                    {
                        "package_version": __version__,
                        "config_digest": config_digest(self.config),
                        "config": config_to_json(self.config),
                    },
                    sort_keys=True,
                    indent=1,
                )
                + "\n"
            )

    def completed_rows(self, n_fields: int):
        if not self.path.exists():
            return []
        return _read_rows(self.path, n_fields)

    def append(self, lines) -> None:
        with open(self.path, "a") as fh:
            fh.write("\n".join(lines) + "\n")

    def remove(self) -> None:
        for p in (self.path, self.meta_path):
            if p.exists():
                p.unlink()


# --- OTOC campaign ----------------------------------------------------------------


def simulate_campaign(config: CampaignConfig, workers: int = 1) -> MeasurementDataset:
    """Run a full OTOC campaign in memory (no persistence)."""
    results = {}

    def on_done(res):
        u_idx, plain, v_applied = res
        results[u_idx] = (plain, v_applied)

    _run_units(_compute_otoc_unitary, config, range(config.n_unitaries), workers, on_done)
    indices = sorted(results)
    return MeasurementDataset(
        config=config,
        unitary_indices=np.array(indices, dtype=np.int64),
        plain=np.stack([results[u][0] for u in indices]),
        v_applied=np.stack([results[u][1] for u in indices]),
    )


@dataclass
class CampaignResult:
    dataset: MeasurementDataset
    series: OtocSeries
    output_dir: Path


def run_otoc_campaign(
    config: CampaignConfig, workers: int = 1, resume: bool = False
) -> CampaignResult:
    """Execute, persist, and summarize an OTOC campaign.

    Writes the measurement dataset (CSV + metadata sidecar), the OTOC series
    for the configured order with jackknife errors, and a machine-readable
    summary.  Interrupted runs resume at unitary-index granularity and end
    byte-identical to an uninterrupted run.
    """
    from .analysis import build_otoc_series  # local import to avoid cycle

    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out}: {exc}") from exc

    journal = _Journal(out, config, OTOC_CSV, "dataset.meta.json")
    journal.verify_or_create(resume)
    done = parse_otoc_rows(config, journal.completed_rows(7))
    results = dict(done)
    n_shots = np.asarray([config.n_shots_at(t) for t in config.times], dtype=np.int64)

    def on_done(res):
        u_idx, plain, v_applied = res
        results[u_idx] = (plain, v_applied)
        journal.append(format_records_for_unitary(config, u_idx, plain, v_applied, n_shots))

    pending = [u for u in range(config.n_unitaries) if u not in results]
    _run_units(_compute_otoc_unitary, config, pending, workers, on_done)

    indices = sorted(results)
    dataset = MeasurementDataset(
        config=config,
        unitary_indices=np.array(indices, dtype=np.int64),
        plain=np.stack([results[u][0] for u in indices]),
        v_applied=np.stack([results[u][1] for u in indices]),
    )
    dataset.save(out)
    series = build_otoc_series(dataset, config.order)
    write_otoc_series_csv(out / f"otoc_series_n{config.order}.csv", config, series)
    summary = {
        "package_version": __version__,
        "config": config_to_json(config),
        "config_digest": config_digest(config),
        "n_unitaries": dataset.n_unitaries,
        "order": config.order,
        "sites": series.sites.tolist(),
        "times_s": series.times.tolist(),
        "otoc": series.values.tolist(),
        "otoc_std_error": series.std_errors.tolist(),
        "reliable": series.reliable.astype(int).tolist(),
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    journal.remove()
    return CampaignResult(dataset=dataset, series=series, output_dir=out)


def write_otoc_series_csv(path, config, series: OtocSeries) -> None:
    lines = _config_header(config)
    lines.append("order,site,time_s,value,std_error,numerator,denominator,reliable")
    for si, site in enumerate(series.sites):
        for ti, t in enumerate(series.times):
            lines.append(
                f"{series.order},{int(site)},{repr(float(t))},"
                f"{repr(float(series.values[si, ti]))},{repr(float(series.std_errors[si, ti]))},"
                f"{repr(float(series.numerators[si, ti]))},{repr(float(series.denominators[si, ti]))},"
                f"{int(series.reliable[si, ti])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


# --- entropy campaign ---------------------------------------------------------------


def simulate_entropy_campaign(
    config: EntropyCampaignConfig, workers: int = 1
) -> BitstringDataset:
    """Run a full entropy campaign in memory (no persistence)."""
    results = {}

    def on_done(res):
        u_idx, payload = res
        results[u_idx] = payload

    _run_units(_compute_entropy_unitary, config, range(config.n_unitaries), workers, on_done)
    indices = sorted(results)
    stacked = np.stack([results[u] for u in indices])
    if config.exact_probabilities:
        return BitstringDataset(
            config=config,
            unitary_indices=np.array(indices, dtype=np.int64),
            probabilities=stacked,
        )
    return BitstringDataset(
        config=config, unitary_indices=np.array(indices, dtype=np.int64), bits=stacked
    )


@dataclass
class EntropyCampaignResult:
    dataset: BitstringDataset
    table: list
    output_dir: Path


def run_entropy_campaign(
    config: EntropyCampaignConfig, workers: int = 1, resume: bool = False
) -> EntropyCampaignResult:
    """Execute, persist, and summarize a Renyi-entropy campaign."""
    from .analysis import build_entropy_table
    from .dataset import ENTROPY_CSV

    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out}: {exc}") from exc

    journal = _Journal(out, config, ENTROPY_CSV, "bitstrings.meta.json")
    journal.verify_or_create(resume)
    rows = journal.completed_rows(4)
    done = (
        parse_probability_rows(config, rows)
        if config.exact_probabilities
        else parse_bitstring_rows(config, rows)
    )
    results = dict(done)

    def on_done(res):
        u_idx, payload = res
        results[u_idx] = payload
        if config.exact_probabilities:
            journal.append(format_probability_records(config, u_idx, payload))
        else:
            journal.append(format_bitstring_records(config, u_idx, payload))

    pending = [u for u in range(config.n_unitaries) if u not in results]
    _run_units(_compute_entropy_unitary, config, pending, workers, on_done)

    indices = sorted(results)
    stacked = np.stack([results[u] for u in indices])
    if config.exact_probabilities:
        dataset = BitstringDataset(
            config=config,
            unitary_indices=np.array(indices, dtype=np.int64),
            probabilities=stacked,
        )
    else:
        dataset = BitstringDataset(
            config=config, unitary_indices=np.array(indices, dtype=np.int64), bits=stacked
        )
    dataset.save(out)
    table = build_entropy_table(dataset)
    write_entropy_table_csv(out / "entropy_table.csv", config, table)
    summary = {
        "package_version": __version__,
        "config": config_to_json(config),
        "config_digest": config_digest(config),
        "n_unitaries": dataset.n_unitaries,
        "rows": [
            {
                "partition": list(r.partition),
                "time_s": r.time,
                "purity": r.purity,
                "purity_std_error": r.purity_std_error,
                "entropy": r.entropy,
                "entropy_std_error": r.entropy_std_error,
            }
            for r in table
        ],
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    journal.remove()
    return EntropyCampaignResult(dataset=dataset, table=table, output_dir=out)


def write_entropy_table_csv(path, config, table) -> None:
    lines = _config_header(config)
    lines.append("partition,time_s,purity,purity_std_error,entropy,entropy_std_error")
    for r in table:
        part = "+".join(str(s) for s in r.partition)
        entropy = "" if r.entropy is None else repr(float(r.entropy))
        entropy_err = "" if r.entropy_std_error is None else repr(float(r.entropy_std_error))
        lines.append(
            f"{part},{repr(float(r.time))},{repr(float(r.purity))},"
            f"{repr(float(r.purity_std_error))},{entropy},{entropy_err}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
