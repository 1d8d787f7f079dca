"""Complementary scrambling probes: second moments and Renyi entropies.

Runs the first protocol branch's auto-correlation probe (site-averaged
second moment of <W(t)>, with and without dephasing) and the randomized
z-basis entropy campaign (noise on/off) for the alpha = 1.21 chain.
"""

import argparse
from pathlib import Path

from otoclab.analysis import build_second_moment_table
from otoclab.campaign import run_entropy_campaign, simulate_campaign
from otoclab.config import CampaignConfig, EntropyCampaignConfig, ShotsOverride
from otoclab.dataset import _config_header
from otoclab.noise import NoiseSpec
from otoclab.spin import HamiltonianSpec

TIMES = (0.0, 1e-3, 2e-3, 3e-3, 4e-3, 5e-3)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/probes")
    parser.add_argument("--seed", type=int, default=104)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--quick", action="store_true")
    args = parser.parse_args()

    n_spins = 6 if args.quick else 10
    n_u = 40 if args.quick else 500
    spec = HamiltonianSpec.from_hz(n_spins, 30.13, 1.21, 1500.0, double_count_pairs=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # second moment of <W(t)> over unitaries, unitary vs dephased dynamics
    lines = None
    for label, noise in (("unitary", None), ("dephased", NoiseSpec())):
        config = CampaignConfig(
            hamiltonian=spec,
            times=TIMES,
            n_unitaries=n_u,
            order=0,
            n_shots=150,
            n_shots_overrides=(ShotsOverride(min_time_s=4e-3, n_shots=300),),
            noise=noise,
            seed=args.seed,
        )
        print(f"[second-moment/{label}] running {n_u} unitaries ...")
        data = simulate_campaign(config, workers=args.workers)
        rows = build_second_moment_table(data)
        if lines is None:
            lines = _config_header(config) + ["variant,time_s,value,std_error,raw_value"]
        for r in rows:
            lines.append(f"{label},{r.time!r},{r.value!r},{r.std_error!r},{r.raw_value!r}")
        print(f"[second-moment/{label}] " + "  ".join(f"{r.value:.3f}" for r in rows))
    (out / "second_moment.csv").write_text("\n".join(lines) + "\n")

    # Renyi entropies of the evolved random product state
    ent_times = (0.0, 2e-3, 5e-3)
    for label, noise in (("noise_on", NoiseSpec()), ("noise_off", None)):
        config = EntropyCampaignConfig(
            hamiltonian=spec,
            times=ent_times,
            n_unitaries=n_u,
            n_shots=150,
            noise=noise,
            seed=args.seed,
            output_dir=str(out / f"entropy_{label}"),
        )
        print(f"[entropy/{label}] running {n_u} unitaries ...")
        result = run_entropy_campaign(config, workers=args.workers)
        full = tuple(range(1, n_spins + 1))
        for row in result.table:
            if row.partition == full:
                entropy = "n/a" if row.entropy is None else f"{row.entropy:.3f}"
                print(f"[entropy/{label}] t={row.time * 1e3:g} ms: S2(full) = {entropy}")


if __name__ == "__main__":
    main()
