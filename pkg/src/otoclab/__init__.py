"""Classical simulation lab for randomized-measurement OTOC estimation in
tunable-range Ising spin chains."""

__version__ = "0.1.0"

from .spin import (  # noqa: E402,F401
    HamiltonianSpec,
    Propagator,
    build_hamiltonian,
    evolve,
    exact_otoc,
    exact_otoc_series,
    expectation,
    make_propagator,
    propagator_for,
    sample_measurement,
)
from .noise import (  # noqa: F401
    NoiseSpec,
    apply_dephasing,
    ramsey_contrast,
    sample_phase,
    sample_phases,
)
from .protocol import (  # noqa: F401
    EstimatorError,
    InitialStateFamily,
    LocalOperator,
    LocalUnitarySet,
    OtocSeries,
    enumerate_initial_states,
    estimate_otoc,
    estimate_renyi_entropy,
    estimate_second_moment,
    run_branch,
    sample_cue_unitary,
    sample_local_unitary_set,
)
from .config import (  # noqa: F401
    CampaignConfig,
    ConfigError,
    EntropyCampaignConfig,
    ShotsOverride,
    load_config,
)
from .dataset import BitstringDataset, DatasetError, MeasurementDataset  # noqa: F401
from .analysis import (  # noqa: F401
    AnalysisError,
    CalibrationError,
    CalibrationFit,
    CollapseFit,
    ConvergenceStudy,
    JackknifeEstimate,
    build_entropy_table,
    build_otoc_series,
    build_second_moment_table,
    calibrate_hamiltonian,
    convergence_study,
    fit_butterfly_velocity,
    jackknife,
    simulate_quench,
)
from .campaign import (  # noqa: F401
    run_entropy_campaign,
    run_otoc_campaign,
    simulate_campaign,
    simulate_entropy_campaign,
)
