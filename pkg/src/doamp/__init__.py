"""DOA estimation for large ULAs via a block-sparse inverse-DFT model."""

from .array_model import (
    DoaComponents,
    GridDecomposition,
    TruncatedKernel,
    UlaGeometry,
    apply_sensing,
    build_grid,
    compose_doa,
    decompose_doa,
    kernel_value,
    steering_vector,
    truncated_kernel,
    unitary_dft,
    unitary_idft,
)
from .baselines import RefineConfig, crb, dft_two_stage, ml_grid
from .inference import (
    AlgoConfig,
    BeliefState,
    DivergenceError,
    DoaEstimate,
    EdgeState,
    TraceRecord,
    backward_pass,
    estimate_doas,
    export_beliefs_csv,
    export_trace_csv,
    extract_doas,
    forward_pass,
    gaussian_extrinsic,
    initialize,
    kernel_derivative,
    run,
)
from .metrics import ExperimentRecord, SummaryRow, aggregate, match_and_mse
from .simulate import (
    Scenario,
    SnapshotFormatError,
    SnapshotSet,
    draw_scenario,
    generate_snapshots,
    load_snapshots,
    save_snapshots,
)
from .sweep import SweepSpec, run_sweep

__version__ = "0.1.0"
