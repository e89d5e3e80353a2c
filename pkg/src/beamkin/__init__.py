"""beamkin: geometry-adaptive microphone-array enhancement simulator.

Simulates a 16-microphone array distributed over a desk-mounted robot arm,
localizes a speaker with a mask-gated whitened steered-power scan, re-aims
the arm at the speaker with damped least-squares inverse kinematics, and
enhances the mixture with a mask-based distortionless beamformer.  The
point of the exercise: a repositionable array beats any fixed pose of the
same hardware, and the package ships the simulation, the estimators, and
the evaluation harness to measure that.
"""

from .audio import (
    DEFAULT_HOP,
    DEFAULT_N_FFT,
    DEFAULT_SAMPLE_RATE,
    MultichannelSpectrogram,
    TimeSignal,
    istft,
    read_wav,
    stft,
    write_wav,
)
from .beamform import (
    BeamformerWeights,
    ReferenceSelector,
    SweepResult,
    apply_beamformer,
    batch_scm,
    mvdr_weights,
    reference_sweep,
)
from .kinematics import (
    FkResult,
    IkResult,
    Joint,
    KinematicChain,
    MicMount,
    TargetOracle,
    TargetPose,
    forward_kinematics,
    listening_config,
    solve_ik,
)
from .masking import (
    FileMaskProvider,
    MaskProvider,
    OracleMaskProvider,
    TFMask,
    global_mask,
    load_mask,
    oracle_irm,
    save_mask,
)
from .metrics import EvalReport, ScenarioResult, acc15, si_sdr, weighted_average
from .pipeline import (
    GEOMETRIES,
    ExperimentGrid,
    PipelineRun,
    StageRecord,
    run_grid,
    run_pipeline,
)
from .scene import (
    DIFFUSE_LEVEL,
    SPEED_OF_SOUND,
    PointSource,
    Scenario,
    azimuth_to_position,
    load_scenario,
    mix_at_snr,
    noise_gain,
    propagate,
    render_noise_field,
    save_scenario,
)
from .ssl import (
    DoaEstimate,
    DoaGrid,
    ScmPair,
    active_backend,
    estimate_doa,
    init_scm,
    select_bins,
    srp_power,
    steering_table,
    steering_weight,
    update_oscm,
    whiten,
)

__version__ = "0.1.0"
