"""aquafuse: tightly coupled visual-inertial-acoustic-depth state estimation
with a synthetic underwater scenario simulator and evaluation harness."""

from .backend import (BackendConfig, Factor, FactorKind, LocalWindow,
                      SensorRig, SolverConfig, assemble_window, robust_weight,
                      solve)
from .depth import DepthExtrinsics, PressureSample, pressure_position_estimate, \
    pressure_residual
from .dvl import (DvlBias, DvlExtrinsics, DvlPreintegrated, DvlSample,
                  correct_dvl_bias, dead_reckon_dvl, dvl_position_residual,
                  dvl_velocity_estimate, dvl_velocity_residual,
                  preintegrate_dvl)
from .evaluation import (ErrorReport, Trajectory, align_to_truth,
                         error_metrics, preprocess)
from .frontend import (EstimatorMode, FrameState, RunConfig, TrackerConfig,
                       TrackingStatus, keyframe_decision,
                       predict_state_degraded, refine_photometric,
                       run_estimator, track_coarse)
from .imu import (ImuBias, ImuNoiseSpec, ImuPreintegrated, ImuSample,
                  correct_imu_bias, imu_residual, integrate_imu,
                  predict_state_imu)
from .manifold import (Pose, exp_so3, hat, log_so3, right_jacobian_so3, vee)
from .sim import (ScenarioConfig, SensorDataset, generate_trajectory,
                  read_dataset, sample_sensors, simulate, write_dataset)
from .state import NavState
from .visual import (CameraModel, IntensityField, LandmarkObservation,
                     PatchPattern, backproject, photometric_residual, project,
                     reprojection_residual, stereo_depth)

__version__ = "0.1.0"
