"""Constants for the motion-evolve package."""

from __future__ import annotations

# Environment
ENV_SEED = "MOTION_EVOLVE_SEED"

# Keypoints
DEFAULT_NUM_KP = 10
DEFAULT_KP_TEMPERATURE = 1.0
DEFAULT_KP_SIGMA = 0.05  # normalized units, Gaussian encoding for the dense motion network
MIN_HEATMAP_SIZE = 8

# Network sizes (desk scale)
DEFAULT_BLOCK_EXPANSION = 32
DEFAULT_KP_BLOCKS = 3
DEFAULT_MOTION_BLOCKS = 3
DEFAULT_APPEARANCE_BLOCKS = 2
DEFAULT_MAX_FEATURES = 256
DEFAULT_DYNAMICS_HIDDEN = 32
DEFAULT_RESIDUAL_BLOCKS = 2
GENERATOR_DOWN_BLOCKS = 2

# Resolutions relative to the frame
KP_SCALE = 0.5
MOTION_SCALE = 0.25

# ODE solver
SOLVER_EULER = "euler"
SOLVER_RK4 = "rk4"
SOLVERS = (SOLVER_EULER, SOLVER_RK4)
GRADIENT_BACKPROP = "backprop"
GRADIENT_ADJOINT = "adjoint"
GRADIENT_MODES = (GRADIENT_BACKPROP, GRADIENT_ADJOINT)
DEFAULT_SOLVER = SOLVER_RK4
DEFAULT_ODE_STEPS = 4

# Multi-view fusion
CONFIDENCE_EPS = 1e-6

# Training
DEFAULT_NUM_REFS = 3
DEFAULT_LAMBDA_EQUIV = 10.0
DEFAULT_LEARNING_RATE = 2e-4
DEFAULT_BATCH_SIZE = 4
DEFAULT_ITERATIONS = 500
DEFAULT_SEED = 0
DEFAULT_FRAME_SIZE = 64
DEFAULT_LOG_EVERY = 25

# Perceptual loss
PERCEPTUAL_STAGES = 5
PERCEPTUAL_SCALES = 4
FEATURE_EXTRACTOR_SEED = 1234

# Equivariance transform family
TRANSFORM_MAX_ROTATION_DEG = 15.0
TRANSFORM_SCALE_RANGE = (0.9, 1.1)
TRANSFORM_MAX_TRANSLATION = 0.1
TRANSFORM_TPS_GRID = 5
TRANSFORM_TPS_SIGMA = 0.05

# Metrics
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
PSNR_SENTINEL_DB = 99.0
FID_RIDGE = 1e-6
EMBEDDER_SEED = 4321
EMBEDDER_DIM = 64

METRIC_L1 = "l1"
METRIC_PERCEPTUAL = "perceptual_distance"
METRIC_PSNR = "psnr"
METRIC_SSIM = "ssim"
METRIC_MS_SSIM = "ms_ssim"
METRIC_FID = "fid"
METRIC_AKD = "akd"
METRIC_CSIM = "csim"

LOWER_IS_BETTER = "down"
HIGHER_IS_BETTER = "up"

METRIC_DIRECTIONS: dict[str, str] = {
    METRIC_L1: LOWER_IS_BETTER,
    METRIC_PERCEPTUAL: LOWER_IS_BETTER,
    METRIC_FID: LOWER_IS_BETTER,
    METRIC_SSIM: HIGHER_IS_BETTER,
    METRIC_MS_SSIM: HIGHER_IS_BETTER,
    METRIC_PSNR: HIGHER_IS_BETTER,
    METRIC_AKD: LOWER_IS_BETTER,
    METRIC_CSIM: HIGHER_IS_BETTER,
}

TASK_RECONSTRUCTION = "reconstruction"
TASK_ANIMATION = "animation"

# Ablation presets
PRESET_FULL = "full"
PRESET_NO_MOTION_EVOLUTION = "no_motion_evolution"
PRESET_NO_APPEARANCE = "no_appearance"
PRESET_SINGLE_VIEW = "single_view"

# Synthetic data
DEFAULT_CLIP_LENGTH = 16
DEFAULT_TRAIN_IDENTITIES = 20
DEFAULT_TEST_IDENTITIES = 5
DEFAULT_CLIPS_PER_IDENTITY = 2
DEFAULT_ANIMATION_PAIRS = 20
FRAME_PATTERN = "frame_{index:05d}.png"
MANIFEST_NAME = "manifest.json"
SPLIT_TRAIN = "train"
SPLIT_TEST = "test"

# Checkpoint format
CHECKPOINT_MAGIC = b"MEVCKPT\x00"
CHECKPOINT_FORMAT_VERSION = 1
