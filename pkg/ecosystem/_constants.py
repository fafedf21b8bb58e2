#! Matrix functions
MF__EXPM_THETA_13 = 5.371920351148152
MF__LOGM_TOL = 1e-8
MF__BRANCH_CUT_TOL = 1e-12
MF__POWER_MAX_ITER = 10_000
MF__POWER_TOL = 1e-12
MF__POWER_RESIDUAL_TOL = 1e-10
MF__DENSE_FALLBACK_MAX_N = 64

#! Exact solvers
SOL__PB_TOL = 1e-10
SOL__PB_MAX_TERMS = 30
SOL__PB_PANELS = 128
SOL__STEP_NORM_BOUND = 0.5
SOL__MIN_SUBSTEPS = 8
SOL__INPUT_PANELS = 8
SOL__COMMUTING_SAMPLES = 8
SOL__COMMUTING_TOL = 1e-10
SOL__NORM_SAMPLES = 16

#! Nonlinear dynamics
NL__STEP_FACTOR = 0.01
NL__MAX_CLAMP_FRACTION = 0.01
NL__SETTLE_TOL = 1e-9
NL__SETTLE_WINDOW = 0.1
NL__EXTINCTION_TOL = 1e-6
NL__MIN_CHURN_TIMES = 20.0
NL__SWEEP_CHUNK = 16

#! Analysis
AN__BASELINE_FLOOR = 1e-12
AN__AMPLIFICATION_TOL = 1e-9
AN__QUADRATURE_TOL = 1e-3

#! Estimation
EST__RANK_TOL = 1e-10
EST__SPACING_RTOL = 1e-9
EST__PROX_MAX_ITER = 20_000
EST__PROX_TOL = 1e-10

# Common
POSITIVITY_TOL = 1e-12
CSV_FLOAT_FORMAT = "%.17g"
THREAD_POOL_SIZE = 4
DEFAULT_OUTPUT_DIR = "output"
