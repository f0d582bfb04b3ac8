"""
Settings and configuration for the Steklov splitting lab
"""

# Quadrature settings
VOLUME_QUAD_ORDER = 2
BOUNDARY_QUAD_POINTS = 2
IBP_QUAD_POINTS = 6

# Solver settings
EIGEN_CUTOFF = 1e-12
CLUSTER_TOL = 1e-8
DEFAULT_EIGEN_COUNT = 8
COERCIVITY_FLOOR = 1e-12
MINMAX_SLACK = 1e-10
MINMAX_TRIALS = 1000

# Deformation settings
DEFORMATION_NORM_BOUND = 0.5
SAMPLE_GRID_SIZE = 24
HESSIAN_STEP = 1e-4

# Derivative checks
FD_STEPS = (1e-2, 5e-3, 2.5e-3)
ORDER_THRESHOLD = 1.9
IBP_TOL = 1e-10
ZERO_RESIDUAL_FLOOR = 1e-13
ROUNDOFF_FACTOR = 1e3
BRANCH_OVERLAP_MIN = 0.8
BRANCH_MARGIN = 2
SLOPE_FLOOR = 1e-8

# Splitting settings
DEVIATION_REL = 1e-6
DEVIATION_ABS = 1e-12
SOLVER_TOL = 1e-10
RANDOM_PAIRS = 16
CANDIDATE_COUNT = 24
STEP_TRIALS = 3
GAP_TOL = 1e-3
MAX_STEPS = 10

# Output settings
OUTPUT_ENV_VAR = "STEKLOV_LAB_OUTPUT"
DEFAULT_OUTPUT_ROOT = "runs"
LOCK_FILE = ".lock"
MANIFEST_FILE = "manifest.yaml"
SUMMARY_FILE = "summary.md"
SHOW_PROGRESS = True
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
SUMMARY_DIGITS = 8
TABLE_FILES = {
    "spectrum": "spectrum.csv",
    "groups": "groups.csv",
    "minmax": "minmax.csv",
    "derivatives": "derivative_checks.csv",
    "slopes": "eigen_slopes.csv",
    "ibp": "ibp_check.csv",
    "split": "split_trials.csv",
    "matrix": "perturbation_matrix.csv",
    "trace": "trace.csv",
    "trajectory": "trajectory.csv",
    "oracle": "oracle.csv",
    "oracle_compare": "oracle_comparison.csv",
    "w_scan": "w_scan.csv",
}

# Plot style settings
FIGURE_SIZE = (7.0, 4.5)
BRANCH_COLORS = {
    "simple": "#1f77b4",
    "multiple": "#d62728",
    "predicted": "#7f7f7f",
}
TRAJECTORY_MARKER = "o"
