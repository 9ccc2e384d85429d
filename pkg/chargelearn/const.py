"""Constants for the chargelearn package."""
DOMAIN = "chargelearn"

# Record / result file format
FORMAT_VERSION = 1

# Init kinds
INIT_DICKE = "dicke"
INIT_NEEL = "neel"
INIT_NEEL_FLIP = "neel_flip"
INIT_PLUS = "plus"

# Tasks
TASK_PAIR = "pair"
TASK_ALL = "all"

# Engines
ENGINE_QUANTUM = "quantum"
ENGINE_SEP = "sep"
SAMPLER_MARGINAL = "marginal"
SAMPLER_MARKOV = "markov"

# Backends
BACKEND_DENSE = "dense"
BACKEND_MPS = "mps"

# Initial classical vectors for Neel-family records
INIT_VECTOR_MATCHED = "matched"
INIT_VECTOR_DICKE = "dicke"

# Guards
MAX_QUANTUM_SITES = 26
MAX_DENSE_SITES = 24

# Numerics
UNBIASED_HOP = 0.5
DEFAULT_THRESHOLD = 1e-10
NORM_TOL = 1e-10
MARGINAL_TOL = 1e-9

# Statistics
DEFAULT_BOOTSTRAP = 1000
DEFAULT_CROSSING_RESAMPLES = 200
DEFAULT_HIST_BINS = 50
DEFAULT_TAIL_EPS = 0.4
CONFIDENCE_LEVEL = 0.95

# Verification
HAAR_TOLERANCE = 0.01
ENUMERATION_TOLERANCE = 1e-10
BORN_SIGMAS = 3.0
BORN_MAX_RELATIVE_ERROR = 0.05

# Exit codes
EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERIFY = 4

# Environment
ENV_WORKERS = "CHARGELEARN_WORKERS"

# Sweep outputs
MANIFEST_FILE = "manifest.json"
SUMMARY_FILE = "summary.csv"
CROSSINGS_FILE = "crossings.csv"
CALIBRATION_FILE = "calibration.csv"
DISTRIBUTION_FILE = "distribution.csv"
PERCOLATION_FILE = "percolation.csv"
PERCOLATION_SUMMARY_FILE = "percolation_summary.csv"
RECORDS_FILE = "records.jsonl"
RESULTS_FILE_TEMPLATE = "results_{mode}.jsonl"
CELLS_DIR = "cells"
PLOTS_DIR = "plots"
