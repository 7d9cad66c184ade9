"""
This module contains various constants.

@var DTYPE: dtype of every tensor and every stored real value
@type DTYPE: L{str}
@var ENDIAN: a string describing the endian-ness of binary files, see L{struct}
@type ENDIAN: L{str}
@var ENCODING: (default) encoding to use for strings in binary files
@type ENCODING: L{str}
@var CHECKPOINT_MAGIC: magic bytes identifying a parameter checkpoint
@type CHECKPOINT_MAGIC: L{bytes}
@var CHECKPOINT_VERSION: current version of the checkpoint format
@type CHECKPOINT_VERSION: L{int}
@var DATASET_MAGIC: magic bytes identifying an offline dataset file
@type DATASET_MAGIC: L{bytes}
@var DATASET_VERSION: current version of the dataset format
@type DATASET_VERSION: L{int}
@var EPSILON: clamp for singular denominators of the implicit weights, in Q units
@type EPSILON: L{float}
@var LAYER_NORM_EPS: variance epsilon of the layer normalization
@type LAYER_NORM_EPS: L{float}
@var EXP_OVERFLOW: largest exponent accepted by the exponential loss
@type EXP_OVERFLOW: L{float}
@var EXP_SCALE_WARNING: warn if alpha * (max Q - min Q) exceeds this value
@type EXP_SCALE_WARNING: L{float}
@var CRITIC_STABLE_STEPS: critic updates beyond which training was observed to be unstable
@type CRITIC_STABLE_STEPS: L{int}
@var LOG_LEVEL_STEP: log level for individual gradient steps
@type LOG_LEVEL_STEP: L{int}
@var LOG_LEVEL_SAMPLE: log level for individual reverse diffusion chains
@type LOG_LEVEL_SAMPLE: L{int}
@var LOG_LEVEL_REPORT: log level for training report rows
@type LOG_LEVEL_REPORT: L{int}
"""

# all numerical work happens in 64 bit floats
DTYPE = "float64"

# binary format constants, in struct format
ENDIAN = "<"
ENCODING = "utf-8"

CHECKPOINT_MAGIC = b"IDQC"
CHECKPOINT_VERSION = 1
DATASET_MAGIC = b"IDQD"
DATASET_VERSION = 1

# numerical guards
EPSILON = 1e-8
LAYER_NORM_EPS = 1e-10
EXP_OVERFLOW = 700.0
EXP_SCALE_WARNING = 50.0
GOLDEN_TOLERANCE = 1e-10

# hyperparameter defaults (shared by all networks unless stated otherwise)
DEFAULT_LR = 3e-4
DEFAULT_CRITIC_BATCH_SIZE = 256
DEFAULT_ACTOR_BATCH_SIZE = 1024
DEFAULT_HIDDEN_DIM = 256
DEFAULT_N_BLOCKS = 3
DEFAULT_DROPOUT = 0.1
DEFAULT_TIME_EMBED_DIM = 64
DEFAULT_DIFFUSION_STEPS = 5
DEFAULT_TARGET_EMA = 0.005
DEFAULT_DISCOUNT = 0.99
DEFAULT_N_SAMPLES = 64
DEFAULT_AWR_MAX_WEIGHT = 100.0
VP_BETA_MIN = 0.1
VP_BETA_MAX = 20.0
LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02
COSINE_OFFSET = 0.008
COSINE_MAX_BETA = 0.999

CRITIC_STABLE_STEPS = 2000000

# environment defaults
GRID_STEP_REWARD = -0.01
GRID_GOAL_REWARD = 1.0
GRID_MAX_STEPS = 100
BANDIT_MEANS = (1.0, 5.0, 10.0)
BANDIT_NOISE_STD = 0.5
BANDIT_DATASET_SIZE = 30000
BANDIT2D_MODES = ((0.2, 0.2), (0.5, 0.8), (0.9, 0.5))
BANDIT2D_MODE_STD = 0.05
TOY2D_RADIUS = 2.0
TOY2D_STD = 0.05

# special log levels
LOG_LEVEL_STEP = 5
LOG_LEVEL_SAMPLE = 4
LOG_LEVEL_REPORT = 15
