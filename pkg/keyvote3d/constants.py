# keyvote3d/constants.py

# --- Defaults stated by the method ([paper] in --help) ---
DEFAULT_FPS_KEYPOINTS = 8          # surface keypoints; the centroid is added on top
DEFAULT_K_KEYPOINTS = DEFAULT_FPS_KEYPOINTS + 1
DEFAULT_N_POINTS = 500
DEFAULT_THETA = 0.999
DEFAULT_DIAMETER_FRACTION = 0.10

# --- Repository defaults ([repo-default] in --help) ---
DEFAULT_M_HYPOTHESES = 128
DEFAULT_REFINE_ITERS = 10
DEFAULT_MAX_CORR_DIST = 0.01       # meters
DEFAULT_TRANSLATION_HALF_EXTENT = 0.2
DEFAULT_DEPTH_OFFSET = 1.0
DEFAULT_MAX_SMALL_ANGLE_DEG = 15.0

# --- Numerical tolerances ---
ROTATION_TOL = 1e-9                # RᵀR = I and det(R) = +1
ORTHO_SNAP_TOL = 1e-12             # rotations off by more are projected back onto SO(3)
UNIT_NORM_TOL = 1e-9
COINCIDENT_TOL = 1e-12             # scene point vs keypoint
SCORE_MIN_DIST = 1e-9              # points this close to a hypothesis do not vote
COSINE_EPS = 1e-12                 # slack on the inlier cosine test
MAX_CONDITION_NUMBER = 1e8
RANK_TOL = 1e-12                   # relative singular value cut for collinearity
ICP_MIN_TRANSLATION = 1e-7         # meters
ICP_MIN_ROTATION = 1e-6            # radians

# --- File formats ---
VOTE_FIELD_MAGIC = b"KV3DVF1\x00"
VOTE_FIELD_NORM_TOL = 1e-3
POSE_REORTHO_TOL = 1e-6

# Brute-force pairwise work runs in row blocks of at most this many distances
PAIRWISE_BLOCK_ELEMENTS = 4_000_000
DIAMETER_HULL_MIN_POINTS = 1000
