import os

from dotenv import load_dotenv

# -----------------------------
#  LOAD ENV
# -----------------------------
load_dotenv()

# -----------------------------
#  GRID / REPRESENTATION
# -----------------------------
GRID_DIM = int(os.getenv("VOXPHYS_GRID_DIM", "128"))
K_SCALE = float(os.getenv("VOXPHYS_K", "4.0"))
MIN_VOXEL_SIZE = float(os.getenv("VOXPHYS_MIN_VOXEL_SIZE", "0.005"))   # meters
TABLE_BIN = float(os.getenv("VOXPHYS_TABLE_BIN", "0.005"))             # meters

# -----------------------------
#  PRIORS
# -----------------------------
N_DIRECTIONS = int(os.getenv("VOXPHYS_N_DIRECTIONS", "25"))
COARSEN_FACTOR = int(os.getenv("VOXPHYS_COARSEN_FACTOR", "8"))
PROB_CLAMP = float(os.getenv("VOXPHYS_PROB_CLAMP", "1e-6"))

# -----------------------------
#  RUNTIME
# -----------------------------
LOG_LEVEL = os.getenv("VOXPHYS_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
PROGRESS = os.getenv("VOXPHYS_PROGRESS", "0") == "1"
