SUCCESS_RADIUS_M = 3.0

START_THRESHOLD_M = 18.0
THRESHOLD_DECAY = 0.8
FAILURES_PER_DECAY = 5

MAX_DECISIONS = 20

VISION_DIM = 32
HIDDEN_DIM = 64

SUCCESS_BONUS = 3.0

# Seed of the class/attribute/region code tables shared by every world, so
# that what a feature vector encodes does not depend on the house.
FEATURE_TABLE_SEED = 20210520

ENV_OUTPUT_DIR = "GBE_NAV_OUTPUT_DIR"
ENV_USE_MLFLOW = "GBE_NAV_USE_MLFLOW"

SPLITS = ("train", "val_seen_instruction", "val_seen_house", "val_unseen_house", "test")
