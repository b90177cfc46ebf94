from .config import CfgNode as CN

_C = CN()

_C.VERSION = 1

# ------------- MODEL ------------ #
_C.MODEL = CN()
_C.MODEL.META_ARCHITECTURE = "SpdSiameseNetwork"
_C.MODEL.DEVICE = "cpu"
# Model file to initialize from (empty = random init)
_C.MODEL.WEIGHTS = ""
_C.MODEL.FEATURE_DIM = 128
# Contrastive margin g
_C.MODEL.MARGIN = 1.0

_C.MODEL.SPD = CN()
# ReEig threshold
_C.MODEL.SPD.EPSILON = 1e-4
# Eigengaps below this are degenerate in backprop
_C.MODEL.SPD.EIGENGAP_TOL = 1e-8
# "limit": coalesced-eigenvalue derivative; "jitter": spread degenerate eigenvalues by EIGENGAP_JITTER
_C.MODEL.SPD.EIGENGAP_MODE = "limit"
_C.MODEL.SPD.EIGENGAP_JITTER = 1e-9

_C.MODEL.CONV = CN()
_C.MODEL.CONV.INIT_SCALE = 0.05
# Start from a centre-tap identity kernel (plus uniform noise)
_C.MODEL.CONV.INIT_IDENTITY = True
_C.MODEL.CONV.SHARE_ACROSS_PARTS = False

_C.MODEL.SPDC = CN()
_C.MODEL.SPDC.OUT_DIM = 10

# ------------- INPUT ------------ #
_C.INPUT = CN()
# Joint convention: hand22 | body25 | body21 | custom
_C.INPUT.LAYOUT = "body25"
# JSON list of index lists, required for custom layouts
_C.INPUT.PARTITION_FILE = ""
_C.INPUT.INTERP_FRAMES = 60
# hand | daily | industrial: use that preset length instead of INTERP_FRAMES
_C.INPUT.INTERP_PRESET = ""
_C.INPUT.NORMALIZE = True
# Feed frame-to-frame velocities instead of coordinates
_C.INPUT.DERIVATIVE = False

# ---------- DATALOADER ---------- #
_C.DATALOADER = CN()
_C.DATALOADER.PAIRS_PER_EPOCH = 256
_C.DATALOADER.POSITIVE_RATIO = 0.5
_C.DATALOADER.HELD_OUT_PAIRS = 64

# ------------ SOLVER ------------ #
_C.SOLVER = CN()
_C.SOLVER.EPOCHS = 10
_C.SOLVER.PAIRS_PER_BATCH = 16
_C.SOLVER.BASE_LR = 0.01
_C.SOLVER.MOMENTUM = 0.9
_C.SOLVER.NESTEROV = False
_C.SOLVER.WEIGHT_DECAY = 0.0
_C.SOLVER.BIAS_LR_FACTOR = 1.0
_C.SOLVER.STIEFEL_LR_FACTOR = 1.0
_C.SOLVER.LR_SCHEDULER_NAME = "WarmupMultiStepLR"
_C.SOLVER.STEPS = ()
_C.SOLVER.GAMMA = 0.1
_C.SOLVER.WARMUP_FACTOR = 0.1
_C.SOLVER.WARMUP_ITERS = 10
_C.SOLVER.WARMUP_METHOD = "linear"
# Save a checkpoint every this many iterations (0 = final only)
_C.SOLVER.CHECKPOINT_PERIOD = 0

_C.SOLVER.CLIP_GRADIENTS = CN()
_C.SOLVER.CLIP_GRADIENTS.ENABLED = False
_C.SOLVER.CLIP_GRADIENTS.CLIP_TYPE = "norm"
_C.SOLVER.CLIP_GRADIENTS.CLIP_VALUE = 1.0
_C.SOLVER.CLIP_GRADIENTS.NORM_TYPE = 2.0

# ----------- DETECTOR ----------- #
_C.DETECTOR = CN()
# binary | multiclass
_C.DETECTOR.MODE = "binary"
_C.DETECTOR.WINDOW_SIZE = 21
_C.DETECTOR.WINDOWS_PER_SEQUENCE = 20

# ------------ ONLINE ------------ #
_C.ONLINE = CN()
_C.ONLINE.REFRESH = 6
_C.ONLINE.TESTS = 3
# Early-classification deadline in seconds (<= 0 disables)
_C.ONLINE.DEADLINE = -1.0
_C.ONLINE.CAPTURE_RATE = 30.0
# Confirmed transition frame = trigger window end - offset (< 0 means r)
_C.ONLINE.START_OFFSET = -1
_C.ONLINE.MIN_SEGMENT_SECONDS = 0.3
# replay | live
_C.ONLINE.CLOCK = "replay"
_C.ONLINE.SIMULATED_INFERENCE_SECONDS = 0.0

# ------------- TEST ------------- #
_C.TEST = CN()
# Evaluate held-out contrastive loss every this many iterations (0 = end only)
_C.TEST.EVAL_PERIOD = 0
# [[task, metric, expected, tolerance], ...]
_C.TEST.EXPECTED_RESULTS = []

# ------------- EVAL ------------- #
_C.EVAL = CN()
_C.EVAL.IOU_THRESHOLD = 0.5
_C.EVAL.DETECTION_WINDOWS_PER_SEQUENCE = 20

# ------------ Other ------------- #
_C.OUTPUT_DIR = "./output"
_C.SEED = -1
_C.MUTE_HEADER = True
