"""dctrack: online multi-target tracking with zone-partitioned learned assignment."""

from .assign import MatchResult, solve, solve_bruteforce
from .cluster import (
    build_affinity,
    classify_zones,
    cluster_exact,
    correlation_cluster,
    divide_frame,
)
from .config import Config, read_config, write_config
from .featcost import (
    appearance_distance_g1,
    build_instance,
    feature_map,
    feature_vector,
    mask_vector,
    motion_coherence_g2,
    solve_instance,
)
from .learn import (
    NoiseSpec,
    TrainingSample,
    bcfw_step,
    latent_complete,
    load_model,
    make_training_set,
    max_oracle,
    run_training,
    save_model,
    train,
)
from .metrics import clear_mot, tl_curve
from .model import (
    AssignmentInstance,
    Detection,
    FrameSolution,
    Histogram,
    KalmanState,
    Track,
    TrackStatus,
    WeightVector,
    Zone,
    ZoneKind,
    ZonePartition,
)
from .track import kalman_correct, kalman_predict, new_state, run_sequence, step

__version__ = "0.1.0"
