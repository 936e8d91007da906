"""Reward computation and evaluation engine for grounding-then-segmentation
pipelines: structured response parsing, distance-based and
segmenter-in-the-loop GRPO rewards, group-relative advantages with a toy
trainer, the IoU metric suite, and dataset plumbing."""

from .errors import (
    AlignmentError,
    ConsistencyError,
    CorruptRle,
    DuplicateSample,
    EmptyEvaluation,
    InvalidGeometry,
    InvalidReward,
    ParseError,
    SegmenterUnavailable,
    SegRewardError,
    ShapeError,
    TrainingDiverged,
    UnknownImage,
)
from .geometry import (
    NORMALIZED_SPACE,
    Box,
    CoordSpace,
    Point2,
    box_area,
    box_center,
    box_iou,
    box_l1,
    normalize_box,
    point_distance,
    point_in_box,
    rescale_box,
    rescale_point,
)
from .grpo import (
    GrpoConfig,
    SyntheticTask,
    ToyPolicy,
    evaluate_no_target,
    group_advantages,
    grpo_step,
    kl_penalty,
    make_synthetic_task,
    train_toy,
)
from .mask import (
    BinaryMask,
    Polygon,
    RleMask,
    distance_to_foreground,
    mask_iou,
    mask_union,
    rasterize,
    rle_decode,
    rle_encode,
)
from .metrics import (
    MetricReport,
    SampleEvaluation,
    box_ap,
    build_report,
    ciou,
    miou,
    no_target_metrics,
    precision_at,
)
from .parsing import (
    GroundingPrediction,
    Instance,
    ParsedResponse,
    has_nonempty_think,
    parse_response,
    repetition_score,
)
from .rewards import (
    GroundTruth,
    RewardBreakdown,
    RewardConfig,
    distance_reward,
    sam_loop_reward,
    score_group,
)
from .segmenter import (
    Endpoint,
    RemoteSegmenter,
    SceneObject,
    SceneStore,
    SceneStoreSegmenter,
    SegmentRequest,
    SegmentResponse,
    StubSegmenter,
    SyntheticScene,
    remote_segment,
    stub_segment,
)

__version__ = "0.1.0"
