"""Guided patch-based style transfer and compositing for 3D render passes."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    CorruptDataError,
    InputOutputError,
    MissingFileError,
    NumericError,
    StyleTxError,
    UnmappedColorError,
    UnsupportedFormatError,
    ValidationError,
)
from .guides import (
    GuideChannel,
    GuideKind,
    GuideSet,
    GuideSide,
    SceneAABB,
    StyleExemplar,
    assemble_guide_set,
    compute_sequence_aabb,
    normalize_world_position,
    validate_guide_pair,
)
from .raster import (
    EXR,
    PNG8,
    PNG16,
    ImagePyramid,
    RasterImage,
    build_pyramid,
    load_image,
    save_image,
)
from .synthesis import (
    EnergyRecord,
    NearestNeighborField,
    SynthesisParams,
    SynthesisResult,
    init_nnf,
    patch_distance,
    patchmatch_pass,
    synthesize,
    total_energy,
    upsample_nnf,
    vote,
)
from .temporal import (
    FrameResult,
    TemporalParams,
    advect,
    build_disocclusion_mask,
    derive_seed,
    flicker_metric,
    run_sequence,
    synthesize_frame_with_temporal,
)
from .compositing import (
    BlendMode,
    LayerKind,
    LayerSpec,
    LayerStack,
    Palette,
    colorize,
    composite_frame,
    transfer_layer,
)
from .config import ShotConfig, parse_config
