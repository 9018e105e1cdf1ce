"""starvox: domain-randomized synthetic 3D training volumes of star-convex
instances, plus the encoding/decoding and evaluation machinery around them."""

__version__ = "0.1.0"

from .volume import (  # noqa: F401
    LabelVolume,
    PadMode,
    Volume3,
    dft3,
    edt3,
    idft3,
    nearest_sample,
    resample_to_grid,
    trilinear_sample,
)
from .noise import PerlinSpec, perlin3, perlin_multichannel, smooth_deform_field, warp  # noqa: F401
from .labelgen import (  # noqa: F401
    InstanceSeed,
    LabelGenConfig,
    assign_labels,
    density_pad_rescale,
    place_instances,
)
from .appearance import (  # noqa: F401
    AppearanceConfig,
    BackgroundMode,
    GeneratorMode,
    GmmParams,
    modulate_texture,
    render_background,
    render_foreground,
    sample_gmm_params,
    synthesize,
)
from .augment import AugmentConfig, JointSample, apply_pipeline  # noqa: F401
from .star import (  # noqa: F401
    RaySet,
    StarCandidate,
    StarEncoding,
    decode_nms,
    encode,
    is_star_convex,
    make_rays,
    poly_iou,
    rasterize,
)
from .metrics import MatchReport, instance_iou_matrix, match_at_threshold, score_curve  # noqa: F401
from .config import GeneratorConfig, load_config, dump_config  # noqa: F401
from .pipeline import evaluate_files, generate_dataset, generate_sample, preview_sample, verify_manifest  # noqa: F401
