"""gsavatar: a layered codec for dynamic 3D Gaussian avatars.

A dynamic avatar is split into a structural layer (quantized generator weights
that map pose maps to Gaussian attribute maps) and a motion layer (losslessly
coded pose parameters plus predictively coded pose maps). The layers mux into
one container that decodes progressively: the structural layer alone already
renders the canonical avatar.
"""

from .avatar import (
    Gaussian3D,
    GaussianCloud,
    GaussianMapPair,
    PoseMapPair,
    SkinnedTemplate,
    SmplxPose,
    extract_gaussians,
    lbs_blend,
    load_pose_sequence,
    load_template,
    pose_template,
    render_pose_maps,
    save_pose_sequence,
    save_template,
)
from .container import (
    DecodedLayers,
    Section,
    decode_all,
    demux,
    encode_scene,
    mux,
    rd_sweep,
    report_composition,
)
from .entropy import BitReader, BitWriter, HuffmanTable, build_table, decode, encode
from .errors import DecodeError
from .generator import GeneratorWeights, forward, load_weights, save_weights
from .loss import (
    FacialWeightConfig,
    LossWeights,
    facial_weight_map,
    fit_generator,
    offset_loss,
    total_loss,
    weighted_perceptual,
)
from .pose_space import (
    PcaBasis,
    fit_joint_pose_space,
    fit_pca,
    load_basis,
    project_clip,
    project_clip_joint,
    save_basis,
)
from .posemap_codec import PoseMapStream, decode_posemaps, encode_posemaps
from .renderer import (
    Camera,
    SplatImage,
    deform_gaussians_with_transforms,
    lbs_deform_gaussians,
    psnr,
    rasterize,
    ssim,
    write_ppm,
)
from .smplx_codec import SmplxStream, decode_smplx, encode_smplx
from .weight_quant import (
    QuantConfig,
    QuantizedTensor,
    dequantize_tensor,
    quantize_network,
    quantize_tensor,
)

__version__ = "0.1.0"
