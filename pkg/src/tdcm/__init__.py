"""tdcm: a seeded-codebook diffusion image codec.

Noise vectors for the reverse diffusion process are chosen from
reproducible Gaussian codebooks instead of sampled, so an image is stored
as nothing but subset ranks and coefficient signs; any denoiser that
estimates the clean signal can drive the process, in process or over a
socket.
"""

from .bitstream import (
    CompressedImage,
    Header,
    MalformedContainerError,
    bit_saving_study,
    bpp,
    bpp_ordered,
    pack_steps,
    rank,
    rank_width,
    unpack_steps,
    unrank,
)
from .codebook import CapacityError, Codebook, gram_schmidt, orthogonality_report
from .codec import (
    M_VALUES,
    EncodeParams,
    EncodeResult,
    PriorityMask,
    choose_ddim_steps,
    decode,
    decode_batch,
    encode,
    encode_batch,
    encode_priority,
)
from .diffusion import (
    DiffusionSchedule,
    codebook_step,
    ddim_step,
    initial_state,
    make_schedule,
    posterior_mean,
)
from .selection import (
    DegenerateSelectionError,
    MPSelection,
    QuantizationSet,
    SparseSelection,
    brute_force_oracle,
    combine_and_normalize,
    inner_products,
    mp_select,
    normalized_inner_products,
    residual_angle,
    threshold_select_quantized,
    threshold_select_sign,
)
from .testbed import (
    GaussianPrior,
    RemoteDenoiser,
    gaussian_denoiser,
    mmse_denoise,
    psnr,
    scaled_psnr,
)

__version__ = "0.1.0"
