"""Multi-spectral channel attention.

Channel attention compresses each feature channel to one scalar before
the gating head.  This package generalizes the usual spatial mean to
projections onto 2D cosine-transform frequency components: the transform
kernels, the attention operator with exact analytic gradients, three
criteria for choosing which frequencies to use, and a small seeded
training harness that exercises the claims on synthetic data.
"""

from .attention import (
    AttentionParams,
    FrequencyAssignment,
    Gap,
    LearnableTensor,
    MultiSpectral,
    NasMixture,
    apply_attention,
    attention_backward,
    attention_forward,
    compress,
    init_attention_params,
    param_count,
)
from .dct import (
    DctBasis,
    FilterBank,
    Normalization,
    basis,
    dct2,
    get_filter_bank,
    idct2,
    make_filter_bank,
    orthonormal_basis_2d,
    spectral_pool,
)
from .harness import (
    Hyper,
    ModelConfig,
    RunRecord,
    SyntheticSpec,
    TrainingDiverged,
    compare_learnable,
    evaluate_component,
    gen_synthetic,
    sweep_k,
    train,
)
from .selection import (
    ComponentScore,
    FrequencyGrid,
    NasState,
    assign_lf,
    assign_ts,
    init_nas_state,
    lf_order,
    nas_derive,
    nas_mix,
)
from .tensor import elementwise_mul_sum, load_tensor, reduce_mean_hw, save_tensor

__version__ = "0.1.0"
