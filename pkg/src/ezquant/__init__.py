"""Data-free weight-only quantization with outlier isolation and range optimization."""

from .types import (
    ChannelScales,
    DenseMatrix,
    OutlierSet,
    QuantConfig,
    QuantizedWeight,
    TensorStats,
    tensor_stats,
)
from .rtn import (
    dequantize_channel,
    initial_scale,
    pack_levels,
    quantize_channel,
    reconstruction_error,
    unpack_levels,
)
from .outliers import detect_outliers, normal_mask_apply, scatter_outliers
from .optimize import (
    AdamState,
    OptimizeTrace,
    adam_step,
    brute_force_optimal_scale,
    optimize_channel_range,
    range_gradient,
)
from .pipeline import (
    dequantize_tensor,
    easyquant_tensor,
    outliers_only_tensor,
    rtn_tensor,
)

__version__ = "0.1.0"
