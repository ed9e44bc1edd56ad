from .tensor import (
    Tensor, as_tensor, no_grad, use_dtype, default_dtype,
    add, mul, tsum, tmean, tabs, reshape, slice_axis, concat,
    sigmoid, relu, leaky_relu, relu6, hard_sigmoid, hard_swish,
    softmax, bce_with_logits,
)
from .functional import (
    conv2d, conv_transpose2d, dilate2d, flip_swap, batch_norm,
    max_pool2d, global_avg_pool, upsample_nearest2x,
)
from .modules import (
    Module, Conv2d, ConvTranspose2d, BatchNorm2d, MaxPool2d, Sequential,
    seed_init, shape_tape, kaiming_uniform,
)
from .optim import Adam
from .checkpoint import save_checkpoint, load_checkpoint
