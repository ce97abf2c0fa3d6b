"""Rotation-equivariant (2+1)D convolutions in an unrolled reconstructor for dynamic MRI."""

from .autodiff import Tape, Tensor, backward, finite_difference_gradient, init_params
from .group import RotationGroup, group_act
from .basis import build_basis_1d, build_basis_2d, synthesize_filters
from .layers import SrecBlock, SrecLayer, build_block, make_layer, srec_block_forward
from .mri import ForwardOperator, adjoint_AH, forward_A, generate_mask, normal_AHA, synth_coil_maps
from .phantom import PhantomSpec, Sample, generate_cine_phantom, read_dataset, write_dataset
from .unroll import UnrollConfig, UnrollModel, build_model, unrolled_forward, variant_config
from .train import TrainConfig, evaluate, train
from .metrics import hfen, psnr, ssim

__version__ = "0.1.0"
