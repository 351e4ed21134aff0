"""Condition-driven deformable image registration on a synthetic 4D-CT phantom.

The heavy lifting lives in the compiled `_core` extension; this package
re-exports the main operations with their numpy-facing signatures.
"""

from imitate._core import (  # noqa: F401
    __version__,
    agreement_loss,
    combined_loss,
    default_config_json,
    detjac_loss,
    dice_loss,
    generate_signal,
    jacobian_determinant,
    make_phantom_dataset,
    model_forward,
    ncc_loss,
    recover_frame,
    render_frame,
    scale_field,
    train,
    warp_image,
    warp_mask,
    wilcoxon,
)

__all__ = [
    "__version__",
    "agreement_loss",
    "combined_loss",
    "default_config_json",
    "detjac_loss",
    "dice_loss",
    "generate_signal",
    "jacobian_determinant",
    "make_phantom_dataset",
    "model_forward",
    "ncc_loss",
    "recover_frame",
    "render_frame",
    "scale_field",
    "train",
    "warp_image",
    "warp_mask",
    "wilcoxon",
]
