"""Perceptual importance maps and bitrate-neutral ΔQP control."""

from ._pim import (
    Error,
    Model,
    block_vif,
    estimate_ratio,
    mb_psnr,
    mb_ssim,
    parameter_count,
    pool_to_grid,
    preference,
    quantize_classes,
    rate_weight,
    read_dqp,
    solve_dqp,
    summarize_dataset,
    tally_summary,
    write_dqp,
)

__all__ = [
    "Error",
    "Model",
    "block_vif",
    "estimate_ratio",
    "mb_psnr",
    "mb_ssim",
    "parameter_count",
    "pool_to_grid",
    "preference",
    "quantize_classes",
    "rate_weight",
    "read_dqp",
    "solve_dqp",
    "summarize_dataset",
    "tally_summary",
    "write_dqp",
]
