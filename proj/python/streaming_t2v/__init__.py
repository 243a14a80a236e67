from ._core import (
    DomainError,
    FormatError,
    GenerationResult,
    Schedule,
    ShapeError,
    cfg_epsilon,
    ddim_timesteps,
    flow_std,
    forward_diffuse,
    generate,
    make_schedule,
    mawe,
    ofs,
    optical_flow,
    randomized_blend,
    read_container,
    refine,
    reid_score,
    sample_gaussian_oracle,
    scuts,
    split_into_chunks,
    toy_video,
    warp_error,
    write_container,
    xt_slice,
)

__all__ = [name for name in dir() if not name.startswith("_")]
