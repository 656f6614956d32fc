"""Active-stereo depth engine: census, four-path SGM, refinement, registration."""

from activesim.stereo.census import CensusImage, CostVolume, census, census_pairs, matching_cost
from activesim.stereo.config import StereoConfig, StereoConfigError
from activesim.stereo.engine import DepthResult, compute_depth, compute_disparity
from activesim.stereo.geometry import rectify, register_depth, warp_homography
from activesim.stereo.refine import (
    INVALID_INT,
    disp_to_depth,
    lr_check,
    median,
    right_volume,
    subpixel,
    subpixel_offset,
    wta,
)
from activesim.stereo.sgm import sgm_aggregate

__all__ = [
    "INVALID_INT",
    "CensusImage",
    "CostVolume",
    "DepthResult",
    "StereoConfig",
    "StereoConfigError",
    "census",
    "census_pairs",
    "compute_depth",
    "compute_disparity",
    "disp_to_depth",
    "lr_check",
    "matching_cost",
    "median",
    "rectify",
    "register_depth",
    "right_volume",
    "sgm_aggregate",
    "subpixel",
    "subpixel_offset",
    "warp_homography",
    "wta",
]
