"""Landmark and image-quality metrics plus compression round trips."""

from .degrade import CodecError, dct_video_proxy, jpeg_roundtrip, video_roundtrip, video_tool_available
from .metrics import ROI, interocular, landmark_roi, mask_ssim, nme, ssim, ssim_map

__all__ = [
    "ROI",
    "CodecError",
    "dct_video_proxy",
    "interocular",
    "jpeg_roundtrip",
    "landmark_roi",
    "mask_ssim",
    "nme",
    "ssim",
    "ssim_map",
    "video_roundtrip",
    "video_tool_available",
]
