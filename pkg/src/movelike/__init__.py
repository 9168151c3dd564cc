"""Animate the object in a single product photo with a keypoint driving sequence."""
from .codec import AnimationJob, encode_gif, write_gif, write_png_sequence
from .config import PipelineConfig, derive_seed, load_config
from .enhance import EnhanceParams, back_project, upscale
from .errors import MovelikeError
from .fusion import FusionParams, composite, feather, fuse_frame, stitch_back
from .inpaint import InpaintParams, NearestNeighborField, inpaint, pure_background
from .localization import LocalizedObject, MattingParams, localize
from .motion import (DenseMotionField, DrivingSequence, MotionFrame, MotionParams, animate,
                     auto_keypoints, dense_motion, frame_transforms, load_driving, warp)
from .pipeline import PipelineResult, RunReport, run_pipeline
from .raster import AlphaMask, PixelRect, RasterImage, distance_transform, read_png, resample, write_png

__version__ = "0.1.0"
