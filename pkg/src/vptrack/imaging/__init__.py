from .corruptions import (
    KINDS, CorruptionSpec, apply_corruption, corrupt_random,
    gaussian_noise, shot_noise, impulse_noise, defocus_blur, motion_blur,
    snow, frost, fog, brightness, disk_kernel, motion_kernel,
    diamond_square, rgb_to_hls, hls_to_rgb,
    GAUSSIAN_SIGMA, SHOT_LAMBDA, IMPULSE_FRACTION, DEFOCUS_RADIUS,
    MOTION_EXTENT, BRIGHTNESS_SHIFT, FOG_WEIGHT, FROST_OPACITY,
)
from .augment import (
    AugmentSpec, hflip, rotate, occlude, perspective, random_crop_roi,
    apply_augment, bilinear_sample, warp_homography,
    homography_from_corners, apply_homography_points,
)
