"""Severity tables for the weather-style corruptions.

Versioned so recipes can record which table produced them. Snow and contrast
values follow the public ImageNet-C reference; motion-blur lengths are line
kernel lengths in pixels.
"""

from dataclasses import dataclass

TABLE_VERSION = 1

MOTION_BLUR_LENGTHS = (7, 9, 13, 17, 21)

CONTRAST_FACTORS = (0.4, 0.3, 0.2, 0.1, 0.05)


@dataclass(frozen=True)
class SnowParams:
    loc: float  # mean of the Gaussian snow field
    scale: float  # std of the Gaussian snow field
    zoom: float  # clipped-zoom factor applied to the field
    threshold: float  # field values below this become 0
    blur_length: int  # motion-blur line length for the snow layer
    blend: float  # weight of the original image in the luminance lift


# ImageNet-C (loc, scale, zoom, threshold, radius, sigma, blend); the motion
# radius r becomes a line of length 2r + 1.
SNOW_TABLE = (
    SnowParams(0.1, 0.3, 3.0, 0.5, 21, 0.8),
    SnowParams(0.2, 0.3, 2.0, 0.5, 25, 0.7),
    SnowParams(0.55, 0.3, 4.0, 0.9, 25, 0.7),
    SnowParams(0.55, 0.3, 4.5, 0.85, 25, 0.65),
    SnowParams(0.55, 0.3, 2.5, 0.85, 25, 0.55),
)

SEVERITIES = (1, 2, 3, 4, 5)
