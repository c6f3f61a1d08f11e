"""Refine, rank and copy-paste free object segments for instance segmentation."""

from .masks import (BoundingBox, EmptyMaskError, RleError, RleMask, area, bbox_of,
                    intersection_area, rle_decode, rle_encode)
from .rank import (ConfidencePair, ScoredSegment, drop_rate, freeseg_score, iob, iom, iou,
                   rank_segments)
from .refine import (NoThresholdError, RefineConfig, binarize, dilate, erode, gaussian_filter,
                     largest_connected_component, li_threshold, refine_segment)
from .synth import (Background, DegeneratePaste, PastePolicy, Segment, SynthScene, paste,
                    synthesize, transform_background, transform_paste)

__version__ = "0.1.0"
