"""Mode counting and localization for Gaussian kernel density estimators."""

from mode_atlas.gkde import FieldValue, SampleSet, draw_samples, field_f, kde_eval
from mode_atlas.modes import CriticalPoint, ModeReport, find_modes, mean_shift, scale_space_check

__all__ = [
    "CriticalPoint",
    "FieldValue",
    "ModeReport",
    "SampleSet",
    "draw_samples",
    "field_f",
    "find_modes",
    "kde_eval",
    "mean_shift",
    "scale_space_check",
]

__version__ = "0.1.0"
