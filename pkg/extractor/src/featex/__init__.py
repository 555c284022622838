"""Image-folder feature extraction into USDF files."""

from .extract import ExtractionJob, ExtractionReport, extract, list_images, rotate_reflect
from .models import MODEL_NAMES, Backbone, ModelUnavailableError, load_backbone

__version__ = "0.1.0"
