"""Radar place recognition with Radon sinogram descriptors and frequency-domain correlation."""

__version__ = "0.1.0"

from .descriptor import (DescriptorStore, RadarDescriptor, coarse_descriptor, downsample_sinogram,
                         make_descriptor, read_store, write_store)
from .errors import (CorruptionError, DimensionError, FormatError, NoCandidateError, OrderError,
                     ParameterError, RangeError, SinoplaceError)
from .evaluation import build_ground_truth, evaluate, sensitivity_sweep
from .ingest import PolarScan, PoseRecord, ScanLayout, associate, load_poses, load_scan
from .matcher import (RetrievalConfig, RetrievalIndex, cross_correlate, retrieve,
                      similarity_distance)
from .radon import Sinogram, radon_transform
from .synth import NoiseSpec, SceneSpec, render_polar
from .warp import CartesianImage, GridSpec, backward_warp
