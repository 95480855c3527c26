"""Morphable face models, landmark fitting, rigid registration, face metrics and KD losses."""

from .errors import (DimensionError, FaceKitError, FormatError, NormalizationStateError, NumericalError,
                     SingularSystemError, TruncatedFileError, UnsupportedVersionError, ValidationError)
from .fitting import FitConfig, FitResult, LandmarkSpec, fit, residual
from .metrics import MetricsReport, are, distance_ratio, evaluate, holistic_rmse, nme, part_rmse
from .model import (FaceMesh, MorphableModel, ParamStats, ParamVector, RigidTransform, apply_pose, compose,
                    denormalize_params, normalize_params, synthesize, vertex_normals)
from .registration import (IcpConfig, IcpResult, NearestNeighborIndex, build_spatial_index,
                           estimate_rigid_point_to_plane, icp, point_to_plane_rmse)

__version__ = "0.1.0"
