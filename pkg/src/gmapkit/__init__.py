"""Square, mirror-symmetric geometric maps of face meshes, plus loss, shape and metric tooling."""

import os as _os

# GMAP_THREADS caps BLAS/OpenMP threads; it only takes effect before numpy loads
if _os.environ.get("GMAP_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["GMAP_THREADS"])

from .deform import (DeformParams, DeformResult, KeyVertexSpec, SpecError, deform_to_gmap,  # noqa: E402
                     local_rigid_fit, predict_positions, rearrange_key_vertices, smooth_offsets,
                     smoothing_matrix, symmetry_error)
from .harmonic import UVEmbedding, check_flips, cotangent_weights, solve_harmonic  # noqa: E402
from .mesh import (Mesh, ObjParseError, TopologyReport, load_obj, one_ring, save_obj,  # noqa: E402
                   validate_topology, vertex_normals)
from .metrics import AlignmentResult, icp_align, mse_n, mse_v, procrustes_align  # noqa: E402
from .pipeline import MapBuild, StageError, build_geometric_map  # noqa: E402
from .sampling import (GeometricMap, RasterTable, backward_sample, build_raster_table,  # noqa: E402
                       flip_map, forward_map, sampling_jacobian)

__version__ = "0.1.0"


def data_path(name: str) -> str:
    """Absolute path of a bundled data file."""
    return _os.path.join(_os.path.dirname(__file__), "data", name)
