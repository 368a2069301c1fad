"""End-to-end map construction: topology check, harmonic init, deformation, raster table."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .deform import DeformParams, DeformResult, KeyVertexSpec, deform_to_gmap, symmetry_error
from .harmonic import UVEmbedding, boundary_to_circle, check_flips, solve_harmonic
from .mesh import Mesh, TopologyReport, validate_topology
from .sampling import RasterTable, build_raster_table, roundtrip_error


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")


@dataclass
class MapBuild:
    mesh: Mesh
    report: TopologyReport
    spec: KeyVertexSpec
    initial: UVEmbedding
    deform: DeformResult
    table: RasterTable | None = None
    roundtrip: dict | None = None

    @property
    def embedding(self) -> UVEmbedding:
        return self.deform.embedding

    def summary(self) -> dict:
        out = {
            "converged": self.deform.converged,
            "iterations": self.deform.iterations,
            "flips": self.deform.flips,
            "initial_flips": check_flips(self.initial, self.mesh),
            "symmetry_error": symmetry_error(self.embedding, self.spec.landmark_pairs,
                                             self.spec.axis_vertices),
            "final_mean_offset": self.deform.log[-1]["mean_offset"] if self.deform.log else 0.0,
            "n_fixed": len(self.deform.targets),
        }
        if self.table is not None:
            out["resolution"] = self.table.resolution
            out["raster_conflicts"] = self.table.conflicts
            out["masked_pixels"] = int((~self.table.mask).sum())
        if self.roundtrip is not None:
            out["roundtrip"] = {k: v for k, v in self.roundtrip.items() if k != "errors"}
        return out


def build_geometric_map(mesh: Mesh, spec_doc: Mapping, params: DeformParams | None = None,
                        resolution: int | None = None) -> MapBuild:
    """Run every stage; failures are re-raised as ``StageError`` naming the stage."""
    try:
        report = validate_topology(mesh)
        if not report.is_manifold or report.boundary_loops != 1:
            raise ValueError(f"need a manifold disk (manifold={report.is_manifold}, "
                             f"boundary loops={report.boundary_loops})")
    except Exception as exc:
        raise StageError("validate", exc) from exc
    try:
        spec = KeyVertexSpec.from_document(spec_doc, report)
        spec.validate(mesh.n_vertices)
    except Exception as exc:
        raise StageError("spec", exc) from exc
    try:
        start = spec_doc.get("boundary_start")
        if start is not None:
            # put the axis vertical: the start vertex sits at the bottom of the disk
            boundary = boundary_to_circle(report, mesh, start=int(start), phase=-np.pi / 2)
        else:
            boundary = boundary_to_circle(report, mesh)
        initial = solve_harmonic(mesh, boundary)
    except Exception as exc:
        raise StageError("harmonic", exc) from exc
    try:
        result = deform_to_gmap(mesh, initial, spec, params)
    except Exception as exc:
        raise StageError("deform", exc) from exc
    build = MapBuild(mesh, report, spec, initial, result)
    if resolution is not None:
        try:
            build.table = build_raster_table(result.embedding, mesh, resolution)
            build.roundtrip = roundtrip_error(mesh, result.embedding, build.table)
        except Exception as exc:
            raise StageError("raster", exc) from exc
    return build
