"""Command-line front end: every stage reads and writes files.

Exit codes: 0 success, 1 quality failure, 2 usage or spec error,
3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import losses as L
from .deform import DeformParams, SpecError
from .formats import (SCHEMA_VERSION, FormatError, dump_json, read_gmap, read_table, read_uv,
                      write_gmap, write_png, write_table, write_uv)
from .mesh import Mesh, ObjParseError, load_obj, save_obj, validate_topology, vertex_normals
from .metrics import icp_align, mse_n, mse_v, procrustes_align
from .net_shapes import pyramid_length, trace_discriminator, trace_generator
from .pipeline import StageError, build_geometric_map
from .sampling import backward_sample, forward_map

EXIT_OK, EXIT_QUALITY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("gmapkit")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _resolution(text: str) -> int:
    try:
        r = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"resolution must be an integer, got {text!r}") from None
    if r < 4:
        raise argparse.ArgumentTypeError(f"resolution must be >= 4, got {r}")
    return r


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _out_dir(args) -> Path:
    out = Path(args.out_dir or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create output directory {out}: {exc}") from None
    return out


def _load_mesh(path) -> Mesh:
    try:
        return load_obj(path)
    except ObjParseError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc}") from None
    except IndexError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc}") from None


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_IO, f"{path}: invalid JSON ({exc})") from None


def _report(obj: dict, kind: str, args) -> dict:
    rep = {"schema_version": SCHEMA_VERSION, "command": kind}
    rep.update(obj)
    return rep


def _emit(report: dict, args, text: str | None = None) -> None:
    if args.format == "json":
        print(dump_json(_jsonable(report)))
    else:
        print(text if text is not None else _as_text(report))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _as_text(report: dict, prefix: str = "") -> str:
    lines = []
    for k in sorted(report):
        v = report[k]
        if isinstance(v, dict):
            lines.append(_as_text(v, f"{prefix}{k}."))
        else:
            lines.append(f"{prefix}{k}: {v}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    from .synthetic import synthetic_face

    out = _out_dir(args)
    face = synthetic_face()
    save_obj(face.mesh, out / "synthetic_face.obj")
    dump_json(face.spec, out / "synthetic_face_spec.json")
    _emit(_report({"mesh": str(out / "synthetic_face.obj"),
                   "spec": str(out / "synthetic_face_spec.json"),
                   "n_vertices": face.mesh.n_vertices}, "synth", args), args)
    return EXIT_OK


def cmd_build_map(args) -> int:
    mesh = _load_mesh(args.mesh)
    spec_doc = _read_json(args.spec)
    params = DeformParams(max_iterations=args.max_iters, convergence_threshold=args.threshold)
    try:
        build = build_geometric_map(mesh, spec_doc, params, resolution=args.resolution)
    except StageError as exc:
        if isinstance(exc.cause, SpecError):
            raise CliError(EXIT_USAGE, f"spec error in field '{exc.cause.field}': {exc.cause}") from None
        raise CliError(EXIT_QUALITY, f"stage '{exc.stage}' failed: {exc.cause}") from None
    out = _out_dir(args)
    write_uv(build.embedding, out / "uv.json", resolution=args.resolution)
    write_table(build.table, out / "table.bin")
    summary = build.summary()
    ok = summary["converged"] and summary["flips"] == 0
    report = _report({"status": "ok" if ok else "quality_failure", **summary,
                      "params": {"max_iterations": args.max_iters, "threshold": args.threshold,
                                 "resolution": args.resolution, "seed": args.seed}},
                     "build-map", args)
    dump_json(_jsonable(report), out / "report.json")
    _emit(report, args)
    return EXIT_OK if ok else EXIT_QUALITY


def cmd_rasterize(args) -> int:
    mesh = _load_mesh(args.mesh)
    table = read_table(args.table)
    if table.n_vertices != mesh.n_vertices or not np.array_equal(table.triangles, mesh.triangles):
        raise CliError(EXIT_USAGE, f"table was built for {table.n_vertices} vertices / "
                                   f"{len(table.triangles)} triangles; mesh has "
                                   f"{mesh.n_vertices} / {mesh.n_triangles}")
    gmap = forward_map(mesh.vertices, table)
    out = _out_dir(args)
    write_gmap(gmap, out / "map.gmap")
    write_png(gmap, out / "map.png")
    _emit(_report({"map": str(out / "map.gmap"), "preview": str(out / "map.png"),
                   "resolution": gmap.resolution, "valid_pixels": int(gmap.mask.sum())},
                  "rasterize", args), args)
    return EXIT_OK


def cmd_sample_back(args) -> int:
    gmap = read_gmap(args.map)
    uv, doc = read_uv(args.uv)
    template = _load_mesh(args.template)
    if uv.n != template.n_vertices:
        raise CliError(EXIT_USAGE, f"uv has {uv.n} vertices, template has {template.n_vertices}")
    res = doc.get("resolution")
    if res is not None and int(res) != gmap.resolution:
        raise CliError(EXIT_USAGE, f"map resolution {gmap.resolution} does not match uv resolution {res}")
    bad = ~np.isfinite(gmap.data).all(axis=2) & gmap.mask
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise CliError(EXIT_IO, f"non-finite value in valid pixel (row {i}, col {j})")
    rec = backward_sample(gmap, uv)
    out = _out_dir(args)
    save_obj(template, out / "out.obj", vertices=rec)
    err = np.linalg.norm(rec - template.vertices, axis=1)
    diag = float(np.linalg.norm(np.ptp(template.vertices, axis=0)))
    stats = {"mean": float(err.mean()), "max": float(err.max()),
             "relative_mean": float(err.mean() / diag) if diag > 0 else 0.0}
    _emit(_report({"mesh": str(out / "out.obj"), "roundtrip": stats}, "sample-back", args), args)
    return EXIT_OK


def _load_batch(paths, kind):
    """OBJ files give (3, n) vertex arrays; GMAP files give (3, H, W) maps."""
    arrays, masks = [], []
    for p in paths:
        if str(p).lower().endswith(".obj"):
            arrays.append(_load_mesh(p).vertices.T)
            masks.append(None)
        else:
            g = read_gmap(p)
            arrays.append(np.moveaxis(g.data, 2, 0))
            masks.append(g.mask)
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise CliError(EXIT_USAGE, f"{kind} files have differing shapes: {sorted(shapes)}")
    return np.stack(arrays), masks


def _targets(entry, field):
    if "targets" in entry:
        return np.asarray(entry["targets"], dtype=np.float64)
    try:
        return np.stack([L.encode_label(int(d["expression"]), int(d["gender"]),
                                        float(d["age_years"])).packed for d in entry["labels"]])
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(EXIT_USAGE, f"labels field '{field}': {exc}") from None


def cmd_losses_eval(args) -> int:
    labels = _read_json(args.labels) if args.labels else {}
    if args.weights:
        try:
            weights = L.LossWeights(**_read_json(args.weights))
        except (TypeError, ValueError) as exc:
            raise CliError(EXIT_USAGE, f"weights: {exc}") from None
    else:
        weights = L.LossWeights()
    parts = L.LossParts()
    notes = []
    try:
        if args.x and args.x_cycled:
            a, _ = _load_batch(args.x, "x")
            b, _ = _load_batch(args.x_cycled, "x_cycled")
            parts.cyc = L.cycle_loss(a, b)
        if args.x and args.x_same:
            a, _ = _load_batch(args.x, "x")
            b, _ = _load_batch(args.x_same, "x_same")
            parts.rec = L.reconstruction_loss(a, b)
        if args.maps:
            y, masks = _load_batch(args.maps, "maps")
            if y.ndim != 4:
                raise CliError(EXIT_USAGE, "symmetry term needs GMAP inputs")
            mask = np.logical_and.reduce(masks)
            flags = labels.get("asymmetric", [False] * len(y))
            parts.sym, info = L.symmetry_loss(y, mask, flags, return_info=True)
            if info["excluded_all"]:
                notes.append("symmetry: every sample flagged asymmetric, term set to 0")
            elif info["n_excluded"]:
                notes.append(f"symmetry: {info['n_excluded']} asymmetric sample(s) excluded")
        adv_detail = None
        if "d_real" in labels:
            adv_detail = L.adversarial_terms(labels["d_real"], labels["d_fake"], labels["grad_norms"],
                                             weights.alpha, weights.lambda_gp)
            parts.adv = adv_detail["adv"]
            parts.adv_g = adv_detail["g_loss_part"]
        cls_detail = {}
        for key, c_attr, m_attr in (("cls_real", "cls_real_c", "cls_real_m"),
                                    ("cls_fake", "cls_fake_c", "cls_fake_m")):
            if key in labels:
                t = L.classification_terms(labels[key]["scores"], _targets(labels[key], key))
                setattr(parts, c_attr, t["expression"] + t["gender"])
                setattr(parts, m_attr, t["age"])
                cls_detail[key] = t
        totals = L.total_losses(parts, weights)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    report = _report({"parts": {k: v for k, v in vars(parts).items() if v is not None},
                      "totals": totals, "weights": weights.to_dict(),
                      "weights_source": args.weights or "defaults",
                      "adversarial": adv_detail or {}, "classification": cls_detail,
                      "notes": notes}, "losses-eval", args)
    if args.out_dir:
        dump_json(_jsonable(report), _out_dir(args) / "losses.json")
    _emit(report, args)
    return EXIT_OK


def cmd_check(args) -> int:
    mesh = _load_mesh(args.mesh)
    rep = validate_topology(mesh)
    d = rep.to_dict()
    d.pop("boundary_vertices", None)
    ok = rep.is_manifold and rep.is_oriented
    _emit(_report({"status": "ok" if ok else "non_manifold" if not rep.is_manifold else "non_oriented",
                   "topology": d}, "check", args), args)
    return EXIT_OK if ok else EXIT_QUALITY


def cmd_trace(args) -> int:
    g = trace_generator()
    d = trace_discriminator()
    report = _report({"generator": g.to_dict(), "discriminator": d.to_dict(),
                      "pyramid_length": pyramid_length(d)}, "trace", args)
    text = "\n\n".join([g.format_table("generator"), d.format_table("discriminator"),
                        f"pyramid branch length: {pyramid_length(d)}"])
    _emit(report, args, text)
    return EXIT_OK


def cmd_metrics(args) -> int:
    a = _load_mesh(args.generated)
    b = _load_mesh(args.reference)
    if args.method == "procrustes":
        if a.n_vertices != b.n_vertices:
            raise CliError(EXIT_USAGE, "procrustes needs meshes with equal vertex counts; use --method icp")
        al = procrustes_align(a.vertices, b.vertices)
    else:
        al = icp_align(a.vertices, b.vertices, max_iter=args.max_iters)
    moved = al.apply(a.vertices)
    report = {"method": al.method, "rms_before": al.rms_before, "rms_after": al.rms_after}
    if a.n_vertices == b.n_vertices and np.array_equal(a.triangles, b.triangles):
        nm, skipped = mse_n(vertex_normals(a, moved), vertex_normals(b), return_skipped=True)
        report.update(mse_v_mm=mse_v(moved, b.vertices), mse_n_deg=nm, normals_skipped=skipped)
    else:
        report.update(mse_v_mm=None, mse_n_deg=None, note="meshes differ in topology; per-vertex metrics skipped")
    _emit(_report(report, "metrics", args), args)
    return EXIT_OK


def cmd_augment(args) -> int:
    mesh = _load_mesh(args.mesh)
    aug = L.sample_augmentation(args.seed)
    out = _out_dir(args)
    save_obj(mesh, out / "augmented.obj", vertices=L.apply_augmentation(mesh.vertices, aug))
    _emit(_report({"seed": args.seed, "scale": aug["scale"], "euler_deg": aug["euler"],
                   "mesh": str(out / "augmented.obj")}, "augment", args), args)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "text"), default=None,
                        help="report format (default json; text for trace)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=None, help="output directory (default: current)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gmapkit", description="Symmetric geometric maps for face meshes.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write the synthetic face mesh and its key-vertex spec")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("build-map", parents=[common], help="harmonic init, deformation and raster table")
    s.add_argument("mesh")
    s.add_argument("spec")
    s.add_argument("--resolution", type=_resolution, default=128)
    s.add_argument("--max-iters", type=int, default=200)
    s.add_argument("--threshold", type=_positive_float, default=1e-5)
    s.set_defaults(func=cmd_build_map)

    s = sub.add_parser("rasterize", parents=[common], help="mesh + raster table -> GMAP and PNG")
    s.add_argument("mesh")
    s.add_argument("table")
    s.set_defaults(func=cmd_rasterize)

    s = sub.add_parser("sample-back", parents=[common], help="GMAP + uv -> reconstructed mesh")
    s.add_argument("map")
    s.add_argument("uv")
    s.add_argument("template")
    s.set_defaults(func=cmd_sample_back)

    s = sub.add_parser("losses-eval", parents=[common], help="evaluate loss terms over files")
    s.add_argument("--x", nargs="+", help="source shapes or maps (OBJ or GMAP)")
    s.add_argument("--x-cycled", nargs="+")
    s.add_argument("--x-same", nargs="+")
    s.add_argument("--maps", nargs="+", help="generated GMAPs for the symmetry term")
    s.add_argument("--labels", help="JSON with critic outputs, classifier scores and asymmetric flags")
    s.add_argument("--weights", help="JSON overriding loss weights")
    s.set_defaults(func=cmd_losses_eval)

    s = sub.add_parser("check", parents=[common], help="topology report")
    s.add_argument("mesh")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("trace", parents=[common], help="generator and critic shape traces")
    s.set_defaults(func=cmd_trace, default_format="text")

    s = sub.add_parser("metrics", parents=[common], help="align two meshes and report errors")
    s.add_argument("generated")
    s.add_argument("reference")
    s.add_argument("--method", choices=("procrustes", "icp"), default="procrustes")
    s.add_argument("--max-iters", type=int, default=50)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("augment", parents=[common], help="random scale and rotation drawn from --seed")
    s.add_argument("mesh")
    s.set_defaults(func=cmd_augment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = getattr(args, "default_format", "json")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SpecError as exc:
        print(f"error: spec field '{exc.field}': {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ObjParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
