"""``facekit`` command line: synthesis, fitting, evaluation, KD losses, toy training, audio.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import audio, distill, faceio, metrics, regressor, synthetic
from .errors import NumericalError, ValidationError
from .fitting import FitConfig, fit
from .model import RigidTransform, apply_pose, denormalize_params, synthesize
from .registration import IcpConfig

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 1, 2, 3


def _common(fn):
    """Accept ``--seed/--out/--format`` after the subcommand as well as before it."""

    @click.option("--seed", "seed_", type=int, default=None, help="Seed for every random draw.")
    @click.option("--out", "out_", type=click.Path(dir_okay=False), default=None, help="Output file.")
    @click.option("--format", "format_", type=click.Choice(["text", "structured"]), default=None)
    @click.pass_context
    @functools.wraps(fn)
    def wrapper(ctx, seed_, out_, format_, **kwargs):
        opts = ctx.ensure_object(dict)
        for key, val in (("seed", seed_), ("out", out_), ("format", format_)):
            if val is not None:
                opts[key] = val
        return fn(opts, **kwargs)

    return wrapper


def _emit(opts, text: str, doc: dict) -> None:
    if opts.get("format") == "structured":
        click.echo(json.dumps(doc, sort_keys=True))
    else:
        click.echo(text)


def _need_out(opts, what: str) -> str:
    if not opts.get("out"):
        raise click.UsageError(f"--out is required to write the {what}")
    return opts["out"]


existing = click.Path(exists=True, dir_okay=False)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "format_", type=click.Choice(["text", "structured"]), default="text", show_default=True)
@click.pass_context
def cli(ctx, seed, out, format_):
    """Morphable face models, landmark fitting, ICP metrics and KD losses."""
    ctx.obj = {"seed": seed, "out": out, "format": format_}


@cli.command()
@click.option("--kind", type=click.Choice(["model", "spec", "dataset"]), required=True)
@click.option("--model", "model_path", type=existing, help="Model file (spec and dataset kinds).")
@click.option("--n-vertices", type=int, default=500, show_default=True)
@click.option("--n-shape", type=int, default=40, show_default=True)
@click.option("--n-expr", type=int, default=10, show_default=True)
@click.option("--n-identities", type=int, default=1000, show_default=True)
@click.option("--noise-sigma", type=float, default=0.0, show_default=True)
@click.option("--hidden-map-scale", type=float, default=1.0, show_default=True)
@_common
def gen(opts, kind, model_path, n_vertices, n_shape, n_expr, n_identities, noise_sigma, hidden_map_scale):
    """Generate a synthetic model, landmark spec, or paired dataset."""
    out = _need_out(opts, kind)
    cfg = synthetic.SyntheticConfig(seed=opts["seed"], n_vertices=n_vertices, n_shape=n_shape, n_expr=n_expr,
                                    n_identities=n_identities, noise_sigma=noise_sigma,
                                    hidden_map_scale=hidden_map_scale)
    if kind == "model":
        model = synthetic.gen_model(cfg)
        faceio.save_model(out, model)
        _emit(opts, f"wrote model N={model.n_vertices} P_s={model.n_shape} P_e={model.n_expr} to {out}",
              {"kind": kind, "out": out, "n_vertices": model.n_vertices, "n_shape": model.n_shape,
               "n_expr": model.n_expr, "provenance": model.provenance})
        return
    if not model_path:
        raise click.UsageError(f"--model is required for --kind {kind}")
    model = faceio.load_model(model_path)
    if kind == "spec":
        spec = synthetic.gen_landmark_spec(model)
        faceio.save_landmark_spec(out, spec)
        _emit(opts, f"wrote landmark spec to {out}", faceio.landmark_spec_to_dict(spec))
    else:
        ds = synthetic.gen_dataset(model, cfg)
        faceio.save_dataset(out, ds)
        _emit(opts, f"wrote dataset of {len(ds)} samples to {out}",
              {"kind": kind, "out": out, "samples": len(ds)})


def _parse_pose(text: str) -> RigidTransform:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise click.BadParameter("pose must be 6 comma-separated numbers", param_hint="--pose")
    if len(vals) != 6:
        raise click.BadParameter("pose must be rx,ry,rz,tx,ty,tz", param_hint="--pose")
    rv = np.array(vals[:3])
    angle = float(np.linalg.norm(rv))
    if angle == 0:
        return RigidTransform(np.eye(3), vals[3:])
    return RigidTransform.from_axis_angle(rv, angle, vals[3:])


@cli.command()
@click.option("--model", "model_path", type=existing, required=True)
@click.option("--params", "params_path", type=existing, help="Parameter file (raw or normalized).")
@click.option("--zero", is_flag=True, help="Synthesize the mean face.")
@click.option("--pose", default=None, help="Rotation vector (radians) and translation: rx,ry,rz,tx,ty,tz.")
@_common
def synth(opts, model_path, params_path, zero, pose):
    """Synthesize a mesh from parameters and write it as OBJ."""
    if zero == bool(params_path):
        raise click.UsageError("give exactly one of --params or --zero")
    out = _need_out(opts, "mesh")
    model = faceio.load_model(model_path)
    params = model.zero_params() if zero else faceio.load_params(params_path)
    if params.normalized:
        params = denormalize_params(params, model.param_stats)
    mesh = synthesize(model, params)
    if pose:
        mesh = apply_pose(mesh, _parse_pose(pose))
    faceio.export_obj(mesh, out)
    _emit(opts, f"wrote {mesh.n_vertices} vertices to {out}", {"out": out, "n_vertices": mesh.n_vertices})


@cli.command("fit")
@click.option("--model", "model_path", type=existing, required=True)
@click.option("--spec", "spec_path", type=existing, required=True)
@click.option("--landmarks", "landmarks_paths", type=existing, required=True, multiple=True,
              help="68x3 landmark array file; repeat to rank several candidates by residual.")
@click.option("--reg", type=float, default=None, help="Shared ridge weight (overrides the per-subspace ones).")
@click.option("--shape-reg", type=float, default=1e-4, show_default=True)
@click.option("--expr-reg", type=float, default=1e-4, show_default=True)
@_common
def fit_cmd(opts, model_path, spec_path, landmarks_paths, reg, shape_reg, expr_reg):
    """Fit model parameters to 3D landmarks; the best-residual fit is written to --out."""
    model = faceio.load_model(model_path)
    spec = faceio.load_landmark_spec(spec_path)
    cfg = FitConfig(reg, reg) if reg is not None else FitConfig(shape_reg, expr_reg)
    results = [(path, fit(model, spec, faceio.load_landmarks(path), cfg)) for path in landmarks_paths]
    ranked = sorted(results, key=lambda item: item[1].residual)
    best_path, best = ranked[0]
    if opts.get("out"):
        faceio.save_params(opts["out"], best.params)
    lines = [f"residual {best.residual:.12g}", f"objective {best.objective:.12g}"]
    if len(ranked) > 1:
        lines += [f"rank {i + 1}  residual {r.residual:.12g}  {path}" for i, (path, r) in enumerate(ranked)]
    _emit(opts, "\n".join(lines),
          {"residual": best.residual, "objective": best.objective, "landmarks": best_path,
           "shape": best.params.shape.tolist(), "expr": best.params.expr.tolist(),
           "ranking": [{"landmarks": path, "residual": r.residual} for path, r in ranked]})


@cli.command("eval")
@click.option("--pred", "pred_path", type=existing, required=True, help="Predicted mesh (OBJ).")
@click.option("--ref", "ref_path", type=existing, required=True, help="Reference mesh (OBJ).")
@click.option("--spec", "spec_path", type=existing, required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
@click.option("--max-iters", type=int, default=50, show_default=True)
@_common
def eval_cmd(opts, pred_path, ref_path, spec_path, report_path, max_iters):
    """ARE, NME, holistic and per-part point-to-plane RMSE for one mesh pair."""
    pred = faceio.import_obj(pred_path)
    ref = faceio.import_obj(ref_path)
    spec = faceio.load_landmark_spec(spec_path)
    report = metrics.evaluate(pred, ref, spec, IcpConfig(max_iters=max_iters),
                              provenance={"pred": str(pred_path), "ref": str(ref_path)})
    target = report_path or opts.get("out")
    if target:
        faceio.save_report(target, report)
    a = report.are
    text = "\n".join([
        "ARE  " + "  ".join(f"{k} {a[k]:.6g}" for k in ("ER", "FR", "MR", "CR", "mean")),
        f"NME  {report.nme:.6g}",
        f"holistic_rmse  {report.holistic_rmse:.6g}",
        "part_rmse  " + "  ".join(f"{k} {v:.6g}" for k, v in report.part_rmse.items()),
    ])
    _emit(opts, text, faceio.report_to_dict(report))


@cli.command("kd-loss")
@click.option("--teacher", type=existing, required=True, help="Teacher embedding file.")
@click.option("--student", type=existing, required=True, help="Student embedding file.")
@click.option("--teacher-params", type=existing, required=True)
@click.option("--student-params", type=existing, required=True)
@click.option("--div-weight", type=float, default=1.0, show_default=True)
@click.option("--grad-out", type=click.Path(dir_okay=False), default=None, help="Write student gradients here.")
@_common
def kd_loss_cmd(opts, teacher, student, teacher_params, student_params, div_weight, grad_out):
    """Pseudo-ground-truth, divergence and total KD losses."""
    t_emb, s_emb = faceio.load_embedding(teacher), faceio.load_embedding(student)
    t_par, s_par = faceio.load_params(teacher_params), faceio.load_params(student_params)
    l_pgt, _ = distill.pseudo_gt_loss(t_par, s_par)
    l_div = distill.divergence_loss(t_emb, s_emb)
    total, g_emb, g_par = distill.kd_loss(t_emb, s_emb, t_par, s_par, div_weight)
    if grad_out:
        faceio.save_arrays(grad_out, "kd_grad", {"embedding": g_emb, "shape": g_par.shape, "expr": g_par.expr})
    _emit(opts, f"L_p-gt {l_pgt:.12g}\nL_div {l_div:.12g}\nL_KD {total:.12g}",
          {"L_p-gt": l_pgt, "L_div": l_div, "L_KD": total, "div_weight": div_weight})


@cli.command("train")
@click.option("--dataset", "dataset_path", type=existing, required=True)
@click.option("--lr", type=float, default=1e-2, show_default=True)
@click.option("--batch", type=int, default=32, show_default=True)
@click.option("--iters", type=int, default=2000, show_default=True)
@click.option("--weights-out", type=click.Path(dir_okay=False), default=None)
@_common
def train_cmd(opts, dataset_path, lr, batch, iters, weights_out):
    """Train the linear decoders on a dataset file."""
    ds = faceio.load_dataset(dataset_path)
    cfg = regressor.TrainConfig(lr=lr, batch_size=batch, iters=iters, seed=opts["seed"])
    init = regressor.DecoderWeights.init(ds.n_shape, ds.params.shape[1] - ds.n_shape, cfg.seed,
                                         ds.embeddings.shape[1])
    w, history = regressor.train(ds, cfg, init)
    target = weights_out or opts.get("out")
    if not target:
        raise click.UsageError("--weights-out (or --out) is required")
    faceio.save_weights(target, w)
    before, after = regressor.dataset_loss(ds, init), regressor.dataset_loss(ds, w)
    _emit(opts, f"initial_loss {before:.12g}\nfinal_loss {after:.12g}",
          {"initial_loss": before, "final_loss": after, "iters": iters,
           "history_first": float(history[0]) if history.size else None,
           "history_last": float(history[-1]) if history.size else None})


@cli.command()
@click.option("--weights", "weights_path", type=existing, required=True)
@click.option("--embedding", "embedding_path", type=existing, required=True,
              help="Embedding batch or dataset file; one row is used.")
@click.option("--row", type=int, default=0, show_default=True)
@click.option("--model", "model_path", type=existing, required=True)
@_common
def predict(opts, weights_path, embedding_path, row, model_path):
    """Decode one embedding into parameters and write the mesh as OBJ."""
    out = _need_out(opts, "mesh")
    w = faceio.load_weights(weights_path)
    if Path(embedding_path).read_bytes()[:1] == b"{":
        rows = faceio.load_embedding(embedding_path)
    else:
        rows = faceio.load_dataset(embedding_path).embeddings
    if not 0 <= row < rows.shape[0]:
        raise click.BadParameter(f"row {row} out of range for {rows.shape[0]} embeddings", param_hint="--row")
    model = faceio.load_model(model_path)
    params = denormalize_params(regressor.forward(rows[row], w), model.param_stats)
    mesh = synthesize(model, params)
    faceio.export_obj(mesh, out)
    _emit(opts, f"wrote {mesh.n_vertices} vertices to {out}",
          {"out": out, "shape": params.shape.tolist(), "expr": params.expr.tolist()})


@cli.command("audio")
@click.option("--in", "in_path", type=existing, required=True, help="Mono 16-bit or float32 PCM WAV.")
@click.option("--crop", default=None, help="Random crop length range in seconds, min:max.")
@click.option("--raw", is_flag=True, help="Skip per-bin normalization.")
@_common
def audio_cmd(opts, in_path, crop, raw):
    """Log-mel spectrogram with optional random crop and per-bin normalization."""
    out = _need_out(opts, "spectrogram")
    wave = audio.read_wav(in_path)
    if crop:
        try:
            lo, hi = (float(v) for v in crop.split(":"))
        except ValueError:
            raise click.BadParameter("crop must look like 3:8", param_hint="--crop")
        wave = audio.random_crop(wave, lo, hi, opts["seed"])
    spec = audio.log_mel(wave)
    if not raw:
        spec = audio.per_bin_normalize(spec)
    faceio.save_spectrogram(out, spec)
    _emit(opts, f"wrote {spec.frames.shape[0]} frames to {out}",
          {"out": out, "frames": int(spec.frames.shape[0]), "samples": int(wave.samples.size)})


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="facekit", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("error: aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except NumericalError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_NUMERICAL
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    return 0


def entry() -> None:
    sys.exit(main())
