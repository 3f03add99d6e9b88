"""Command-line surface: synth, forge, train, eval, map, report.

Every command writes a frozen copy of its effective configuration next
to its outputs, all randomness flows from explicit --seed flags, and the
SCANID_OUT environment variable overrides output directories. Exit
codes: 0 success, 2 usage error, 1 runtime error.
"""

import json
import os
import sys
from dataclasses import asdict

import click

from . import classify, forge, relmap, synthscan, trainer
from .dataio import DatasetManifest, load_image, save_image
from .errors import ScanidError
from .net import checkpoint_hash, load_checkpoint, save_checkpoint


def _out_dir(path):
    path = os.environ.get("SCANID_OUT", path)
    os.makedirs(path, exist_ok=True)
    return path


def _freeze_config(out_dir, name, config):
    with open(os.path.join(out_dir, name), "w") as f:
        json.dump(config, f, indent=2, sort_keys=True)


def _apply_config_file(ctx, param, value):
    """--config JSON supplies defaults; explicit flags win."""
    if value:
        with open(value) as f:
            ctx.default_map = {**json.load(f), **(ctx.default_map or {})}
    return value


config_option = click.option(
    "--config", type=click.Path(exists=True), callback=_apply_config_file,
    is_eager=True, expose_value=False,
    help="JSON config file merged under explicit flags.")


@click.group()
def main():
    """Scanner-source attribution and forgery localization toolkit."""


@main.command()
@config_option
@click.option("--scanners", type=int, default=8, show_default=True)
@click.option("--per-scanner", type=int, default=60, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--image-size", type=int, default=192, show_default=True)
@click.option("--sigma-gain", type=float, default=0.08, show_default=True)
@click.option("--sigma-row", type=float, default=16.0, show_default=True)
@click.option("--readout-std", type=float, default=1.0, show_default=True)
@click.option("--sigma-rgb", type=float, default=0.15, show_default=True)
@click.option("--sigma-black", type=float, default=8.0, show_default=True)
@click.option("--sigma-col", type=float, default=16.0, show_default=True)
@click.option("--content-dir", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
def synth(scanners, per_scanner, seed, image_size, sigma_gain, sigma_row,
          readout_std, sigma_rgb, sigma_black, sigma_col, content_dir, out):
    """Generate a synthetic scanner dataset (images + manifest)."""
    out = _out_dir(out)
    cfg = synthscan.SynthConfig(
        num_scanners=scanners, images_per_scanner=per_scanner, seed=seed,
        image_size=image_size, sigma_gain=sigma_gain, sigma_row=sigma_row,
        readout_std=readout_std, sigma_rgb=sigma_rgb, sigma_black=sigma_black,
        sigma_col=sigma_col, content_dir=content_dir)
    manifest = synthscan.build_synthetic_dataset(cfg, out)
    _freeze_config(out, "synth_config.json",
                   {**asdict(cfg), "command": "synth"})
    click.echo(f"wrote {len(manifest.entries)} images and manifest to {out}")


def _parse_rect(text, name):
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 4:
        raise click.UsageError(f"--{name} expects row,col,height,width")
    return forge.Rect(*parts)


@main.command("forge")
@config_option
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["self_copy", "splice"]),
              default="self_copy", show_default=True)
@click.option("--donor", type=click.Path(exists=True), default=None,
              help="Donor image (required for splice).")
@click.option("--src", required=True, help="Source rect: row,col,height,width.")
@click.option("--dst", required=True, help="Destination rect: row,col,height,width.")
@click.option("--hflip", is_flag=True, default=False)
@click.option("--jpeg-quality", type=int, default=None,
              help="Recompress the whole forged image at this quality.")
@click.option("--out", required=True, type=click.Path(),
              help="Output prefix (writes .png, _mask.png, .json).")
def forge_cmd(image_path, kind, donor, src, dst, hflip, jpeg_quality, out):
    """Construct a forged image with a ground-truth mask."""
    image = load_image(image_path)
    src_rect = _parse_rect(src, "src")
    dst_rect = _parse_rect(dst, "dst")
    if kind == "splice":
        if donor is None:
            raise click.UsageError("--donor is required for splice forgeries")
        record = forge.splice_from_other(
            image, load_image(donor), src_rect, dst_rect,
            donor_id=os.path.basename(donor), jpeg_quality=jpeg_quality)
    else:
        record = forge.self_copy_move(
            image, src_rect, dst_rect, forge.Transform(hflip=hflip),
            jpeg_quality=jpeg_quality)
    out_dir = _out_dir(os.path.dirname(out) or ".")
    prefix = os.path.join(out_dir, os.path.basename(out))
    forge.save_forgery(record, prefix)
    click.echo(f"wrote {prefix}.png, {prefix}_mask.png, {prefix}.json")


@main.command()
@config_option
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--momentum", type=float, default=0.5, show_default=True)
@click.option("--weight-decay", type=float, default=0.0001, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tile-rows", type=int, default=64, show_default=True)
@click.option("--tile-cols", type=int, default=64, show_default=True)
def train(manifest_path, out, lr, momentum, weight_decay, batch_size, epochs,
          seed, tile_rows, tile_cols):
    """Train the patch classifier; writes checkpoint, curves and config."""
    out = _out_dir(out)
    manifest = DatasetManifest.load(manifest_path)
    cfg = trainer.TrainConfig(
        learning_rate=lr, momentum=momentum, weight_decay=weight_decay,
        batch_size=batch_size, epochs=epochs, seed=seed,
        tile_rows=tile_rows, tile_cols=tile_cols)
    root = os.path.dirname(os.path.abspath(manifest_path))
    cfg_dict = {**trainer.config_snapshot(cfg), "command": "train",
                "manifest": manifest_path}
    _freeze_config(out, "run_config.json", cfg_dict)

    def log(row):
        msg = (f"epoch {row['epoch']:3d}  train_loss {row['train_loss']:.4f}"
               f"  train_acc {row['train_acc']:.4f}")
        if "val_acc" in row:
            msg += f"  val_loss {row['val_loss']:.4f}  val_acc {row['val_acc']:.4f}"
        click.echo(msg)

    net, curves = trainer.train(manifest, cfg, root=root, log=log)
    ckpt = os.path.join(out, "checkpoint.scid")
    save_checkpoint(net, ckpt, manifest.label_names, cfg_dict)
    trainer.save_curves(curves, os.path.join(out, "curves.csv"))
    click.echo(f"wrote {ckpt}")


@main.command("eval")
@config_option
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True))
@click.option("--split", type=click.Choice(["train", "val", "test"]),
              default="test", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tile-rows", type=int, default=64, show_default=True)
@click.option("--tile-cols", type=int, default=64, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path())
def eval_cmd(manifest_path, ckpt_path, split, seed, tile_rows, tile_cols,
             workers, out):
    """Evaluate a checkpoint: metrics JSON plus confusion CSV/PNG."""
    out = _out_dir(out)
    manifest = DatasetManifest.load(manifest_path)
    net, label_names, _ = load_checkpoint(ckpt_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    metrics = classify.evaluate(manifest, split, net, label_names,
                                n=tile_rows, m=tile_cols, seed=seed, root=root,
                                workers=workers)
    for kind in ("patch", "image"):
        cm = metrics.pop(f"{kind}_confusion")
        cm.save_csv(os.path.join(out, f"confusion_{kind}.csv"), label_names)
        cm.render_png(os.path.join(out, f"confusion_{kind}.png"), label_names)
    metrics["checkpoint_hash"] = checkpoint_hash(ckpt_path)
    metrics["split"] = split
    _freeze_config(out, "eval_config.json", {
        "command": "eval", "manifest": manifest_path, "checkpoint": ckpt_path,
        "split": split, "seed": seed, "tile_rows": tile_rows,
        "tile_cols": tile_cols, "workers": workers,
    })
    with open(os.path.join(out, "metrics.json"), "w") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
    click.echo(f"patch_accuracy={metrics['patch_accuracy']:.4f} "
               f"image_accuracy={metrics['image_accuracy']:.4f}")


@main.command("map")
@config_option
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "ckpt_path", required=True,
              type=click.Path(exists=True))
@click.option("--strides", default="64,32,16,4", show_default=True,
              help="Comma-separated stride list.")
@click.option("--label", type=int, default=None,
              help="Compute against this label instead of the majority vote.")
@click.option("--out", required=True, type=click.Path())
def map_cmd(image_path, ckpt_path, strides, label, out):
    """Reliability maps (binary + heatmap PNG), one set per stride."""
    out = _out_dir(out)
    image = load_image(image_path)
    net, _, _ = load_checkpoint(ckpt_path)
    chash = checkpoint_hash(ckpt_path)
    stride_list = [int(s) for s in strides.split(",") if s.strip()]
    _freeze_config(out, "map_config.json", {
        "command": "map", "image": image_path, "checkpoint": ckpt_path,
        "strides": stride_list, "label": label,
    })
    for stride in stride_list:
        rmap = relmap.reliability_map(image, net, stride, label=label)
        base = os.path.join(out, f"map_stride{stride}")
        relmap.save_map(rmap, base + ".smap", chash)
        save_image(relmap.render_heatmap(rmap), base + ".png")
        click.echo(f"stride {stride}: voted label {rmap.scanner}, "
                   f"mean reliability {rmap.prob.mean():.4f}")


@main.command()
@config_option
@click.option("--run-dir", required=True, type=click.Path(exists=True),
              help="Directory holding metrics.json and/or curves.csv.")
@click.option("--out", default=None, type=click.Path(),
              help="Report path (default: <run-dir>/report.md).")
def report(run_dir, out):
    """Summarize run artifacts into a markdown report."""
    lines = ["# scanid run report", ""]
    metrics_path = os.path.join(run_dir, "metrics.json")
    if os.path.exists(metrics_path):
        with open(metrics_path) as f:
            metrics = json.load(f)
        lines += ["## Evaluation", ""]
        for key in sorted(metrics):
            lines.append(f"- {key}: {metrics[key]}")
        lines.append("")
    curves_path = os.path.join(run_dir, "curves.csv")
    if os.path.exists(curves_path):
        import csv as _csv
        with open(curves_path) as f:
            rows = list(_csv.DictReader(f))
        if rows:
            last = rows[-1]
            best_val = max((float(r["val_acc"]) for r in rows if r["val_acc"]),
                           default=None)
            lines += ["## Training", "",
                      f"- epochs: {len(rows)}",
                      f"- final train_loss: {last['train_loss']}",
                      f"- final train_acc: {last['train_acc']}"]
            if best_val is not None:
                lines.append(f"- best val_acc: {best_val}")
            lines.append("")
    if len(lines) <= 2:
        raise ScanidError(f"no metrics.json or curves.csv found in {run_dir}")
    out = out or os.path.join(run_dir, "report.md")
    with open(out, "w") as f:
        f.write("\n".join(lines))
    click.echo(f"wrote {out}")


def entrypoint():
    try:
        main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"scanid: usage error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        click.echo(f"scanid: error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except ScanidError as exc:
        click.echo(f"scanid: error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
