"""Command-line entry point: train the three subsystems, evaluate, think, serve.

Exit codes: 0 success, 1 configuration error, 2 missing dependency or
environment problem (absent checkpoint, unreadable data, occupied port),
3 internal invariant violation.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click
import numpy as np

from . import checkpoint as ck
from .config import RunConfig, load_config, snapshot
from .curriculum import DigitPool, load_idx, make_episode, synth_pool, vision_training_images, write_cache
from .errors import (
    CodecError,
    ConfigError,
    ConsistencyError,
    ContractError,
    FormatError,
    GrammarError,
    LoopError,
    ShapeError,
)
from .language import (
    IpsModel,
    alphabet_table,
    all_sentences,
    exact_parse_rate,
    quantity_oracle,
    train_ips,
)
from .pfc import (
    ModelBundle,
    PfcModel,
    Stage,
    default_stages,
    evaluate_syntax,
    train_stage,
)
from .render import ascii_frame, tile_grid, write_pgm
from .seeding import child_seeds, make_rng
from .thinking import bundled_script_path, load_script, new_session, issue_command, run_script
from .vision import VisionModel, reconstruction_mse, train_autoencoder

EXIT_CONFIG = 1
EXIT_DEPENDENCY = 2
EXIT_INTERNAL = 3


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config_from(ctx_params) -> RunConfig:
    overrides = {}
    if ctx_params.get("seed") is not None:
        overrides["seed"] = ctx_params["seed"]
    if ctx_params.get("out") is not None:
        overrides["out_dir"] = ctx_params["out"]
    return load_config(ctx_params.get("config"), overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliFailure(EXIT_DEPENDENCY, f"cannot create output directory {out}: {exc}")
    return out


def _write_snapshot(cfg: RunConfig, out: Path):
    snapshot(cfg, out / "config.resolved.toml")


def _load_pool(cfg: RunConfig) -> DigitPool:
    if cfg.idx_images is not None:
        return load_idx(cfg.idx_images, cfg.idx_labels)
    return synth_pool(cfg.pool_size, seed=child_seeds(cfg.seed, 8)[0])


def _write_csv(path: Path, rows: list[dict]):
    if not rows:
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


def _save_single(kind: str, model, path: Path, meta: dict):
    comp = ck.Component(model.arch(), {k: v.data for k, v in model.named_params().items()})
    ck.save(ck.Checkpoint(meta=meta, components={kind: comp}), path)


def _load_single(kind: str, cls, path: Path):
    if not Path(path).exists():
        raise CliFailure(EXIT_DEPENDENCY, f"missing {kind} checkpoint: {path}")
    ckpt = ck.load(path)
    if kind not in ckpt.components:
        raise CliFailure(EXIT_DEPENDENCY, f"{path} holds no {kind} component")
    comp = ckpt.components[kind]
    return cls.from_component(comp.arch, comp.params)


def _load_bundle(path: Path) -> tuple[ModelBundle, dict]:
    if not Path(path).exists():
        raise CliFailure(EXIT_DEPENDENCY, f"missing checkpoint: {path}")
    bundle, meta = ModelBundle.load(path)
    return bundle, meta


common_options = [
    click.option("--config", type=click.Path(), default=None, help="TOML config file."),
    click.option("--seed", type=int, default=None, help="Master seed override."),
    click.option("--out", type=click.Path(), default=None, help="Output directory override."),
]


def _with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group()
def main_group():
    """Language-guided imagery: training, evaluation and thinking sessions."""


@main_group.command("train-vision")
@_with_common
@click.option("--steps", type=int, default=None, help="Training step override.")
def cmd_train_vision(config, seed, out, steps):
    cfg = _config_from(locals())
    if steps is not None:
        cfg.vision_steps = steps
    out_dir = _out_dir(cfg)
    _write_snapshot(cfg, out_dir)
    seeds = child_seeds(cfg.seed, 8)
    pool = _load_pool(cfg)
    images = vision_training_images(pool, cfg.vision_images, make_rng(seeds[1]))
    rows = []
    model, _ = train_autoencoder(
        images, steps=cfg.vision_steps, batch=cfg.vision_batch, lr=cfg.lr,
        widths=tuple(cfg.vision_widths), v3=cfg.v3, v4=cfg.v4, seed=seeds[2],
        log=lambda r: (rows.append(r), click.echo(f"step {r['step']:>6}  loss {r['loss']:.5f}")))
    mse = reconstruction_mse(model, images[:2000])
    click.echo(f"final reconstruction mse {mse:.5f}")
    _save_single("vision", model, out_dir / "vision.lgi",
                 {"stage": "vision", "step": cfg.vision_steps, "seed": cfg.seed, "mse": mse})
    _write_csv(out_dir / "vision_metrics.csv", rows)
    sample = images[:8]
    v3b, _ = model.encode_batch(sample)
    recon = model.decode_batch(v3b)
    write_pgm(tile_grid(list(sample) + list(recon), cols=8), out_dir / "vision_recon.pgm")
    click.echo(f"wrote {out_dir / 'vision.lgi'}")


@main_group.command("train-ips")
@_with_common
@click.option("--steps", type=int, default=None, help="Training step override.")
def cmd_train_ips(config, seed, out, steps):
    cfg = _config_from(locals())
    if steps is not None:
        cfg.ips_steps = steps
    out_dir = _out_dir(cfg)
    _write_snapshot(cfg, out_dir)
    seeds = child_seeds(cfg.seed, 8)
    pairs = [(s, quantity_oracle(s)) for s in all_sentences()]
    rows = []
    model, _ = train_ips(pairs, steps=cfg.ips_steps, batch=cfg.ips_batch, lr=cfg.lr,
                         hidden=cfg.ips_hidden, seed=seeds[3],
                         log=lambda r: (rows.append(r),
                                        click.echo(f"step {r['step']:>6}  loss {r['loss']:.7f}")))
    rate = exact_parse_rate(model, pairs)
    click.echo(f"exact parse rate over the full grammar: {rate:.4f}")
    _save_single("ips", model, out_dir / "ips.lgi",
                 {"stage": "ips", "step": cfg.ips_steps, "seed": cfg.seed, "exact": rate})
    _write_csv(out_dir / "ips_metrics.csv", rows)
    click.echo(f"wrote {out_dir / 'ips.lgi'}")


def _stages_from(cfg: RunConfig) -> list[Stage]:
    if cfg.stages is None:
        return default_stages(scale=cfg.stage_scale, replay=cfg.replay)
    return [Stage(name=s.name, syntaxes=tuple(s.syntaxes), steps=s.steps,
                  replay=s.replay, criterion=s.criterion) for s in cfg.stages]


@main_group.command("train-pfc")
@_with_common
@click.option("--stage", "only_stage", type=str, default=None,
              help="Train only this named stage, continuing from model.lgi if present.")
@click.option("--steps", type=int, default=None, help="Step override applied to every stage.")
def cmd_train_pfc(config, seed, out, only_stage, steps):
    cfg = _config_from(locals())
    out_dir = _out_dir(cfg)
    _write_snapshot(cfg, out_dir)
    seeds = child_seeds(cfg.seed, 16)
    vision = _load_single("vision", VisionModel, out_dir / "vision.lgi")
    ips = _load_single("ips", IpsModel, out_dir / "ips.lgi")
    if vision.v3_dim != cfg.v3 or vision.v4_dim != cfg.v4:
        raise CliFailure(EXIT_DEPENDENCY,
                         f"vision checkpoint dims ({vision.v3_dim},{vision.v4_dim}) "
                         f"do not match config ({cfg.v3},{cfg.v4})")
    pool = _load_pool(cfg)
    stages = _stages_from(cfg)
    if steps is not None:
        for st in stages:
            st.steps = steps

    model = None
    trained: list[str] = []
    if only_stage is not None:
        if (out_dir / "model.lgi").exists():
            bundle, meta = _load_bundle(out_dir / "model.lgi")
            model = bundle.pfc
            trained = list(meta.get("stages_done", []))
        stages = [s for s in stages if s.name == only_stage]
        if not stages:
            raise CliFailure(EXIT_CONFIG, f"no stage named {only_stage!r}")
    if model is None:
        model = PfcModel.new(make_rng(seeds[4]), v3_dim=cfg.v3, v4_dim=cfg.v4,
                             hidden=cfg.pfc_hidden)

    from .optim import Adam

    opt = Adam(list(model.named_params().values()), lr=cfg.lr,
               beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    all_rows = []
    replay_from: tuple[int, ...] = ()
    curriculum_order = _stages_from(cfg)
    for i, stage in enumerate(stages):
        earlier = []
        for st in curriculum_order:
            if st.name == stage.name:
                break
            earlier.extend(st.syntaxes)
        replay_from = tuple(earlier)
        stage_rng = make_rng(seeds[5] + i)
        result = train_stage(model, vision, ips, stage, pool, stage_rng,
                             batch=cfg.pfc_batch, opt=opt, replay_syntaxes=replay_from,
                             log=lambda r: (all_rows.append(r),
                                            click.echo(f"[{r['stage']}] step {r['step']:>6}  loss {r['loss']:.5f}")))
        trained.append(stage.name)
        meta = {"stage": stage.name, "step": result.steps_run, "seed": cfg.seed,
                "stages_done": trained,
                "steps_to_criterion": result.steps_to_criterion}
        bundle = ModelBundle(vision=vision, ips=ips, pfc=model)
        bundle.save(out_dir / f"pfc_{len(trained):02d}_{stage.name}.lgi", meta=meta)
        bundle.save(out_dir / "model.lgi", meta=meta)
    _write_csv(out_dir / "pfc_metrics.csv", all_rows)
    click.echo(f"wrote {out_dir / 'model.lgi'}")


@main_group.command("eval")
@_with_common
@click.option("--checkpoint", type=click.Path(), default=None, help="Bundle to evaluate.")
@click.option("--syntax", type=int, default=None, help="Restrict to one syntax id.")
def cmd_eval(config, seed, out, checkpoint, syntax):
    cfg = _config_from(locals())
    out_dir = _out_dir(cfg)
    bundle, meta = _load_bundle(Path(checkpoint) if checkpoint else out_dir / "model.lgi")
    if bundle.pfc is None:
        raise CliFailure(EXIT_DEPENDENCY, "checkpoint has no trained working-memory model")
    if bundle.vision.v3_dim != cfg.v3 or bundle.vision.v4_dim != cfg.v4:
        raise CliFailure(EXIT_DEPENDENCY, "checkpoint dims do not match config")
    pool = _load_pool(cfg)
    rng = make_rng(child_seeds(cfg.seed, 16)[6])
    ids = [syntax] if syntax else list(range(1, 9))
    rows = []
    for sid in ids:
        m = evaluate_syntax(bundle.pfc, bundle.vision, bundle.ips, sid,
                            cfg.eval_episodes, pool, rng, known_syntaxes=ids)
        rows.append(m)
        parts = [f"syntax {sid}", f"completion {m['completion_acc']:.3f}"]
        if "answer_acc" in m:
            parts.append(f"answer {m['answer_acc']:.3f}")
        else:
            parts.append(f"image mse {m['image_mse']:.4f} corr {m['image_corr']:.3f}")
        click.echo("  ".join(parts))
    _write_csv(out_dir / "eval.csv", rows)
    click.echo(f"wrote {out_dir / 'eval.csv'}")


@main_group.command("think")
@_with_common
@click.option("--checkpoint", type=click.Path(), default=None, help="Bundle to drive.")
@click.option("--script", "script_file", type=click.Path(), default=None,
              help="Command script; omit for interactive mode, 'fig7' for the bundled session.")
@click.option("--mode", type=click.Choice(["full", "shortcut"]), default="full")
def cmd_think(config, seed, out, checkpoint, script_file, mode):
    cfg = _config_from(locals())
    out_dir = _out_dir(cfg)
    bundle, _ = _load_bundle(Path(checkpoint) if checkpoint else out_dir / "model.lgi")
    if bundle.pfc is None:
        raise CliFailure(EXIT_DEPENDENCY, "checkpoint has no trained working-memory model")

    if script_file is not None:
        path = bundled_script_path() if script_file == "fig7" else Path(script_file)
        if not path.exists():
            raise CliFailure(EXIT_DEPENDENCY, f"script not found: {path}")
        commands = load_script(path)
        good = []
        for line in commands:
            try:
                from .language import binarize

                if line != "close eyes.":
                    binarize(line)
                good.append(line)
            except CodecError as exc:
                click.echo(f"skipping malformed line {line!r}: {exc}", err=True)
        records = run_script(bundle, good, mode=mode, seed=cfg.seed,
                             out_dir=out_dir / "transcript",
                             on_step=lambda rec, res: click.echo(
                                 f"[{rec['step']}] {rec['command']!r} -> {rec['completion']!r}"))
        click.echo(f"wrote {len(records)} transcript records to {out_dir / 'transcript'}")
        return

    session = new_session(bundle, mode=mode, seed=cfg.seed)
    click.echo("interactive session; blank line or ctrl-d to leave")
    while True:
        try:
            line = input("> ")
        except EOFError:
            break
        if not line.strip():
            break
        try:
            result = issue_command(session, line)
        except (CodecError, GrammarError) as exc:
            click.echo(f"rejected: {exc}")
            continue
        click.echo(ascii_frame(result.image_after))
        if result.completion:
            click.echo(f"completion: {result.completion!r}")


@main_group.command("gen-data")
@_with_common
@click.option("--syntax", type=int, default=None, help="Single syntax id (default: all eight).")
@click.option("--count", type=int, default=100, show_default=True, help="Episodes per syntax.")
def cmd_gen_data(config, seed, out, syntax, count):
    cfg = _config_from(locals())
    out_dir = _out_dir(cfg)
    _write_snapshot(cfg, out_dir)
    pool = _load_pool(cfg)
    ids = [syntax] if syntax else list(range(1, 9))
    for sid in ids:
        rng = make_rng(child_seeds(cfg.seed, 32)[8 + sid])
        episodes = [make_episode(sid, pool, rng) for _ in range(count)]
        path = out_dir / f"episodes_s{sid}.lgie"
        write_cache(episodes, path)
        click.echo(f"wrote {count} episodes to {path}")


@main_group.command("serve")
@_with_common
@click.option("--checkpoint", type=click.Path(), default=None, help="Bundle to serve.")
def cmd_serve(config, seed, out, checkpoint):
    cfg = _config_from(locals())
    out_dir = _out_dir(cfg)
    path = Path(checkpoint) if checkpoint else out_dir / "model.lgi"
    if not path.exists():
        raise CliFailure(EXIT_DEPENDENCY, f"missing checkpoint: {path}")
    from .gateway import create_app

    app = create_app(bundle_path=path, session_ttl=cfg.session_ttl)
    import uvicorn

    try:
        uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    except (OSError, SystemExit) as exc:
        raise CliFailure(EXIT_DEPENDENCY, f"cannot bind {cfg.host}:{cfg.port}: {exc}")


@main_group.command("alphabet")
def cmd_alphabet():
    """Print the symbol alphabet and its byte codes."""
    for name, byte, bits in alphabet_table():
        click.echo(f"{name:>5}  0x{byte:02x}  {bits}")


def main(argv=None) -> int:
    try:
        main_group.main(args=argv, standalone_mode=False)
        return 0
    except CliFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except (FormatError, ConsistencyError, FileNotFoundError) as exc:
        click.echo(f"dependency error: {exc}", err=True)
        return EXIT_DEPENDENCY
    except (ShapeError, ContractError) as exc:
        click.echo(f"internal error: {exc}", err=True)
        return EXIT_INTERNAL
    except LoopError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INTERNAL
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
