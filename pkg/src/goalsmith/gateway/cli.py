"""Command-line entry point tying the pipeline together.

Failures exit nonzero with a machine-readable JSON error on stderr; unknown
commands or flags exit 2 (argparse usage error).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import scene
from ..scene.trajectory_io import image_to_png, png_to_image


def _err(message: str) -> None:
    sys.stderr.write(json.dumps({"error": message}) + "\n")


def _model(args):
    from ..diffusion.model import DiffusionModel
    from ..pipeline import base_checkpoint_path, sks_checkpoint_path

    if getattr(args, "checkpoint", None):
        return DiffusionModel.load(args.checkpoint)
    if getattr(args, "sks", False) and sks_checkpoint_path().exists():
        return DiffusionModel.load(sks_checkpoint_path())
    return DiffusionModel.load(base_checkpoint_path())


def cmd_train_diffusion(args) -> int:
    from ..pipeline import base_model

    model = base_model(force=args.force,
                       progress=lambda s, l: print(f"step {s}: loss {l:.4f}"))
    print(json.dumps({"checkpoint": str(args.out or "artifacts/diffusion_base.ckpt"),
                      "weights_hash": model.weights_hash()[:16]}))
    return 0


def cmd_finetune_token(args) -> int:
    from ..pipeline import sks_model

    model = sks_model(force=args.force,
                      progress=lambda s, l: print(f"step {s}: loss {l:.4f}"))
    print(json.dumps({"weights_hash": model.weights_hash()[:16]}))
    return 0


def cmd_invert(args) -> int:
    from ..inversion import InversionConfig, invert, save_inversion

    model = _model(args)
    image = png_to_image(args.image)
    cfg = InversionConfig(steps=args.steps, inner_iterations=args.inner)
    result = invert(model, image, args.prompt, cfg)
    out = Path(args.out or "inversion.ckpt")
    save_inversion(result, out)
    recon_path = out.with_suffix(".recon.png")
    image_to_png(result.reconstruction[0], recon_path)
    print(json.dumps({"inversion": str(out), "reconstruction": str(recon_path),
                      "recon_mae": float(result.recon_mae[0]),
                      "naive_mae": float(result.naive_mae[0])}))
    return 0


def cmd_edit(args) -> int:
    from ..editing import export_attention_grid, generate_goal
    from ..inversion import InversionConfig, invert
    from .config import preset

    p = preset(args.preset)
    model = _model_for_preset(args, p)
    image = png_to_image(args.image)
    cfg = InversionConfig(steps=args.steps, inner_iterations=args.inner)
    inv = invert(model, image, p["edit"].source_prompt, cfg)
    result = generate_goal(model, image, p["edit"], inv, record_attention=True)
    out = Path(args.out or "goal.png")
    image_to_png(result.images[0], out)
    grid_dir = out.parent / f"{out.stem}_attention"
    token = (p["edit"].tokens[0] if hasattr(p["edit"], "tokens") else 5)
    paths = export_attention_grid(result.target_attention, token=token,
                                  out_dir=grid_dir, prefix="target")
    print(json.dumps({"goal": str(out),
                      "attention": [str(q) for q in paths],
                      "recon_mae": float(inv.recon_mae[0])}))
    return 0


def _model_for_preset(args, p):
    from ..pipeline import sks_checkpoint_path

    if getattr(args, "checkpoint", None):
        from ..diffusion.model import DiffusionModel

        return DiffusionModel.load(args.checkpoint)
    if p.get("dreambooth") and sks_checkpoint_path().exists():
        from ..diffusion.model import DiffusionModel

        return DiffusionModel.load(sks_checkpoint_path())
    from ..pipeline import base_model

    return base_model()


def cmd_gen_goals(args) -> int:
    from ..editing import generate_goal_dataset, oracle_goal_dataset
    from ..inversion import InversionConfig
    from .config import preset

    p = preset(args.preset)
    out = Path(args.out or f"artifacts/goals_{args.preset}")
    if args.oracle:
        ds = oracle_goal_dataset(p["env_id"], args.count, out, seed_base=args.seed_base)
    else:
        model = _model_for_preset(args, p)
        cfg = InversionConfig(steps=args.steps, inner_iterations=args.inner)
        ds = generate_goal_dataset(
            model, p["env_id"], p["edit"], args.count, out,
            seed_base=args.seed_base, batch=args.batch, inversion_config=cfg,
            progress=lambda d, c: print(f"{d}/{c} goals", flush=True))
    print(json.dumps({"dataset": str(out), "count": len(ds.entries),
                      "failure_fraction": ds.failure_fraction}))
    return 0


def cmd_train_rl(args) -> int:
    from ..editing import GoalDataset
    from ..rl.train import evaluate_agent, rl_train, save_agent
    from .config import preset

    p = preset(args.preset)
    ds = GoalDataset.load(args.goals)
    from ..rl.agent import RLConfig

    cfg = RLConfig(total_steps=args.steps, seed=args.seed)
    out = Path(args.out or f"artifacts/rl_{args.preset}_s{args.seed}")
    out.mkdir(parents=True, exist_ok=True)
    result = rl_train(p["env_id"], ds, cfg, metrics_path=out / "metrics.jsonl",
                      seed=args.seed,
                      progress=lambda s, t, el: print(
                          f"{s}/{t} steps ({el/60:.1f} min)", flush=True))
    save_agent(result.agent, result.ensemble, out / "agent.ckpt")
    ev = evaluate_agent(result.agent, p["env_id"], episodes=args.eval_episodes)
    (out / "eval.json").write_text(json.dumps(ev))
    print(json.dumps({"run_dir": str(out), "eval": ev}))
    return 0


def cmd_eval_curves(args) -> int:
    from ..evalkit import Trajectory, curve_band
    from ..rl.train import load_agent

    agent, ensemble = load_agent(args.agent)
    trajectories = []
    for seed in range(args.episodes):
        frames, actions, infos, success = scene.run_scripted_episode(
            args.env, args.seed_base + seed)
        trajectories.append(Trajectory(frames, actions, infos, success))
    band = curve_band(trajectories, ensemble)
    out = Path(args.out or f"curves_{args.env}.csv")
    with open(out, "w") as fh:
        fh.write("t,mean,lo,hi\n")
        for i in range(len(band["mean"])):
            fh.write(f"{i},{band['mean'][i]},{band['lo'][i]},{band['hi'][i]}\n")
    png = out.with_suffix(".png")
    _plot_band(band, png, args.env)
    print(json.dumps({"csv": str(out), "plot": str(png), "n": band["n"]}))
    return 0


def _plot_band(band, path, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = np.arange(len(band["mean"]))
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(x, band["mean"], label="mean classifier reward")
    if band["band_defined"]:
        ax.fill_between(x, band["lo"], band["hi"], alpha=0.3, label="95% band")
    ax.set_xlabel("frame")
    ax.set_ylabel("normalized reward")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_metrics(args) -> int:
    from ..evalkit import metrics_table

    logs = {}
    for entry in args.logs:
        task, path = entry.split("=", 1)
        values = []
        for line in Path(path).read_text().splitlines():
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("kind") == "episode":
                om = rec.get("oracle_metrics", {})
                if "particles_wiped" in om:
                    values.append(om["particles_wiped"])
                elif "push_success" in om:
                    values.append(100.0 * om["push_success"])
                elif "led_success" in om:
                    values.append(100.0 * om["led_success"])
        logs.setdefault(task, []).extend(values[-args.last:] if args.last else values)
    table = metrics_table(logs)
    for task, row in table.items():
        print(f"{task}: {row['text']}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("task,mean,std,text\n")
            for task, row in table.items():
                fh.write(f"{task},{row['mean']},{row['std']},{row['text']}\n")
    return 0


def cmd_rate(args) -> int:
    from ..evalkit import rankings_to_comparisons, rating_table, read_rankings_csv

    rankings = read_rankings_csv(args.rankings)
    comparisons = rankings_to_comparisons(rankings)
    rows = rating_table(comparisons)
    out = Path(args.out or "ratings.csv")
    with open(out, "w") as fh:
        fh.write("method,rating,rd,volatility,elo_score,R_normal\n")
        for row in rows:
            fh.write(f"{row['method']},{row['rating']:.2f},{row['rd']:.2f},"
                     f"{row['volatility']:.5f},{row['score']:.1f},{row['score']:.1f}\n")
    for row in rows:
        print(f"{row['method']}: R={row['rating']:.1f} R_normal={row['score']:.1f}")
    print(json.dumps({"csv": str(out)}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .config import ProjectConfig
    from .service import GatewayState, create_app

    config = ProjectConfig.load(args.config) if args.config else None
    state = GatewayState(config=config)
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port or (config.port if config else 8800))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goalsmith")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-diffusion", help="train the base denoiser")
    p.add_argument("--force", action="store_true")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train_diffusion)

    p = sub.add_parser("finetune-token", help="feature-token fine-tune")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_finetune_token)

    p = sub.add_parser("invert", help="invert one image")
    p.add_argument("--image", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--inner", type=int, default=10)
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_invert)

    p = sub.add_parser("edit", help="edit one image into its goal")
    p.add_argument("--preset", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--inner", type=int, default=10)
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_edit)

    p = sub.add_parser("gen-goals", help="build a goal-image dataset")
    p.add_argument("--preset", required=True)
    p.add_argument("--count", type=int, default=1024)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--inner", type=int, default=10)
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--oracle", action="store_true",
                   help="render solved states instead of editing")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gen_goals)

    p = sub.add_parser("train-rl", help="example-based RL from a goal dataset")
    p.add_argument("--preset", required=True)
    p.add_argument("--goals", required=True)
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-episodes", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train_rl)

    p = sub.add_parser("eval-curves", help="reward curves on scripted successes")
    p.add_argument("--env", required=True, choices=list(scene.ENV_IDS))
    p.add_argument("--agent", required=True)
    p.add_argument("--episodes", type=int, default=5)
    p.add_argument("--seed-base", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval_curves)

    p = sub.add_parser("metrics", help="aggregate run logs into a table")
    p.add_argument("--logs", nargs="+", required=True,
                   help="entries of the form task=path/to/metrics.jsonl")
    p.add_argument("--last", type=int, default=20,
                   help="use only the last N episodes per log")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("rate", help="user-study ratings from rankings CSV")
    p.add_argument("--rankings", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_rate)

    p = sub.add_parser("serve", help="run the HTTP gateway")
    p.add_argument("--config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
