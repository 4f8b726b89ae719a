"""Command-line pipelines: toy data, pretraining, scoring, adaptation.

Every command takes ``--seed``, ``--out`` and an optional ``--config``
JSON file mirroring its flags; explicit flags override config values and
unknown config keys are rejected. A snapshot of the effective
configuration is always written beside the outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import adaptation, data, evaluation, model as model_mod, scores as scores_mod, svg
from .errors import CowaError, ValidationError


def _merge_config(defaults: dict, config_path, flag_values: dict) -> dict:
    merged = dict(defaults)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        merged.update(file_cfg)
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    return merged


def _snapshot(out_dir: Path, name: str, cfg: dict) -> None:
    def default(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"not JSON serializable: {type(obj)}")

    with open(out_dir / name, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


TOY_DEFAULTS = {
    "class_count": 3,
    "dim": 2,
    "per_class_count": 200,
    "covariance_scale": 1.0,
    "offset": 1.0,
    "radius": 3.0,
    "source_means": None,
    "target_mean_offset": None,
    "seed": 0,
}


def cmd_toy(args) -> None:
    out = _out_dir(args)
    cfg = _merge_config(
        TOY_DEFAULTS,
        args.config,
        {
            "class_count": args.class_count,
            "dim": args.dim,
            "per_class_count": args.per_class_count,
            "covariance_scale": args.covariance_scale,
            "offset": args.offset,
            "seed": args.seed,
        },
    )
    toy_cfg = data.ToyShiftConfig(
        class_count=cfg["class_count"],
        dim=cfg["dim"],
        source_means=None if cfg["source_means"] is None else np.asarray(cfg["source_means"]),
        target_mean_offset=(
            None if cfg["target_mean_offset"] is None else np.asarray(cfg["target_mean_offset"])
        ),
        per_class_count=cfg["per_class_count"],
        covariance_scale=cfg["covariance_scale"],
        seed=cfg["seed"],
        mean_radius_sigmas=cfg["radius"],
        offset_sigmas=cfg["offset"],
    )
    source, target = data.generate_toy(toy_cfg)
    data.save_features(source, out / "source.csv")
    data.save_features(target, out / "target.csv")
    cfg["source_means"] = toy_cfg.resolved_means()
    cfg["target_mean_offset"] = toy_cfg.resolved_offsets()
    _snapshot(out, "toy_config.json", cfg)


PRETRAIN_DEFAULTS = {
    "hidden": 32,
    "learning_rate": 0.05,
    "momentum": 0.9,
    "weight_decay": 1e-3,
    "batch_size": 64,
    "epochs": 40,
    "label_smoothing": 0.1,
    "extractor_lr": None,
    "seed": 0,
}


def cmd_pretrain(args) -> None:
    out = _out_dir(args)
    cfg = _merge_config(
        PRETRAIN_DEFAULTS,
        args.config,
        {
            "hidden": args.hidden,
            "learning_rate": args.learning_rate,
            "momentum": args.momentum,
            "weight_decay": args.weight_decay,
            "batch_size": args.batch_size,
            "epochs": args.epochs,
            "label_smoothing": args.label_smoothing,
            "seed": args.seed,
        },
    )
    source = data.load_features(args.source, domain_tag=data.SOURCE)
    if source.labels is None:
        raise ValidationError("pretraining requires a labeled source CSV")
    train_cfg = model_mod.TrainConfig(
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        label_smoothing=cfg["label_smoothing"],
        seed=cfg["seed"],
        extractor_lr=cfg["extractor_lr"],
    )
    net = model_mod.init_model(source.dim, cfg["hidden"], source.class_count, cfg["seed"])
    log = model_mod.pretrain_source(net, source, train_cfg)
    model_mod.save_model(net, out / "model.txt")
    lines = ["epoch,loss,accuracy"]
    lines += [f"{e.epoch},{e.loss:.17g},{e.accuracy:.17g}" for e in log]
    (out / "pretrain_log.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    _snapshot(out, "pretrain_config.json", cfg)


SCORE_DEFAULTS = {"em_iterations": 1, "seed": 0}


def cmd_score(args) -> None:
    out = _out_dir(args)
    cfg = _merge_config(SCORE_DEFAULTS, args.config, {"seed": args.seed})
    net = model_mod.load_model(args.model)
    # class_count inferred from the labels: open-set targets may carry an
    # extra unknown class beyond the model's output space
    target = data.load_features(args.target)
    all_scores, _, _ = evaluation.compute_all_scores(
        net, target.features, cfg["em_iterations"]
    )
    scores_mod.write_score_csv(out / "scores.csv", all_scores, target.labels)
    if target.labels is not None:
        rows = evaluation.compare_scores(net, target.features, target.labels)
        evaluation.write_comparison_csv(out / "aurc_table.csv", rows)
        series = []
        for row in rows:
            evaluation.write_curve_csv(out / f"rc_{row.score_kind}.csv", row.curve)
            series.append(
                (
                    f"{row.pseudo_labeler}+{row.score_kind} (aurc={row.aurc:.3f})",
                    row.curve.coverage,
                    row.curve.risk,
                )
            )
        chart = svg.render_line_chart(series, "risk-coverage curves", "coverage", "risk")
        (out / "rc_curves.svg").write_text(chart, encoding="utf-8")
    else:
        print("target has no labels; AURC artifacts skipped", file=sys.stderr)
    _snapshot(out, "score_config.json", cfg)


ADAPT_DEFAULTS = {
    "scenario": "closed",
    "tau": 0.3,
    "alpha": 0.2,
    "learning_rate": 0.05,
    "momentum": 0.9,
    "weight_decay": 1e-3,
    "batch_size": 64,
    "epochs": 30,
    "use_weight_mixup": None,  # resolved per scenario (off for open)
    "em_iterations": 1,
    "seed": 0,
}


def cmd_adapt(args) -> None:
    out = _out_dir(args)
    flag_values = {
        "scenario": args.scenario,
        "tau": args.tau,
        "alpha": args.alpha,
        "learning_rate": args.learning_rate,
        "momentum": args.momentum,
        "weight_decay": args.weight_decay,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "use_weight_mixup": args.use_weight_mixup,
        "seed": args.seed,
    }
    cfg = _merge_config(ADAPT_DEFAULTS, args.config, flag_values)
    if cfg["use_weight_mixup"] is None:
        cfg["use_weight_mixup"] = cfg["scenario"] != "open"
    net = model_mod.load_model(args.model)
    target = data.load_features(args.target, class_count=None)
    if target.labels is None:
        target = data.FeatureSet(
            target.features, None, data.TARGET, net.class_count
        )
    adapt_cfg = adaptation.AdaptConfig(
        scenario=cfg["scenario"],
        mixup_alpha=cfg["alpha"],
        partial_threshold=cfg["tau"],
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        weight_decay=cfg["weight_decay"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        use_weight_mixup=cfg["use_weight_mixup"],
        seed=cfg["seed"],
        em_iterations=cfg["em_iterations"],
    )
    net, states = adaptation.cowa_adapt(net, target, adapt_cfg)
    model_mod.save_model(net, out / "adapted_model.txt")
    adaptation.write_adapt_log(out / "adapt_log.csv", states)
    adaptation.write_jmds_quantiles(out / "jmds_quantiles.csv", states)
    _snapshot(out, "adapt_config.json", cfg)


EVAL_DEFAULTS = {"seed": 0}


def cmd_eval(args) -> None:
    out = _out_dir(args)
    cfg = _merge_config(EVAL_DEFAULTS, args.config, {"seed": args.seed})
    net = model_mod.load_model(args.model)
    dataset = data.load_features(args.data)
    if dataset.labels is None:
        raise ValidationError("eval requires a labeled CSV")
    _, logits = model_mod.forward(net, dataset.features)
    preds = logits.argmax(axis=1)
    overall = evaluation.accuracy(preds, dataset.labels, "overall")
    per_class = evaluation.accuracy(preds, dataset.labels, "per_class_mean")
    lines = [
        "metric,value",
        f"accuracy_overall,{overall:.17g}",
        f"accuracy_per_class_mean,{per_class:.17g}",
    ]
    (out / "eval.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"accuracy_overall={overall:.6f} accuracy_per_class_mean={per_class:.6f}")
    _snapshot(out, "eval_config.json", cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cowa",
        description="Confidence-weighted source-free domain adaptation toolkit",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed")
    common.add_argument("--config", type=str, default=None, help="JSON config file")
    common.add_argument("--out", type=str, default=".", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy", parents=[common], help="generate a shifted-Gaussian toy pair")
    p.add_argument("--class-count", type=int, dest="class_count")
    p.add_argument("--dim", type=int)
    p.add_argument("--per-class-count", type=int, dest="per_class_count")
    p.add_argument("--covariance-scale", type=float, dest="covariance_scale")
    p.add_argument("--offset", type=float, help="target shift in standard deviations")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("pretrain", parents=[common], help="train a source model")
    p.add_argument("--source", required=True, help="labeled source CSV")
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--label-smoothing", type=float, dest="label_smoothing")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("score", parents=[common], help="confidence scores and RC curves")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--target", required=True, help="target CSV (labels optional)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("adapt", parents=[common], help="adapt a model to a target CSV")
    p.add_argument("--model", required=True, help="source model checkpoint")
    p.add_argument("--target", required=True, help="target CSV")
    p.add_argument("--scenario", choices=adaptation.SCENARIOS)
    p.add_argument("--tau", type=float, help="partial-set class filter threshold")
    p.add_argument("--alpha", type=float, help="Mixup Beta parameter")
    p.add_argument("--lr", type=float, dest="learning_rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    mix = p.add_mutually_exclusive_group()
    mix.add_argument(
        "--weight-mixup", dest="use_weight_mixup", action="store_const", const=True
    )
    mix.add_argument(
        "--no-weight-mixup", dest="use_weight_mixup", action="store_const", const=False
    )
    p.set_defaults(func=cmd_adapt, use_weight_mixup=None)

    p = sub.add_parser("eval", parents=[common], help="accuracy of a checkpoint on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="labeled CSV")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CowaError, OSError, json.JSONDecodeError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
