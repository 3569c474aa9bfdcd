"""Command-line front end.

Stage commands (synth-data .. evaluate) operate on directories so a full
pipeline can be driven by hand; ``run-experiment`` does the same sweep in
one process from a YAML config.  ``--seed`` is always the *master* seed:
per-stage stream seeds are derived from it exactly as the harness does, so
a staged run reproduces the corresponding harness cell.

Failures print a one-line JSON error record to stderr and exit nonzero.
"""

import argparse
import dataclasses
import json
import sys

from .checkpoint import load_classifier, load_gan, save_classifier, save_gan
from .classifier import ClsHyper, evaluate, save_report, train_classifier
from .config import load_config
from .data import SynthSpec, load_dataset, make_split, sample_episode, save_dataset, synth_dataset
from .errors import HallucError
from .harness import load_record, run_experiment, stream_seeds, summarize, summary_csv, write_summary
from .plots import write_report
from .seeding import derive_seed
from .selection import (
    AugmentedDataset,
    build_augmented,
    build_pool,
    dump_pool,
    load_augmented,
    load_pool,
    save_augmented,
    select_top_m,
)
from .tcgan import GanHyper, finetune_novel, pretrain_base


def _episode_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-fraction", type=float, default=0.8)
    p.add_argument("--split-seed", type=int, default=None,
                   help="fixed split seed (default: derived from --seed)")
    p.add_argument("--n-shot", type=int, default=1)
    p.add_argument("--query-per-class", type=int, default=15)


def _gan_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps-pretrain", type=int, default=GanHyper.steps_pretrain)
    p.add_argument("--steps-finetune", type=int, default=GanHyper.steps_finetune)
    p.add_argument("--batch-size", type=int, default=GanHyper.batch_size)
    p.add_argument("--lr", type=float, default=GanHyper.lr_g)
    p.add_argument("--class-weight", type=float, default=GanHyper.class_weight)
    p.add_argument("--d-z", type=int, default=GanHyper.d_z)


def _gan_hyper(args) -> GanHyper:
    return GanHyper(
        d_z=args.d_z,
        lr_g=args.lr,
        lr_d=args.lr,
        batch_size=args.batch_size,
        steps_pretrain=args.steps_pretrain,
        steps_finetune=args.steps_finetune,
        class_weight=args.class_weight,
        seed=derive_seed(args.seed, "gan"),
    )


def _split_for(args, dataset):
    split_seed = args.split_seed if args.split_seed is not None else derive_seed(args.seed, "split")
    return make_split(dataset, args.base_fraction, split_seed)


def _episode_for(args, dataset, split):
    return sample_episode(
        dataset, split, args.n_shot, args.query_per_class,
        stream_seeds(args.seed, args.n_shot)["episode"],
    )


def cmd_synth_data(args) -> int:
    spec = SynthSpec(
        num_classes=args.num_classes,
        samples_per_class=args.samples_per_class,
        image_shape=(args.image_size, args.image_size, 3),
        embed_dim=args.embed_dim,
        noise_level=args.noise_level,
        seed=args.seed,
    )
    dataset = synth_dataset(spec)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset.labels)} samples ({args.num_classes} classes) to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    dataset = load_dataset(args.data)
    split = _split_for(args, dataset)
    model = pretrain_base(dataset, split, _gan_hyper(args))
    save_gan(model, args.out)
    print(f"pretrained on base classes {sorted(split.base_classes)} -> {args.out}")
    return 0


def cmd_finetune(args) -> int:
    dataset = load_dataset(args.data)
    split = _split_for(args, dataset)
    episode = _episode_for(args, dataset, split)
    model = load_gan(args.ckpt)
    tuned = finetune_novel(model, episode, _gan_hyper(args))
    save_gan(tuned, args.out)
    print(f"finetuned on {args.n_shot}-shot support of classes {list(tuned.class_ids)} -> {args.out}")
    return 0


def cmd_generate(args) -> int:
    dataset = load_dataset(args.data)
    split = _split_for(args, dataset)
    episode = _episode_for(args, dataset, split)
    model = load_gan(args.ckpt)
    pool = build_pool(
        model, episode, args.pool_size,
        stream_seeds(args.seed, args.n_shot)["pool"],
        rule=args.scoring_rule,
    )
    dump_pool(pool, args.out)
    n = sum(len(v) for v in pool.per_class.values())
    print(f"generated {n} candidates ({args.pool_size} per class) -> {args.out}")
    return 0


def cmd_select(args) -> int:
    dataset = load_dataset(args.data)
    split = _split_for(args, dataset)
    episode = _episode_for(args, dataset, split)
    pool = load_pool(args.pool)
    selected = select_top_m(pool, args.m)
    augmented = build_augmented(episode, selected)
    save_augmented(augmented, args.out)
    kept = sum(len(v) for v in selected.values())
    print(f"kept top {args.m} per class ({kept} hallucinations) -> {args.out}")
    return 0


def cmd_train_classifier(args) -> int:
    if args.augmented is not None:
        data = load_augmented(args.augmented)
    else:
        dataset = load_dataset(args.data)
        split = _split_for(args, dataset)
        episode = _episode_for(args, dataset, split)
        data = AugmentedDataset(real=list(episode.support), hallucinated=[])
    hyper = ClsHyper(
        lr=args.lr,
        steps=args.steps,
        batch_size=args.batch_size,
        seed=stream_seeds(args.seed, args.n_shot)["classifier"],
        halluc_weight=args.halluc_weight,
    )
    model = train_classifier(data, hyper)
    save_classifier(model.net, model.class_ids, args.out)
    print(f"trained classifier over classes {list(model.class_ids)} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    dataset = load_dataset(args.data)
    split = _split_for(args, dataset)
    episode = _episode_for(args, dataset, split)
    net, class_ids = load_classifier(args.classifier)
    from .classifier import ClassifierModel

    model = ClassifierModel(net=net, class_ids=class_ids, history={})
    report = evaluate(
        model, episode.query,
        n_shot=args.n_shot, m=args.m, seed=args.seed, arm=args.arm,
    )
    save_report(report, args.out)
    print(f"top1={report.top1_accuracy:.4f} over {int(report.confusion_matrix.sum())} queries -> {args.out}")
    return 0


def cmd_run_experiment(args) -> int:
    config = load_config(args.config)
    record = run_experiment(config, args.out, resume=not args.no_resume, verbose=True)
    sys.stdout.write(summary_csv(summarize(record)))
    return 0


def cmd_summarize(args) -> int:
    record = load_record(args.run)
    out = args.out or f"{args.run.rstrip('/')}/summary.csv"
    rows = write_summary(record, out)
    sys.stdout.write(summary_csv(rows))
    return 0


def cmd_plot(args) -> int:
    record = load_record(args.run)
    path = write_report(record, args.out or args.run)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halluc", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--samples-per-class", type=int, default=50)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--noise-level", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("pretrain", help="adversarial pretraining on base classes")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _episode_args(p)
    _gan_args(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="finetune on the n-shot support set")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="pretrained checkpoint directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _episode_args(p)
    _gan_args(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("generate", help="hallucinate and score a candidate pool")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="finetuned checkpoint directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool-size", type=int, default=256)
    p.add_argument("--scoring-rule", choices=("class-only", "realism-gated"), default="class-only")
    _episode_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("select", help="keep the top-m candidates per class")
    p.add_argument("--data", required=True)
    p.add_argument("--pool", required=True, help="candidate pool directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, required=True)
    _episode_args(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train-classifier", help="train the evaluation CNN")
    p.add_argument("--augmented", default=None, help="augmented dataset directory")
    p.add_argument("--data", default=None, help="dataset directory (real-only arm)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=ClsHyper.steps)
    p.add_argument("--lr", type=float, default=ClsHyper.lr)
    p.add_argument("--batch-size", type=int, default=ClsHyper.batch_size)
    p.add_argument("--halluc-weight", type=float, default=ClsHyper.halluc_weight)
    _episode_args(p)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("evaluate", help="evaluate a classifier on the episode queries")
    p.add_argument("--data", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--arm", choices=("real-only", "augmented"), default="real-only")
    _episode_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="run the full sweep from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("summarize", help="aggregate a run directory into summary.csv")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("plot", help="write report.md and figures for a run")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train-classifier" and args.augmented is None and args.data is None:
        print(json.dumps({"error": "ConfigError",
                          "message": "train-classifier needs --augmented or --data"}),
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except HallucError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
