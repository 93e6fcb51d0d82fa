"""Command-line harness: synth-corpus, train, evaluate, robustness, export-attention."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attention import attention_map, write_attention_csv
from .audio import NoiseSpec, add_noise, read_wav, write_spectrogram_csv
from .config import ExperimentConfig, load_config, save_config
from .harness import (
    STANDARD_FRONTEND,
    checkpoint_backbone_dict,
    corpus_for,
    evaluate_condition,
    load_model_checkpoint,
    standard_bins,
    test_trials_for,
    train_model,
    utterance_features,
)
from .metrics import write_scores_csv, write_trials
from .seeding import substream_seed


def _load_experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if cfg.backbone.input_bins != standard_bins():
        raise ValueError(
            f"backbone.input_bins={cfg.backbone.input_bins} does not match the "
            f"{standard_bins()}-bin front end"
        )
    return cfg


def _noise_from_args(args) -> NoiseSpec | None:
    if args.noise is None and args.snr_db is None:
        return None
    if args.noise is None or args.snr_db is None:
        raise ValueError("--noise and --snr-db must be given together")
    return NoiseSpec(args.noise, float(args.snr_db))


def _condition_tag(noise: NoiseSpec | None) -> str:
    if noise is None:
        return "clean"
    return f"{noise.distribution}_{noise.snr_db:g}db"


def cmd_synth_corpus(args) -> int:
    cfg = _load_experiment(args)
    corpus = corpus_for(cfg)
    out = Path(cfg.out_dir) / "corpus"
    corpus.save(out)
    save_config(Path(cfg.out_dir) / "config.json", cfg)
    print(f"wrote {len(corpus.utterances)} utterances to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    out = Path(cfg.out_dir)
    ckpt_dir = Path(args.checkpoint) if args.checkpoint else out / "checkpoint"
    corpus = corpus_for(cfg)
    save_config(out / "config.json", cfg)
    _, _, history = train_model(
        cfg, corpus, ckpt_dir=ckpt_dir, log_path=out / "train_log.jsonl", resume=True
    )
    final = history[-1] if history else {"epoch": None, "loss": None}
    print(f"trained to epoch {cfg.training.epochs}, checkpoint at {ckpt_dir}")
    if final["loss"] is not None:
        print(f"final epoch loss {final['loss']:.6f}")
    return 0


def _check_architecture(ckpt_dir, cfg: ExperimentConfig):
    stored = checkpoint_backbone_dict(ckpt_dir)
    wanted = cfg.backbone.to_dict()
    if stored != wanted:
        raise ValueError(
            f"checkpoint architecture mismatch: checkpoint has {stored}, "
            f"config wants {wanted}"
        )


def cmd_evaluate(args) -> int:
    cfg = _load_experiment(args)
    if not args.checkpoint:
        raise ValueError("evaluate requires --checkpoint")
    _check_architecture(args.checkpoint, cfg)
    model, _, _ = load_model_checkpoint(args.checkpoint)
    corpus = corpus_for(cfg)
    trials = test_trials_for(cfg, corpus)
    noise = _noise_from_args(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trials(out / "trials.txt", trials)
    eer, thr, scores = evaluate_condition(
        model, corpus, trials, noise, cfg.seed, cfg.eval_workers
    )
    tag = _condition_tag(noise)
    write_scores_csv(out / f"scores_{tag}.csv", scores)
    summary = {
        "condition": tag,
        "noise": None
        if noise is None
        else {"distribution": noise.distribution, "snr_db": noise.snr_db},
        "eer": eer,
        "threshold": thr,
        "n_target": sum(1 for t in trials if t.label == 1),
        "n_nontarget": sum(1 for t in trials if t.label == 0),
    }
    (out / f"eer_{tag}.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"{tag}: EER {100.0 * eer:.2f}% (threshold {thr:.4f})")
    return 0


def cmd_robustness(args) -> int:
    cfg = _load_experiment(args)
    checkpoints = {"baseline": args.baseline, "fefa": args.fefa}
    base_dict = checkpoint_backbone_dict(args.baseline)
    fefa_dict = checkpoint_backbone_dict(args.fefa)
    strip = lambda d: {k: v for k, v in d.items() if not k.startswith("fefa_")}
    if strip(base_dict) != strip(fefa_dict):
        raise ValueError(
            f"checkpoints are not twins: baseline {base_dict} vs fefa {fefa_dict}"
        )
    corpus = corpus_for(cfg)
    trials = test_trials_for(cfg, corpus)
    conditions: list[NoiseSpec | None] = [None]
    for dist in cfg.noise_sweep.distributions:
        for snr in cfg.noise_sweep.snrs_db:
            conditions.append(NoiseSpec(dist, snr))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eers: dict[str, dict[str, float]] = {}
    rows = []
    for name, ckpt in checkpoints.items():
        model, _, _ = load_model_checkpoint(ckpt)
        eers[name] = {}
        for noise in conditions:
            eer, _, _ = evaluate_condition(
                model, corpus, trials, noise, cfg.seed, cfg.eval_workers
            )
            tag = _condition_tag(noise)
            eers[name][tag] = eer
            dist = "clean" if noise is None else noise.distribution
            snr = "" if noise is None else f"{noise.snr_db:g}"
            rows.append((name, dist, snr, eer))
    with open(out / "robustness.csv", "w", encoding="utf-8") as f:
        f.write("model,distribution,snr_db,eer\n")
        for name, dist, snr, eer in rows:
            f.write(f"{name},{dist},{snr},{eer:.17g}\n")
    degradation = {}
    for name in checkpoints:
        degradation[name] = {}
        for dist in cfg.noise_sweep.distributions:
            tag = f"{dist}_20db"
            if tag in eers[name]:
                degradation[name][dist] = eers[name][tag] - eers[name]["clean"]
    summary = {"eer": eers, "degradation_clean_to_20db": degradation}
    (out / "robustness_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for name, dist, snr, eer in rows:
        label = dist if not snr else f"{dist}@{snr}dB"
        print(f"{name} {label}: EER {100.0 * eer:.2f}%")
    return 0


def cmd_export_attention(args) -> int:
    if not args.checkpoint:
        raise ValueError("export-attention requires --checkpoint")
    model, _, _ = load_model_checkpoint(args.checkpoint)
    if model.fefa_input is None:
        raise ValueError("checkpoint model has no attention layer to export")
    w = read_wav(args.wav)
    noise = _noise_from_args(args)
    seed = args.seed if args.seed is not None else 0
    if noise is not None:
        w = add_noise(w, noise, substream_seed(seed, "noise", "export"))
    feats = utterance_features(w)
    p, m = attention_map(feats, model.fefa_input)
    out = Path(args.out) if args.out else Path(".")
    tag = _condition_tag(noise)
    write_attention_csv(
        out / f"attention_{tag}.csv", p, m, w.sample_rate, STANDARD_FRONTEND.nfft
    )
    write_spectrogram_csv(out / f"spectrogram_{tag}.csv", feats)
    print(f"wrote attention_{tag}.csv and spectrogram_{tag}.csv to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqattn",
        description="Speaker-recognition experiments with per-frequency-bin "
        "early attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")

    p = sub.add_parser("synth-corpus", help="write the synthetic WAV corpus")
    common(p)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("train", help="train a model per the config")
    common(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score verification trials and report EER")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--noise", choices=["gaussian", "uniform"], default=None)
    p.add_argument("--snr-db", type=float, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("robustness", help="compare two checkpoints across noise")
    common(p)
    p.add_argument("--baseline", required=True, help="baseline checkpoint directory")
    p.add_argument("--fefa", required=True, help="attention checkpoint directory")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("export-attention", help="dump attention and spectrogram CSVs")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--wav", required=True, help="input WAV file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--noise", choices=["gaussian", "uniform"], default=None)
    p.add_argument("--snr-db", type=float, default=None)
    p.set_defaults(func=cmd_export_attention)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
