"""Command-line entry point: ``stegokit <subcommand> ...``.

stdout carries machine-readable output only. Its first line is always the
resolved configuration as JSON. Logs and human summaries go to stderr.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import ensemble
from .datagen import (
    DatasetManifest,
    GenConfig,
    SynthSpec,
    generate_dataset,
    synth_covers,
    validate_manifest,
)
from .embedders import capacity_bits, embed, extract_message
from .errors import StegoError
from .evaluate import FeatureStore, dump_reports, p_e, run_rate_grid, run_source_mismatch
from .features import extract_many, read_feature_csv, write_feature_csv
from .imaging import read_png, to_grayscale, write_png
from .payload import AppId, SignatureTable, as_rate, build_payload
from .sigdetect import DETECTABLE_APPS, detect

log = logging.getLogger("stegokit")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, default=str) + "\n")
    sys.stdout.flush()


def _print_config(args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    _emit({"config": cfg})


def _password(args) -> bytes | None:
    return args.password.encode() if args.password is not None else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_embed(args, sigs):
    app = AppId.parse(args.app)
    cover = read_png(args.input)
    message = Path(args.msg_file).read_bytes()
    password = _password(args) or b""
    payload = build_payload(app, message, password, sigs)
    result = embed(app, cover, payload, password, args.blocks)
    write_png(args.out, result.stego)
    cap = capacity_bits(app, result.stego)
    _emit({
        "out": args.out, "app": app.value, "payload_bits": payload.len_bits,
        "capacity_bits": cap, "embedding_rate": payload.len_bits / cap,
        "change_rate": result.change_rate,
    })


def cmd_extract(args, sigs):
    app = AppId.parse(args.app)
    img = read_png(args.input)
    message = extract_message(app, img, _password(args), sigs, args.blocks, args.bits)
    if args.out:
        Path(args.out).write_bytes(message)
    _emit({"app": app.value, "message_bytes": len(message), "message_hex": message.hex(),
           "out": args.out})


def _collect_pngs(target: Path) -> list[Path]:
    if target.is_file():
        return [target]
    if not target.is_dir():
        raise FileNotFoundError(f"{target} does not exist")
    return sorted(p for p in target.rglob("*") if p.suffix.lower() == ".png")


def cmd_detect(args, sigs):
    if bool(args.all) == bool(args.app):
        raise UsageError("give exactly one of --app or --all")
    apps = DETECTABLE_APPS if args.all else (AppId.parse(args.app),)
    target = Path(args.input)
    report = open(args.report, "w", encoding="utf-8") if args.report else None
    counts = {a.value: 0 for a in apps}
    n = 0
    try:
        for path in _collect_pngs(target):
            img = read_png(path)
            n += 1
            for app in apps:
                res = detect(app, img, sigs, mobistego_blocks=args.blocks,
                             strict_pocketstego=args.strict_pocketstego)
                counts[app.value] += res.verdict
                line = {"path": str(path), **res.to_json()}
                if report:
                    report.write(json.dumps(line) + "\n")
                else:
                    _emit(line)
    finally:
        if report:
            report.close()
    print(f"scanned {n} images; positives per detector: {counts}", file=sys.stderr)
    if report:
        _emit({"images": n, "positives": counts, "report": args.report})


def cmd_gen_dataset(args, sigs):
    cfg_path = Path(args.config)
    data = json.loads(cfg_path.read_text(encoding="utf-8"))
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.threads is not None:
        data["threads"] = args.threads
    data.setdefault("threads", os.cpu_count() or 1)
    if args.out:
        data["output_dir"] = args.out
    cfg = GenConfig.from_dict(data, base=cfg_path.parent)
    if args.sig_config:
        cfg.sigs = sigs
    _emit({"effective": cfg.to_dict()})
    manifest = generate_dataset(cfg)
    problems = validate_manifest(manifest, cfg.sigs)
    for p in problems:
        log.error("manifest check: %s", p)
    _emit({"manifest": str(cfg.output_dir / "manifest.jsonl"), "records": len(manifest.records),
           "skipped": len(manifest.skipped), "problems": len(problems)})
    if problems:
        return EXIT_DATA


def cmd_synth_covers(args, sigs):
    fields = {}
    if args.spec:
        fields.update(json.loads(Path(args.spec).read_text(encoding="utf-8")))
    for key in ("count", "width", "height", "noise_sigma", "smoothing_radius", "channels"):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.preset == "smooth":
        fields.setdefault("noise_sigma", 0.0)
        fields.setdefault("smoothing_radius", 3)
    elif args.preset == "noisy":
        fields.setdefault("noise_sigma", 8.0)
        fields.setdefault("smoothing_radius", 0)
    try:
        spec = SynthSpec(**fields)
    except TypeError as exc:
        raise UsageError(f"bad synth spec: {exc}") from None
    _emit({"effective": asdict(spec)})
    out = Path(args.out)
    for i, img in enumerate(synth_covers(spec)):
        write_png(out / f"synth{i:05d}.png", img)
    _emit({"written": spec.count, "out": str(out)})


def cmd_features(args, sigs):
    manifest = DatasetManifest.read(args.manifest)
    records = manifest.records
    if args.app:
        app = AppId.parse(args.app).value
        records = [r for r in records if r.app == app]
    if args.rates:
        wanted = {as_rate(r) for r in args.rates.split(",")}
        records = [r for r in records if not r.is_stego or as_rate(r.target_rate) in wanted]
    images = [to_grayscale(read_png(manifest.resolve(r))) for r in records]
    X = extract_many(images, args.threads or 1)
    write_feature_csv(args.out, [r.path for r in records], [int(r.is_stego) for r in records], X)
    _emit({"rows": len(records), "dim": int(X.shape[1]), "out": args.out})


def cmd_train(args, sigs):
    _, y, X = read_feature_csv(args.features)
    model = ensemble.train(X, y, L=args.L, d_sub=args.d_sub, lam=args.lam,
                           seed=args.seed if args.seed is not None else 0)
    model.save(args.model)
    _emit({"model": args.model, "n_learners": model.n_learners, "d_sub": model.d_sub,
           "oob_error": model.oob_error})


def cmd_predict(args, sigs):
    model = ensemble.EnsembleModel.load(args.model)
    ids, y, X = read_feature_csv(args.features)
    pred = model.predict(X)
    out = open(args.out, "w", encoding="utf-8") if args.out else None
    try:
        for sid, label in zip(ids, pred):
            line = json.dumps({"id": sid, "pred": int(label)})
            if out:
                out.write(line + "\n")
            else:
                sys.stdout.write(line + "\n")
    finally:
        if out:
            out.close()
    if set(np.unique(y)) == {0, 1}:
        _emit({"report": p_e(y, pred).to_dict()})


def cmd_evaluate(args, sigs):
    if bool(args.grid) == bool(args.mismatch):
        raise UsageError("give exactly one of --grid or --mismatch")
    cfg_path = Path(args.grid or args.mismatch)
    cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))

    def rel(p):
        return Path(p) if Path(p).is_absolute() else cfg_path.parent / p

    if args.grid:
        manifest = DatasetManifest.read(rel(cfg["manifest"]))
        grid = run_rate_grid(
            manifest, cfg["app"], cfg["train_rates"], cfg["test_rates"],
            int(cfg["n_train_pairs"]), int(cfg["n_test_pairs"]), seed,
            repetitions=int(cfg.get("repetitions", 1)), L=cfg.get("L"), d_sub=cfg.get("d_sub"),
            store=FeatureStore(manifest),
        )
        doc = grid.to_dict()
        if args.csv:
            Path(args.csv).write_text(grid.to_csv(), encoding="utf-8")
        print(grid.to_csv(), file=sys.stderr)
    else:
        manifests = {name: DatasetManifest.read(rel(p)) for name, p in cfg["manifests"].items()}
        reports = run_source_mismatch(
            manifests, cfg["app"], cfg["rate"], seed,
            n_train_pairs=cfg.get("n_train_pairs"), n_test_pairs=cfg.get("n_test_pairs"),
            L=cfg.get("L"), d_sub=cfg.get("d_sub"),
        )
        doc = json.loads(dump_reports(reports))
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    _emit(doc)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed for all randomness")
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: available CPUs)")
    common.add_argument("--sig-config", default=None, help="signature key/value file")
    common.add_argument("--log-level", default="WARNING")

    parser = _Parser(prog="stegokit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    apps = [a.value for a in AppId]

    p = sub.add_parser("embed", parents=[common], help="embed a message file into a PNG")
    p.add_argument("--app", required=True, choices=apps)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--msg-file", required=True)
    p.add_argument("--password", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--blocks", type=int, default=1, help="MobiStego row bands")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", parents=[common], help="recover a message from a stego PNG")
    p.add_argument("--app", required=True, choices=apps)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--password", default=None)
    p.add_argument("--out", default=None, help="write the message bytes here")
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--bits", type=int, default=None, help="payload length, if known")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("detect", parents=[common], help="signature-based detection")
    p.add_argument("--app", choices=[a.value for a in DETECTABLE_APPS])
    p.add_argument("--all", action="store_true")
    p.add_argument("--in", dest="input", required=True, help="PNG file or directory")
    p.add_argument("--report", default=None, help="JSONL output (default: stdout)")
    p.add_argument("--blocks", type=int, default=1, help="MobiStego row bands")
    p.add_argument("--strict-pocketstego", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("gen-dataset", parents=[common], help="batch cover/stego generation")
    p.add_argument("--config", required=True, help="JSON generation config")
    p.add_argument("--out", default=None, help="override output_dir")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("synth-covers", parents=[common], help="write synthetic cover PNGs")
    p.add_argument("--spec", default=None, help="JSON SynthSpec")
    p.add_argument("--preset", choices=["smooth", "noisy"], default=None)
    p.add_argument("--count", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--smoothing-radius", type=int)
    p.add_argument("--channels", choices=["gray", "rgb"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_covers)

    p = sub.add_parser("features", parents=[common], help="SRM-mini features for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--app", choices=apps)
    p.add_argument("--rates", default=None, help="comma-separated stego rates to keep")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="train an FLD ensemble")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--d-sub", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="classify feature rows")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="rate grid or source-mismatch run")
    p.add_argument("--grid", default=None, help="JSON grid config")
    p.add_argument("--mismatch", default=None, help="JSON mismatch config")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None, help="grid as CSV (rows: test rate)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None and args.command == "features":
        args.threads = os.cpu_count() or 1
    try:
        sigs = SignatureTable.load(args.sig_config)
        _print_config(args)
        return args.func(args, sigs) or EXIT_OK
    except UsageError as exc:
        print(f"stegokit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StegoError, ValueError, OSError, KeyError, json.JSONDecodeError, NotImplementedError) as exc:
        print(f"stegokit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
