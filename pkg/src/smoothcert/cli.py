"""Command-line harness: ``gen-data``, ``train``, ``certify``, ``attack``, ``report``.

Every setting can come from a flag or from a flat ``key = value`` config
file passed with ``--config``; flags win. Each CSV starts with ``#`` lines
recording the resolved settings and a build identifier. Exit codes: 0 on
success, 1 on runtime failure, 2 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from smoothcert import __version__, attacks, datasets, nn, smoothing, training
from smoothcert.stats import RngStream

logger = logging.getLogger("smoothcert")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

# settings that change how a run executes but not what it computes
EXECUTION_KEYS = {"command", "func", "config", "workers", "out", "log", "curve", "summary",
                  "checkpoint_every", "verbose"}


class ConfigError(Exception):
    pass


# parsing helpers -----------------------------------------------------------

def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _lr_schedule(text):
    try:
        pairs = [item.split(":") for item in str(text).split(",") if item.strip()]
        return [(int(e), float(lr)) for e, lr in pairs]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected epoch:lr pairs like 0:0.1,50:0.01, got {text!r}") from None


def _centers(text):
    try:
        return [[float(v) for v in c.split(",")] for c in str(text).split(";") if c.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected centers like '-1,0;1,0', got {text!r}") from None


def _box(text):
    if text in (None, "", "none"):
        return None
    lo, hi = _float_list(text)
    return (lo, hi)


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes in keys map to underscores."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


# provenance and output -----------------------------------------------------

@lru_cache(maxsize=1)
def build_id() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        rev = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"smoothcert {__version__}" + (f" ({rev})" if rev else "")


def _show(value) -> str:
    """Render a setting in the syntax its flag accepts."""
    if isinstance(value, list) and value and isinstance(value[0], tuple):
        return ",".join(":".join(str(v) for v in item) for item in value)  # lr schedule
    if isinstance(value, list) and value and isinstance(value[0], list):
        return ";".join(",".join(str(v) for v in item) for item in value)  # blob centers
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def provenance(args) -> list[str]:
    lines = [f"smoothcert {args.command}", f"build = {build_id()}"]
    for key, value in sorted(vars(args).items()):
        if key not in EXECUTION_KEYS:
            lines.append(f"{key} = {_show(value)}")
    return lines


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(path, comments, columns, rows) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _sibling(path, suffix) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


# shared loading ------------------------------------------------------------

def _require(args, *names):
    for name in names:
        if getattr(args, name) in (None, ""):
            raise ConfigError(f"missing required setting --{name.replace('_', '-')}")


def _load_data(path) -> datasets.Dataset:
    if not Path(path).is_file():
        raise ConfigError(f"dataset file not found: {path}")
    try:
        return datasets.load_dataset(path)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _load_model(path):
    if not Path(path).is_file():
        raise ConfigError(f"model file not found: {path}")
    try:
        return nn.load_model(path)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _smoothed(args):
    net, model_sigma = _load_model(args.model)
    sigma = model_sigma if args.sigma is None else args.sigma
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    args.sigma = sigma
    ds = _load_data(args.data)
    if ds.d != net.input_dim:
        raise ConfigError(f"dataset has d={ds.d} but the model expects {net.input_dim}")
    return smoothing.SmoothedClassifier(net, sigma), ds


def select_indices(n: int, subsample: int | None, seed: int) -> np.ndarray:
    """All indices, or a seeded random subset of size ``subsample`` in ascending order."""
    if not subsample or subsample >= n:
        return np.arange(n)
    perm = training.shuffle_epoch(n, RngStream(seed).spawn("subsample"))
    return np.sort(perm[:subsample])


def parallel_map(fn, items, workers: int) -> list:
    """Results in input order regardless of completion order."""
    items = list(items)
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# commands ------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    _require(args, "out")
    try:
        if args.dataset == "two_moons":
            ds = datasets.gen_two_moons(args.n, args.noise_std, args.seed)
        elif args.dataset == "rings":
            ds = datasets.gen_rings(args.n, args.radii, args.noise_std, args.seed)
        else:
            ds = datasets.gen_blobs(args.n, args.centers, args.std, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    datasets.save_dataset(ds, args.out, provenance(args))
    print(f"wrote {len(ds)} points ({ds.num_classes} classes, d={ds.d}) to {args.out}")
    return EXIT_OK


def _attack_kind(args) -> str:
    if args.mode.startswith("vanilla"):
        return "vanilla_pgd"
    return {"pgd": "smoothadv_pgd", "ddn": "smoothadv_ddn"}[args.attack]


def cmd_train(args) -> int:
    _require(args, "data", "out")
    ds = _load_data(args.data)
    try:
        acfg = attacks.AttackConfig(args.epsilon, args.steps, args.m_train, args.sigma,
                                    _attack_kind(args), args.estimator)
        tcfg = training.TrainConfig(acfg, args.epochs, args.batch_size, args.lr, args.warmup_epochs,
                                    args.mode, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    net = nn.init_network([ds.d, *args.hidden, ds.num_classes], args.activation, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def on_epoch(record, current):
        done = record.epoch + 1
        if args.checkpoint_every and done % args.checkpoint_every == 0 and done < args.epochs:
            nn.save_model(current, args.sigma, _sibling(out, f".epoch{done:04d}{out.suffix}"))

    report = training.train(net, ds, tcfg, RngStream(args.seed).spawn("train"), on_epoch)
    log_path = args.log or _sibling(out, ".log.csv")
    write_csv(log_path, provenance(args), ["epoch", "loss", "eps", "lr"],
              [(r.epoch, r.loss, r.epsilon, r.lr) for r in report.records])
    # write-then-rename so a failed run never leaves a partial final model
    tmp = out.with_name(out.name + ".tmp")
    nn.save_model(report.network, args.sigma, tmp)
    os.replace(tmp, out)
    acc = training.accuracy(report.network, ds)
    print(f"trained {args.mode} for {args.epochs} epochs in {report.wall_time:.1f}s; "
          f"train accuracy {acc:.4f}; model {out}")
    return EXIT_OK


def certified_curve(labels, predictions, radii, grid):
    """Rows ``(r, certified accuracy, abstention rate)``; abstentions count as wrong."""
    labels, predictions, radii = map(np.asarray, (labels, predictions, radii))
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("radii must be strictly increasing")
    correct = predictions == labels
    abstain = float(np.mean(predictions == smoothing.ABSTAIN)) if len(labels) else 0.0
    return [(float(r), float(np.mean(correct & (radii >= r))) if len(labels) else 0.0, abstain)
            for r in grid]


def cmd_certify(args) -> int:
    _require(args, "model", "data", "out")
    sc, ds = _smoothed(args)
    idx = select_indices(len(ds), args.subsample, args.seed)
    root = RngStream(args.seed)

    def work(i):
        res = smoothing.certify(sc, ds.X[i], args.n0, args.n, args.alpha, root.spawn("certify", int(i)))
        return res

    results = parallel_map(work, idx, args.workers)
    rows = []
    for i, res in zip(idx, results):
        top = 0 if res.abstained else int(res.n_counts[res.prediction])
        rows.append((int(i), int(ds.y[i]), res.prediction, int(res.prediction == ds.y[i]), res.radius,
                     res.pa_lower, top, ";".join(str(int(c)) for c in res.n0_counts),
                     ";".join(str(int(c)) for c in res.n_counts)))
    header = provenance(args)
    write_csv(args.out, header, ["index", "label", "prediction", "correct", "radius", "pa_lower",
                                 "count_top", "n0_counts", "n_counts"], rows)
    curve = certified_curve([r[1] for r in rows], [r[2] for r in rows], [r[4] for r in rows], args.radii)
    curve_path = args.curve or _sibling(args.out, ".curve.csv")
    write_csv(curve_path, header, ["radius", "certified_accuracy", "abstention_rate"], curve)
    for r, acc, ab in curve:
        print(f"r={r:g}\tcertified_accuracy={acc:.4f}\tabstention_rate={ab:.4f}")
    return EXIT_OK


def cmd_attack(args) -> int:
    _require(args, "model", "data", "out")
    sc, ds = _smoothed(args)
    try:
        configs = [attacks.AttackConfig(eps, args.steps, m, sc.sigma, args.kind, args.estimator, args.box)
                   for eps in args.epsilon for m in args.m_test]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    idx = select_indices(len(ds), args.subsample, args.seed)
    root = RngStream(args.seed)

    def work(i):
        x, y = ds.X[i], int(ds.y[i])
        out = []
        for cfg in configs:
            x_adv = attacks.run_attack(sc.base, x, y, cfg, root.spawn("attack", cfg.epsilon, cfg.m, int(i)))
            # one prediction stream per example, shared by every attack setting
            pred = smoothing.predict(sc, x_adv, args.n, args.alpha, root.spawn("predict", int(i)))
            out.append((cfg.epsilon, cfg.m, int(i), y, pred.prediction, int(pred.prediction == y),
                        float(np.linalg.norm(x_adv - x))))
        return out

    per_example = parallel_map(work, idx, args.workers)
    header = provenance(args)
    rows = [per_example[j][c] for c in range(len(configs)) for j in range(len(idx))]
    write_csv(args.out, header, ["epsilon", "m_test", "index", "label", "prediction", "correct",
                                 "perturbation_norm"], rows)
    summary = []
    for c, cfg in enumerate(configs):
        block = [per_example[j][c] for j in range(len(idx))]
        acc = float(np.mean([r[5] for r in block])) if block else 0.0
        ab = float(np.mean([r[4] == smoothing.ABSTAIN for r in block])) if block else 0.0
        summary.append((cfg.epsilon, cfg.m, acc, ab))
        print(f"eps={cfg.epsilon:g}\tm_test={cfg.m}\tempirical_accuracy={acc:.4f}\tabstention_rate={ab:.4f}")
    write_csv(args.summary or _sibling(args.out, ".summary.csv"), header,
              ["epsilon", "m_test", "empirical_accuracy", "abstention_rate"], summary)
    return EXIT_OK


def upper_envelope(curves):
    """Pointwise maximum of certified-accuracy curves sharing one radius grid.

    ``curves`` is a list of ``[(radius, accuracy), ...]``; returns rows
    ``(radius, envelope, best curve index, *accuracies)``.
    """
    if not curves:
        raise ConfigError("report needs at least one curve")
    grid = [r for r, _ in curves[0]]
    for k, curve in enumerate(curves[1:], start=1):
        if [r for r, _ in curve] != grid:
            raise ConfigError(f"curve {k} uses a different radius grid than curve 0")
    rows = []
    for j, r in enumerate(grid):
        accs = [curve[j][1] for curve in curves]
        best = int(np.argmax(accs))
        rows.append((r, accs[best], best, *accs))
    return rows


def cmd_report(args) -> int:
    _require(args, "out")
    curves = []
    for path in args.curves:
        if not Path(path).is_file():
            raise ConfigError(f"curve file not found: {path}")
        try:
            curves.append([(float(r["radius"]), float(r["certified_accuracy"])) for r in read_csv(path)])
        except (KeyError, ValueError):
            raise ConfigError(f"{path}: not a certify curve CSV") from None
    rows = upper_envelope(curves)
    comments = provenance(args) + [f"curve_{k} = {p}" for k, p in enumerate(args.curves)]
    write_csv(args.out, comments, ["radius", "envelope", "best_curve",
                                   *[f"curve_{k}" for k in range(len(curves))]], rows)
    for r, env, best, *_ in rows:
        print(f"r={r:g}\tenvelope={env:.4f}\tbest=curve_{best}")
    return EXIT_OK


# parser --------------------------------------------------------------------

def _common(p, seed=True):
    p.add_argument("--config", help="flat 'key = value' settings file; flags override it")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path")


def _smoothing_inputs(p):
    p.add_argument("--model", help="model file written by 'train'")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--sigma", type=float, default=None, help="noise level (default: the model's)")
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--subsample", type=int, default=None, help="seeded random subset size")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothcert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--dataset", choices=("two_moons", "blobs", "rings"), default="two_moons")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--centers", type=_centers, default="-1,0;1,0")
    p.add_argument("--std", type=float, default=0.3, help="blob spread")
    p.add_argument("--radii", type=_float_list, default="1,2", help="ring radii")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a base classifier")
    _common(p)
    p.add_argument("--data", help="training dataset CSV")
    p.add_argument("--mode", choices=training.MODES, default="smoothadv")
    p.add_argument("--sigma", type=float, default=0.25)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=4, help="attack steps T")
    p.add_argument("--m-train", type=int, default=2)
    p.add_argument("--attack", choices=("pgd", "ddn"), default="pgd")
    p.add_argument("--estimator", choices=attacks.ESTIMATORS, default="plugin")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=_lr_schedule, default="0:0.1,50:0.01,100:0.001")
    p.add_argument("--warmup-epochs", type=int, default=10)
    p.add_argument("--hidden", type=_int_list, default="64,64")
    p.add_argument("--activation", choices=nn.ACTIVATIONS, default="relu")
    p.add_argument("--log", help="per-epoch CSV (default: <out stem>.log.csv)")
    p.add_argument("--checkpoint-every", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("certify", help="certify a smoothed classifier on a dataset")
    _common(p)
    _smoothing_inputs(p)
    p.add_argument("--n0", type=int, default=64)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--radii", type=_float_list, default="0,0.125,0.25,0.375,0.5,0.75,1")
    p.add_argument("--curve", help="curve CSV (default: <out stem>.curve.csv)")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("attack", help="empirical accuracy under attack")
    _common(p)
    _smoothing_inputs(p)
    p.add_argument("--n", type=int, default=10_000, help="samples for predict")
    p.add_argument("--kind", choices=attacks.KINDS, default="smoothadv_pgd")
    p.add_argument("--estimator", choices=attacks.ESTIMATORS, default="plugin")
    p.add_argument("--epsilon", type=_float_list, default="0.25")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--m-test", type=_int_list, default="1")
    p.add_argument("--box", type=_box, default=None, help="per-coordinate clamp 'lo,hi'")
    p.add_argument("--summary", help="summary CSV (default: <out stem>.summary.csv)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="upper envelope of certified-accuracy curves")
    _common(p, seed=False)
    p.add_argument("curves", nargs="+", help="curve CSVs written by 'certify'")
    p.set_defaults(func=cmd_report)
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config_file(args.config)
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions} - {"help", "config"}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"{args.config}: unknown setting(s) for {args.command}: {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"smoothcert: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"smoothcert: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        logger.debug("failure", exc_info=True)
        print(f"smoothcert: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
