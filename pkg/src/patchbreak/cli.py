"""Command-line front end.

Single binary with subcommands:

    patchbreak gen        synthesize or import a dataset
    patchbreak challenge  build a matching-game bundle (+ separate solution dir)
    patchbreak attack     run the full break against a bundle
    patchbreak score      grade a guess against the hidden solution
    patchbreak theory     nia | cia | pred | challenge2 simulations

Every run writes run.json into --out: the resolved config plus a sha256 of
each input file, so any artifact can be audited back to its inputs. All
deterministic outputs (reports, guesses, datasets) are byte-stable for a
fixed config and seed under --threads 1; wall-clock timings go to a separate
timings.json that makes no such promise.

Failures exit nonzero with one machine-readable JSON line on stderr:
{"code": ..., "error": <exception class>, "message": ...}. Exit codes:
2 bad config, 3 missing input, 4 invalid structured input, 5 stage failure,
6 refusing to run the attack next to solution secrets.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import attack, challenge, datasets, encoder, rng, serialize, theory
from .errors import (
    ConfigError,
    ExtractionError,
    HygieneError,
    ProtocolError,
    ShapeError,
    SizeError,
    TrainingError,
    ValidationError,
)

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_INVALID = 4
EXIT_STAGE = 5
EXIT_HYGIENE = 6


# --- plumbing ---------------------------------------------------------------------

def _hash_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _input_hashes(paths):
    """sha256 per input file; manifest paths pull in their .bin blobs too."""
    out = {}
    for p in paths:
        p = os.fspath(p)
        if os.path.isdir(p):
            for name in sorted(os.listdir(p)):
                full = os.path.join(p, name)
                if os.path.isfile(full):
                    out[full] = _hash_file(full)
        elif os.path.isfile(p):
            out[p] = _hash_file(p)
            if p.endswith(".json") and os.path.isfile(p[:-5] + ".bin"):
                out[p[:-5] + ".bin"] = _hash_file(p[:-5] + ".bin")
    return out


def _require(path, what):
    if path is None:
        raise ConfigError(f"missing required path for {what}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_config(args):
    if args.config is None:
        return {}
    cfg = serialize.read_json(_require(args.config, "config file"))
    if not isinstance(cfg, dict):
        raise ConfigError(f"config must be a JSON object: {args.config}")
    return cfg


def _resolve(defaults, config, args, names):
    """defaults <- config file <- explicit CLI flags, in that order."""
    resolved = dict(defaults)
    for k in config:
        if k not in defaults and k not in ("spec", "train", "extract"):
            raise ConfigError(f"unknown config key {k!r}")
    resolved.update({k: v for k, v in config.items() if k in defaults})
    for name in names:
        val = getattr(args, name.replace("-", "_"), None)
        if val is not None:
            resolved[name] = val
    return resolved


def _spec_from(config):
    return encoder.ImageSpec(**config.get("spec", {}))


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_run(out, subcommand, resolved, input_paths):
    run = {
        "subcommand": subcommand,
        "config": resolved,
        "inputs": _input_hashes(input_paths),
        "version": __import__("patchbreak").__version__,
    }
    serialize.write_json(os.path.join(out, "run.json"), run)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


# --- subcommands ------------------------------------------------------------------

def cmd_gen(args):
    config = _load_config(args)
    resolved = _resolve(
        {"style": "lowfreq", "count": 100, "seed": 0, "path": None},
        config, args, ["style", "count", "seed", "path"],
    )
    spec = _spec_from(config)
    out = _out_dir(args)
    style, count, seed = resolved["style"], resolved["count"], resolved["seed"]
    if style not in datasets.STYLES:
        raise ConfigError(f"unknown style {style!r}, want one of {datasets.STYLES}")
    inputs = [args.config] if args.config else []
    if style == "import":
        src = _require(resolved["path"], "PGM directory")
        images = datasets.import_pgm_dir(src, spec)
        seed = None
        inputs.append(src)
    else:
        if count < 0:
            raise ConfigError(f"count must be >= 0, got {count}")
        images = datasets.gen_images(count, spec, style, seed)
    path = datasets.save_dataset(os.path.join(out, "dataset.json"),
                                 images, spec, style, seed)
    resolved["spec"] = spec.to_dict()
    resolved["count"] = len(images)
    _write_run(out, "gen", resolved, inputs)
    print(f"wrote {len(images)} images to {path}")
    return 0


def cmd_challenge(args):
    config = _load_config(args)
    resolved = _resolve(
        {"dataset": None, "n": 100, "seed": 0, "weight_scale": None},
        config, args, ["dataset", "n", "seed", "weight-scale"],
    )
    ds_path = _require(resolved["dataset"], "dataset manifest")
    out = _out_dir(args)
    spec, images = datasets.load_dataset(ds_path)
    key_seed, sigma_seed, perm_seed = (
        int(s) for s in rng.spawn_seeds(resolved["seed"], 3, "cli.challenge"))
    bundle, solution = challenge.make_challenge(
        images, spec, resolved["n"], key_seed, sigma_seed, perm_seed,
        weight_scale=resolved["weight_scale"])
    challenge.write_bundle(os.path.join(out, "bundle"), bundle)
    challenge.write_solution(os.path.join(out, "solution"), solution)
    resolved["spec"] = spec.to_dict()
    inputs = [ds_path] + ([args.config] if args.config else [])
    _write_run(out, "challenge", resolved, inputs)
    print(f"wrote bundle ({resolved['n']} rows) and solution under {out}")
    return 0


def _refuse_oracle(bundle_dir, allow):
    secrets = [n for n in ("solution.json", "key.json")
               if os.path.exists(os.path.join(bundle_dir, n))]
    if secrets and not allow:
        raise HygieneError(
            f"bundle dir {bundle_dir} contains {', '.join(secrets)}; the attack "
            "must not see solution data (pass --allow-oracle for diagnostics)")


def cmd_attack(args):
    config = _load_config(args)
    resolved = _resolve(
        {"bundle": None, "seed": 0, "ref_index": 0, "max_rounds": 5,
         "skip_extraction": "auto"},
        config, args, ["bundle", "seed"],
    )
    bundle_dir = _require(resolved["bundle"], "bundle directory")
    _refuse_oracle(bundle_dir, args.allow_oracle)
    out = _out_dir(args)
    bundle = challenge.read_bundle(bundle_dir)

    cfg = attack.AttackConfig.from_dict({
        "seed": resolved["seed"],
        "train": config.get("train", {}) or None,
        "extract": config.get("extract", {}) or None,
        "ref_index": resolved["ref_index"],
        "max_rounds": resolved["max_rounds"],
        "skip_extraction": resolved["skip_extraction"],
    })
    report = attack.run_attack(bundle, cfg)

    serialize.write_json(os.path.join(out, "guess.json"),
                         {"kind": "guess", "n": len(report.guess),
                          "guess": [int(g) for g in report.guess]})
    serialize.write_json(os.path.join(out, "report.json"), report.to_dict())
    serialize.write_json(os.path.join(out, "timings.json"),
                         {k: round(v, 3) for k, v in report.timings.items()})
    if args.csv:
        keys = sorted({k for entry in report.stage_log for k in entry})
        _write_csv(os.path.join(out, "stages.csv"), keys,
                   [[entry.get(k, "") for k in keys]
                    for entry in report.stage_log])
        _write_csv(os.path.join(out, "guess.csv"), ["row", "original"],
                   list(enumerate(report.guess)))
    resolved["config"] = report.config
    inputs = [bundle_dir] + ([args.config] if args.config else [])
    _write_run(out, "attack", resolved, inputs)
    print(f"attack finished; guess written to {out}/guess.json")
    return 0


def cmd_score(args):
    config = _load_config(args)
    resolved = _resolve({"guess": None, "solution": None}, config, args,
                        ["guess", "solution"])
    guess_path = _require(resolved["guess"], "guess file")
    sol_dir = _require(resolved["solution"], "solution directory")
    out = _out_dir(args)
    payload = serialize.read_json(guess_path)
    if not isinstance(payload, dict) or "guess" not in payload:
        raise ValidationError(f"not a guess file: {guess_path}")
    solution = challenge.read_solution(sol_dir)
    report = challenge.score_matching(np.asarray(payload["guess"]), solution)
    serialize.write_json(os.path.join(out, "score.json"), report.to_dict())
    if args.csv:
        _write_csv(os.path.join(out, "flags.csv"), ["row", "correct"],
                   [(i, int(f)) for i, f in enumerate(report.flags)])
    inputs = [guess_path, sol_dir] + ([args.config] if args.config else [])
    _write_run(out, "score", resolved, inputs)
    print(f"score {report.score}/{report.n}")
    return 0


# --- theory subcommands ---------------------------------------------------------

_SCHEMES = {
    "ideal": theory.IdealScheme,
    "identity": lambda domain, concept: theory.IdentityScheme(domain),
    "leak": theory.ClassRankLeakScheme,
}
_NIA_ADVERSARIES = {
    "nearest": theory.NearestInstanceAdversary,
    "equality": theory.EqualityAdversary,
    "coinflip": theory.CoinFlipAdversary,
    "rank": theory.RankReadingAdversary,
}


def _theory_domain(resolved):
    domain = theory.FiniteDomain.uniform(tuple(range(resolved["n"])))
    t = resolved["threshold"]
    if not 0 < t < resolved["n"]:
        raise ConfigError(f"threshold must split the domain, got {t}")
    concept = theory.Concept(tuple(int(x >= t) for x in domain.instances))
    return domain, concept


def cmd_theory_games(args):
    config = _load_config(args)
    resolved = _resolve(
        {"n": 16, "threshold": 8, "scheme": "ideal", "adversary": None,
         "trials": 10000, "seed": 0},
        config, args, ["n", "threshold", "scheme", "adversary", "trials", "seed"],
    )
    domain, concept = _theory_domain(resolved)
    if resolved["scheme"] not in _SCHEMES:
        raise ConfigError(f"unknown scheme {resolved['scheme']!r}")
    scheme = _SCHEMES[resolved["scheme"]](domain, concept)
    out = _out_dir(args)
    if args.game == "nia":
        name = resolved["adversary"] or "nearest"
        if name not in _NIA_ADVERSARIES:
            raise ConfigError(f"unknown NIA adversary {name!r}")
        adversary = _NIA_ADVERSARIES[name](domain, concept)
        adv, se = theory.estimate_nia_advantage(
            scheme, concept, adversary, resolved["trials"], resolved["seed"])
    else:
        name = resolved["adversary"] or "sweep"
        if name != "sweep":
            raise ConfigError(f"unknown CIA adversary {name!r}")
        adversary = theory.OracleSweepAdversary(domain, concept)
        adv, se = theory.estimate_cia_advantage(
            scheme, concept, adversary, resolved["trials"], resolved["seed"])
    resolved["adversary"] = name
    result = {"game": args.game, "advantage": adv, "standard_error": se,
              "trials": resolved["trials"]}
    serialize.write_json(os.path.join(out, "result.json"), result)
    if args.csv:
        _write_csv(os.path.join(out, "result.csv"), sorted(result),
                   [[result[k] for k in sorted(result)]])
    _write_run(out, f"theory-{args.game}", resolved,
               [args.config] if args.config else [])
    print(f"{args.game} advantage {adv:+.4f} (se {se:.4f}, "
          f"{resolved['trials']} trials)")
    return 0


def _skewed_weights(domain, threshold):
    # adversarial query law: mass piled against the decision boundary
    w = np.array([1.0 / (1.0 + abs(int(x) - threshold)) for x in domain.instances])
    return w / w.sum()


def cmd_theory_pred(args):
    config = _load_config(args)
    resolved = _resolve(
        {"n": 64, "threshold": 32, "m": 200, "eps": 0.25, "delta": 0.25,
         "tau": 0.05, "T": 31, "queries": 1000, "dist": "uniform", "seed": 0},
        config, args,
        ["n", "threshold", "m", "eps", "delta", "tau", "T", "queries", "dist",
         "seed"],
    )
    domain, concept = _theory_domain(resolved)
    scheme = theory.IdealScheme(domain, concept)
    x0 = domain.instances[0]
    x1 = domain.instances[-1]
    key_gen = rng.stream(resolved["seed"], "cli.pred-keys")

    def enc_oracle(x, gen):
        return scheme.encode(x, scheme.sample_key(key_gen))

    p = float(sum(w for x, w in zip(domain.instances, domain.weights)
                  if concept.label(domain, x) == 1))
    predictor = theory.pred_extractor(
        theory.FrequencyTableLearner(), enc_oracle, x0, x1,
        m=resolved["m"], p=p, eps=resolved["eps"], delta=resolved["delta"],
        tau=resolved["tau"], T=resolved["T"], seed=resolved["seed"])

    if resolved["dist"] == "uniform":
        weights = np.array(domain.weights)
    elif resolved["dist"] == "skewed":
        weights = _skewed_weights(domain, resolved["threshold"])
    else:
        raise ConfigError(f"unknown query distribution {resolved['dist']!r}")
    qgen = rng.stream(resolved["seed"], "cli.pred-queries")
    idx = qgen.choice(len(domain.instances), size=resolved["queries"], p=weights)
    wrong = sum(
        predictor(domain.instances[i], query_seed=q) != concept.label(
            domain, domain.instances[i])
        for q, i in enumerate(idx))
    risk = wrong / resolved["queries"]

    out = _out_dir(args)
    result = {"risk": risk, "tau": resolved["tau"], "dist": resolved["dist"],
              "queries": resolved["queries"],
              "balanced_accuracy": predictor.balanced_accuracy,
              "attempts": predictor.attempts}
    serialize.write_json(os.path.join(out, "result.json"), result)
    if args.csv:
        _write_csv(os.path.join(out, "result.csv"), sorted(result),
                   [[result[k] for k in sorted(result)]])
    _write_run(out, "theory-pred", resolved,
               [args.config] if args.config else [])
    print(f"pred risk {risk:.4f} on {resolved['dist']} queries "
          f"(tau {resolved['tau']})")
    return 0


def cmd_theory_challenge2(args):
    config = _load_config(args)
    resolved = _resolve(
        {"n": 8, "a2": [256, 1024, 4096], "N": 64, "trials": 100, "seed": 0},
        config, args, ["n", "a2", "N", "trials", "seed"],
    )
    out = _out_dir(args)
    rows = []
    for a2 in resolved["a2"]:
        mean, recon = theory.challenge2_counterexample(
            resolved["n"], int(a2), resolved["N"], resolved["trials"],
            resolved["seed"])
        rows.append({"a2": int(a2), "mean_score": mean, "reconstruction": recon})
    result = {"n": resolved["n"], "N": resolved["N"],
              "trials": resolved["trials"], "rows": rows}
    serialize.write_json(os.path.join(out, "result.json"), result)
    if args.csv:
        _write_csv(os.path.join(out, "result.csv"),
                   ["a2", "mean_score", "reconstruction"],
                   [[r["a2"], r["mean_score"], r["reconstruction"]]
                    for r in rows])
    _write_run(out, "theory-challenge2", resolved,
               [args.config] if args.config else [])
    for r in rows:
        print(f"a2={r['a2']}: mean score {r['mean_score']:.3f} "
              f"reconstruction={r['reconstruction']}")
    return 0


# --- parser -----------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory (default: cwd)")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS thread cap; 1 = deterministic reference")
    common.add_argument("--csv", action="store_true",
                        help="also dump CSV summaries")

    parser = argparse.ArgumentParser(
        prog="patchbreak",
        description="keyed patch-encoder privacy games: build, break, score")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate/import a dataset")
    p.add_argument("--style", choices=datasets.STYLES)
    p.add_argument("--count", type=int)
    p.add_argument("--path", help="PGM directory for --style import")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("challenge", parents=[common],
                       help="build bundle + solution from a dataset")
    p.add_argument("--dataset", help="dataset manifest (.json)")
    p.add_argument("--n", type=int, help="number of challenge rows")
    p.add_argument("--weight-scale", type=float)
    p.set_defaults(func=cmd_challenge)

    p = sub.add_parser("attack", parents=[common], help="run the break")
    p.add_argument("--bundle", help="bundle directory")
    p.add_argument("--allow-oracle", action="store_true",
                   help="diagnostics only: run even if solution files sit "
                        "in the bundle directory")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("score", parents=[common], help="grade a guess")
    p.add_argument("--guess", help="guess.json from the attack")
    p.add_argument("--solution", help="solution directory")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("theory", parents=[], help="theory simulations")
    tsub = p.add_subparsers(dest="game", required=True)
    for game in ("nia", "cia"):
        q = tsub.add_parser(game, parents=[common])
        q.add_argument("--n", type=int, help="domain size")
        q.add_argument("--threshold", type=int)
        q.add_argument("--scheme", choices=sorted(_SCHEMES))
        q.add_argument("--adversary")
        q.add_argument("--trials", type=int)
        q.set_defaults(func=cmd_theory_games)
    q = tsub.add_parser("pred", parents=[common])
    q.add_argument("--n", type=int)
    q.add_argument("--threshold", type=int)
    q.add_argument("--m", type=int)
    q.add_argument("--eps", type=float)
    q.add_argument("--delta", type=float)
    q.add_argument("--tau", type=float)
    q.add_argument("--T", type=int)
    q.add_argument("--queries", type=int)
    q.add_argument("--dist", choices=("uniform", "skewed"))
    q.set_defaults(func=cmd_theory_pred)
    q = tsub.add_parser("challenge2", parents=[common])
    q.add_argument("--n", type=int)
    q.add_argument("--a2", type=int, nargs="+")
    q.add_argument("--N", type=int)
    q.add_argument("--trials", type=int)
    q.set_defaults(func=cmd_theory_challenge2)

    return parser


def _fail(code, exc):
    sys.stderr.write(json.dumps({
        "code": code, "error": type(exc).__name__, "message": str(exc),
    }) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _fail(EXIT_CONFIG, ConfigError("--threads must be >= 1"))
    try:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING, exc)
    except (ValidationError, ShapeError, SizeError) as exc:
        return _fail(EXIT_INVALID, exc)
    except (TrainingError, ExtractionError, ProtocolError) as exc:
        return _fail(EXIT_STAGE, exc)
    except HygieneError as exc:
        return _fail(EXIT_HYGIENE, exc)


if __name__ == "__main__":
    sys.exit(main())
