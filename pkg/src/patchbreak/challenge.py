"""Matching-game orchestration.

Game 1: Alice picks a random ordered subset x_0..x_{N-1} of a public dataset,
encodes each with one fresh key (fresh patch shuffle per image), and presents
the encodings reordered by a secret permutation sigma: bundle row p shows the
encoding of original sigma[p]. Bob, given the originals in order and the
shuffled encodings, submits a guess in the same orientation (guess[p] =
original index for bundle row p); his score is the number of rows where
guess[p] == sigma[p]. A random guess scores 1 in expectation regardless of N.

Game 2 scoring (for encoder-guessing adversaries): given true encodings y_i
of held-out points and adversary-produced encodings y'_i, count the i whose
nearest y' (Hamming or Euclidean) is y'_i itself.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import encoder, rng, serialize
from .errors import ConfigError, ValidationError


@dataclass
class ChallengeBundle:
    spec: encoder.ImageSpec
    originals: np.ndarray  # (N, w, h, c), Alice's ordered subset
    encodings: np.ndarray  # (N, a^2, d_out), sigma-shuffled


@dataclass
class HiddenSolution:
    sigma: np.ndarray  # sigma[p] = original index shown at bundle row p
    key: encoder.EncoderKey
    perms: np.ndarray  # (N, a^2); perms[p] = patch shuffle of bundle row p
    subset: np.ndarray  # indices into the source dataset
    seeds: dict


@dataclass
class ScoreReport:
    score: int
    n: int
    flags: np.ndarray  # per-index correctness

    def to_dict(self):
        return {"score": int(self.score), "n": int(self.n),
                "flags": [bool(f) for f in self.flags]}


def validate_permutation(p, n, what="permutation"):
    p = np.asarray(p)
    if p.shape != (n,) or not np.array_equal(np.sort(p), np.arange(n)):
        raise ValidationError(f"{what} is not a bijection over 0..{n - 1}")
    return p.astype(np.int64)


def make_challenge(dataset, spec, N, key_seed, sigma_seed, perm_seed,
                   weight_scale=None):
    """Build one game instance. Returns (ChallengeBundle, HiddenSolution)."""
    dataset = np.asarray(dataset, dtype=np.float64)
    if N < 1 or N > len(dataset):
        raise ConfigError(f"N={N} outside 1..{len(dataset)}")
    subset = rng.stream(sigma_seed, "challenge.subset").choice(
        len(dataset), size=N, replace=False
    )
    originals = dataset[subset]
    key = encoder.sample_key(spec, key_seed, weight_scale=weight_scale)
    encs, img_perms = encoder.encode_dataset(key, originals, perm_seed)
    if N == 1:
        sigma = np.zeros(1, dtype=np.int64)
    else:
        sigma = rng.stream(sigma_seed, "challenge.sigma").permutation(N)
    bundle = ChallengeBundle(spec=spec, originals=originals,
                             encodings=encs[sigma])
    solution = HiddenSolution(
        sigma=sigma, key=key, perms=np.array(img_perms)[sigma], subset=subset,
        seeds={"key_seed": int(key_seed), "sigma_seed": int(sigma_seed),
               "perm_seed": int(perm_seed)},
    )
    return bundle, solution


def score_matching(guess, solution):
    """Count bundle rows whose guessed original is the true one."""
    sigma = solution.sigma if isinstance(solution, HiddenSolution) else solution
    sigma = np.asarray(sigma, dtype=np.int64)
    n = len(sigma)
    guess = validate_permutation(guess, n, "guess")
    flags = guess == sigma
    return ScoreReport(score=int(flags.sum()), n=n, flags=flags)


def score_challenge2(true_eval, guessed_eval, metric="hamming"):
    """Nearest-guess identification count; ties go to the smallest index."""
    true_eval = np.asarray(true_eval)
    guessed_eval = np.asarray(guessed_eval)
    if true_eval.size == 0 or guessed_eval.size == 0:
        raise ValidationError("empty evaluation lists")
    if true_eval.shape != guessed_eval.shape:
        raise ValidationError(
            f"shape mismatch {true_eval.shape} vs {guessed_eval.shape}"
        )
    n = len(true_eval)
    if metric == "hamming":
        dists = (guessed_eval[:, None, :] != true_eval[None, :, :]).sum(axis=2)
    elif metric == "euclidean":
        diff = guessed_eval[:, None, :].astype(np.float64) - true_eval[None, :, :]
        dists = np.sqrt((diff**2).sum(axis=2))
    else:
        raise ConfigError(f"unknown metric {metric!r}")
    nearest = dists.argmin(axis=0)  # for each true y_i, nearest guess index
    flags = nearest == np.arange(n)
    return ScoreReport(score=int(flags.sum()), n=n, flags=flags)


# --- bundle directory layout -------------------------------------------------
# bundle dir: originals.json/.bin + encodings.json/.bin (no secrets)
# solution dir (separate): solution.json/.bin + key.json/.bin

def write_bundle(bundle_dir, bundle):
    os.makedirs(bundle_dir, exist_ok=True)
    spec = bundle.spec
    serialize.write_arrays(
        os.path.join(bundle_dir, "originals.json"),
        {"images": bundle.originals},
        meta={"kind": "dataset", "spec": spec.to_dict(), "style": "challenge",
              "seed": None, "count": len(bundle.originals)},
    )
    encoder.save_encoded(
        os.path.join(bundle_dir, "encodings.json"), bundle.encodings, spec,
        meta={"order": "sigma-shuffled"},
    )
    return bundle_dir


def read_bundle(bundle_dir):
    meta, arrays = serialize.read_arrays(os.path.join(bundle_dir, "originals.json"))
    spec = encoder.ImageSpec.from_dict(meta["spec"])
    spec2, encs = encoder.load_encoded(os.path.join(bundle_dir, "encodings.json"))
    if spec2 != spec:
        raise ValidationError("originals and encodings disagree on the spec")
    return ChallengeBundle(spec=spec, originals=arrays["images"], encodings=encs)


def write_solution(solution_dir, solution):
    os.makedirs(solution_dir, exist_ok=True)
    serialize.write_arrays(
        os.path.join(solution_dir, "solution.json"),
        {"sigma": solution.sigma.astype(np.float64),
         "perms": solution.perms.astype(np.float64),
         "subset": solution.subset.astype(np.float64)},
        meta={"kind": "solution", "seeds": solution.seeds},
    )
    encoder.save_key(os.path.join(solution_dir, "key.json"), solution.key)
    return solution_dir


def read_solution(solution_dir):
    meta, arrays = serialize.read_arrays(os.path.join(solution_dir, "solution.json"))
    if meta.get("kind") != "solution":
        raise ValidationError(f"not a solution manifest in {solution_dir}")
    key = encoder.load_key(os.path.join(solution_dir, "key.json"))
    return HiddenSolution(
        sigma=arrays["sigma"].astype(np.int64),
        key=key,
        perms=arrays["perms"].astype(np.int64),
        subset=arrays["subset"].astype(np.int64),
        seeds=meta["seeds"],
    )
