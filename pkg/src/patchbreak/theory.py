"""Idealized-encoder games on finite domains.

Three batches of machinery:

1. Ideal (label-class-permutation) encoders and Monte-Carlo estimators for
   the no-instance and chosen-instance distinguishing games. The ideal
   scheme's encoding distribution depends only on the label, so every
   adversary sits at chance; the estimators exist to measure that, and to
   flag schemes that do leak.
2. A predictor extractor: given just two labeled points and an encoding
   oracle, build a labeled dataset of fresh-key encodings, train a weak
   learner to beat chance on balanced data, then amplify with a majority
   vote over fresh encodings of each query. Shows "hides the labeling"
   fails even for weakly-ideal schemes.
3. A tag-appending counterexample scheme for the matching game: encodings
   reveal the instance verbatim yet carry enough random tag bits that a
   guessing adversary scores no better than chance as the tag grows. Shows
   the matching game does not certify privacy.

All randomness flows through named rng substreams; estimators reduce in
fixed trial order.
"""

import hashlib
import itertools
from dataclasses import dataclass

import numpy as np

from . import rng
from .challenge import score_challenge2
from .errors import ConfigError, ExtractionError, ProtocolError, ValidationError


# --- finite domains and concepts ----------------------------------------------

@dataclass(frozen=True)
class FiniteDomain:
    instances: tuple  # distinct hashable points (ints or bit tuples)
    weights: tuple  # sampling distribution, sums to 1

    def __post_init__(self):
        if len(self.instances) == 0:
            raise ConfigError("domain needs at least one instance")
        if len(set(self.instances)) != len(self.instances):
            raise ConfigError("domain instances must be distinct")
        if len(self.weights) != len(self.instances):
            raise ConfigError("one weight per instance")
        w = np.asarray(self.weights, dtype=np.float64)
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must be nonnegative and sum to 1")

    @staticmethod
    def uniform(instances):
        instances = tuple(instances)
        n = len(instances)
        if n == 0:
            raise ConfigError("domain needs at least one instance")
        return FiniteDomain(instances=instances, weights=(1.0 / n,) * n)

    def index_of(self, x):
        try:
            return self.instances.index(x)
        except ValueError:
            raise ValidationError(f"{x!r} is not in the domain") from None

    def sample(self, gen):
        return self.instances[int(gen.choice(len(self.instances), p=self.weights))]


@dataclass(frozen=True)
class Concept:
    labels: tuple  # one bit per domain instance, domain order

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.labels):
            raise ConfigError("labels must be bits")

    def label(self, domain, x):
        return self.labels[domain.index_of(x)]

    def classes(self, domain):
        """(class-0 instances, class-1 instances), domain order."""
        zero = tuple(x for x, b in zip(domain.instances, self.labels) if b == 0)
        one = tuple(x for x, b in zip(domain.instances, self.labels) if b == 1)
        return zero, one


def threshold_concepts(domain):
    """All concepts labeling instances >= t as 1, over integer domains."""
    xs = domain.instances
    cuts = sorted(set(xs))
    out = []
    for t in cuts:
        labels = tuple(int(x >= t) for x in xs)
        if 0 < sum(labels) < len(labels):
            out.append(Concept(labels=labels))
    return out


# --- the ideal scheme -----------------------------------------------------------

@dataclass(frozen=True)
class IdealKey:
    class_perms: tuple  # (perm over class-0 instances, perm over class-1)

    def __post_init__(self):
        for perm in self.class_perms:
            if sorted(perm) != list(range(len(perm))):
                raise ConfigError(f"not a permutation: {perm}")


class IdealScheme:
    """Keyed map sending each instance to a uniform same-label instance."""

    def __init__(self, domain, concept):
        self.domain = domain
        self.concept = concept
        self._classes = concept.classes(domain)

    def sample_key(self, gen):
        return IdealKey(class_perms=tuple(
            tuple(int(i) for i in gen.permutation(len(cls)))
            for cls in self._classes
        ))

    def encode(self, x, key):
        b = self.concept.label(self.domain, x)
        cls = self._classes[b]
        return cls[key.class_perms[b][cls.index(x)]]

    def all_keys(self):
        """Exhaustive key enumeration; use only on small domains."""
        perms0 = itertools.permutations(range(len(self._classes[0])))
        perms1 = list(itertools.permutations(range(len(self._classes[1]))))
        for p0 in perms0:
            for p1 in perms1:
                yield IdealKey(class_perms=(p0, p1))


def ideal_encode(domain, concept, key, x):
    """Encode one instance under an ideal key; preserves the label."""
    return IdealScheme(domain, concept).encode(x, key)


class IdentityScheme:
    """The fully broken scheme: encoding = instance."""

    def __init__(self, domain):
        self.domain = domain

    def sample_key(self, gen):
        return None

    def encode(self, x, key):
        self.domain.index_of(x)
        return x


class ClassRankLeakScheme:
    """Ideal-looking scheme that appends the instance's rank inside its
    label class: a deliberate leak for estimator sanity checks."""

    def __init__(self, domain, concept):
        self._ideal = IdealScheme(domain, concept)
        self.domain = domain
        self.concept = concept

    def sample_key(self, gen):
        return self._ideal.sample_key(gen)

    def encode(self, x, key):
        b = self.concept.label(self.domain, x)
        rank = self._ideal._classes[b].index(x)
        return (self._ideal.encode(x, key), rank)


# --- distinguishing games -------------------------------------------------------

class SameLabelPairAdversary:
    """Base proposal behavior: a uniformly random same-label pair."""

    def __init__(self, domain, concept):
        self.domain = domain
        self.concept = concept

    def propose(self, gen):
        zero, one = self.concept.classes(self.domain)
        pool = zero if (len(zero) >= 2 and (len(one) < 2 or gen.integers(2))) else one
        if len(pool) < 2:
            raise ValidationError("no label class has two instances to propose")
        i, j = gen.choice(len(pool), size=2, replace=False)
        return pool[int(i)], pool[int(j)]


class NearestInstanceAdversary(SameLabelPairAdversary):
    """Best effort without oracle access: guess the proposal whose id is
    closer to the encoding."""

    def guess(self, encoding, x0, x1, gen):
        d0, d1 = _instance_distance(encoding, x0), _instance_distance(encoding, x1)
        if d0 == d1:
            return int(gen.integers(2))
        return int(d1 < d0)


class EqualityAdversary(SameLabelPairAdversary):
    """Wins outright against the identity scheme."""

    def guess(self, encoding, x0, x1, gen):
        if encoding == x0:
            return 0
        if encoding == x1:
            return 1
        return int(gen.integers(2))


class CoinFlipAdversary(SameLabelPairAdversary):
    def guess(self, encoding, x0, x1, gen):
        return int(gen.integers(2))


class RankReadingAdversary(SameLabelPairAdversary):
    """Reads the rank channel of ClassRankLeakScheme encodings."""

    def guess(self, encoding, x0, x1, gen):
        _, rank = encoding
        b = self.concept.label(self.domain, x0)
        cls = self.concept.classes(self.domain)[b]
        if rank == cls.index(x0):
            return 0
        if rank == cls.index(x1):
            return 1
        return int(gen.integers(2))


class OracleSweepAdversary(SameLabelPairAdversary):
    """Chosen-instance best effort: query every allowed point and try to
    eliminate encodings the challenge cannot be."""

    def guess(self, encoding, x0, x1, oracle, gen):
        b = self.concept.label(self.domain, x0)
        cls = self.concept.classes(self.domain)[b]
        taken = set()
        for x in cls:
            if x not in (x0, x1):
                taken.add(oracle(x))
        # under a class-permutation key the queries pin every slot except
        # the two left for the challenge pair, and either assignment of
        # those two stays equally likely: elimination cannot do better
        # than the coin flip below. A leakier scheme would collide here.
        if encoding in taken:
            return NearestInstanceAdversary.guess(self, encoding, x0, x1, gen)
        return int(gen.integers(2))


def _instance_distance(a, b):
    if isinstance(a, tuple) and isinstance(b, tuple):
        return sum(u != v for u, v in zip(a, b))
    try:
        return abs(int(a) - int(b))
    except (TypeError, ValueError):
        return 0 if a == b else 1


def _check_game(concept, domain, trials):
    if trials <= 0:
        raise ValidationError(f"trials must be positive, got {trials}")
    zero, one = concept.classes(domain)
    if not zero or not one:
        raise ValidationError("game needs both label classes nonempty")


def estimate_nia_advantage(scheme, concept, adversary, trials, seed=0):
    """Monte-Carlo estimate of Pr[adversary identifies which same-label
    instance was encoded] - 1/2, with binomial standard error."""
    _check_game(concept, scheme.domain, trials)
    correct = 0
    for t in range(trials):
        gen = rng.stream(seed, "theory.nia", t)
        x0, x1 = adversary.propose(gen)
        if concept.label(scheme.domain, x0) != concept.label(scheme.domain, x1):
            raise ValidationError("proposal labels differ; the game is void")
        key = scheme.sample_key(gen)
        b = int(gen.integers(2))
        enc = scheme.encode(x1 if b else x0, key)
        correct += adversary.guess(enc, x0, x1, gen) == b
    p_hat = correct / trials
    se = float(np.sqrt(max(p_hat * (1 - p_hat), 1e-12) / trials))
    return p_hat - 0.5, se


class EncodingOracle:
    """Per-key query access that refuses the challenge pair."""

    def __init__(self, scheme, key, banned):
        self._scheme = scheme
        self._key = key
        self._banned = tuple(banned)
        self.violations = []

    def __call__(self, x):
        if x in self._banned:
            self.violations.append(x)
            raise ProtocolError(f"oracle refuses challenge instance {x!r}")
        return self._scheme.encode(x, self._key)


def estimate_cia_advantage(scheme, concept, adversary, trials, seed=0):
    """As the no-instance game, but the adversary may query the current
    key's encoder on everything except the challenge pair."""
    _check_game(concept, scheme.domain, trials)
    correct = 0
    for t in range(trials):
        gen = rng.stream(seed, "theory.cia", t)
        x0, x1 = adversary.propose(gen)
        if concept.label(scheme.domain, x0) != concept.label(scheme.domain, x1):
            raise ValidationError("proposal labels differ; the game is void")
        key = scheme.sample_key(gen)
        b = int(gen.integers(2))
        enc = scheme.encode(x1 if b else x0, key)
        oracle = EncodingOracle(scheme, key, (x0, x1))
        correct += adversary.guess(enc, x0, x1, oracle, gen) == b
    p_hat = correct / trials
    se = float(np.sqrt(max(p_hat * (1 - p_hat), 1e-12) / trials))
    return p_hat - 0.5, se


# --- label extraction from two points -------------------------------------------

class FrequencyTableLearner:
    """Majority label per seen encoded instance; unseen instances inherit
    the nearest seen instance's label."""

    def fit(self, examples, labels, gen):
        votes = {}
        for x, y in zip(examples, labels):
            votes.setdefault(x, [0, 0])[y] += 1
        table = {x: int(v[1] >= v[0]) for x, v in votes.items()}
        seen = list(table)

        def h(x):
            if x in table:
                return table[x]
            nearest = min(seen, key=lambda s: _instance_distance(x, s))
            return table[nearest]

        return h


def pred_extractor(learner, enc_oracle, x0, x1, m, p, eps, delta, tau, T,
                   seed=0, retry_budget=50, holdout_per_class=100):
    """Turn two labeled points plus an encoding oracle into a predictor.

    enc_oracle(x, gen) must return a fresh-key encoding of x. Builds
    m' ~ Binom(m, 1-p) encodings of x0 labeled 0 and m-m' of x1 labeled 1,
    fits the learner, and retries (fresh draws) until held-out balanced
    accuracy reaches 0.5+eps. The returned predictor encodes each query
    under T fresh keys and takes the learner's majority vote.
    """
    if m < 2 or T < 1:
        raise ConfigError(f"need m >= 2 and T >= 1, got m={m}, T={T}")
    if not (0 < p < 1):
        raise ConfigError(f"class balance p must be in (0,1), got {p}")
    history = []
    for attempt in range(retry_budget):
        gen = rng.stream(seed, "theory.pred-fit", attempt)
        m_neg = int(gen.binomial(m, 1.0 - p))
        m_neg = min(max(m_neg, 1), m - 1)  # keep both classes represented
        examples = [enc_oracle(x0, gen) for _ in range(m_neg)]
        examples += [enc_oracle(x1, gen) for _ in range(m - m_neg)]
        labels = [0] * m_neg + [1] * (m - m_neg)
        h = learner.fit(examples, labels, gen)

        ok0 = sum(h(enc_oracle(x0, gen)) == 0 for _ in range(holdout_per_class))
        ok1 = sum(h(enc_oracle(x1, gen)) == 1 for _ in range(holdout_per_class))
        bal = (ok0 + ok1) / (2 * holdout_per_class)
        history.append(bal)
        if bal >= 0.5 + eps:
            def predictor(x, query_seed=0):
                g = rng.stream(seed, "theory.pred-vote", int(query_seed))
                votes = sum(h(enc_oracle(x, g)) for _ in range(T))
                return int(votes * 2 > T)
            predictor.balanced_accuracy = bal
            predictor.attempts = attempt + 1
            return predictor
    raise ExtractionError(
        f"learner never reached balanced accuracy {0.5 + eps:.3f} in "
        f"{retry_budget} attempts; best {max(history):.3f}, "
        f"trajectory {['%.3f' % b for b in history]}"
    )


# --- the matching-game counterexample --------------------------------------------

@dataclass(frozen=True)
class BinaryScheme:
    """E(x, k) = (x, k(x)) with k a seeded random function to tag bits."""

    n: int  # input bits
    a2: int  # tag bits
    seed: int

    def __post_init__(self):
        if self.n < 1 or self.a2 < 1:
            raise ConfigError(f"need n >= 1 and a2 >= 1, got {self}")

    def tag(self, x):
        return _hash_pm1(self.seed, int(x), self.a2)

    def encode(self, x):
        return np.concatenate([_int_bits_pm1(int(x), self.n), self.tag(x)])


def _hash_pm1(seed, x, count):
    """count +/-1 symbols derived from a per-point keyed hash."""
    out = np.empty(0, dtype=np.int8)
    block = 0
    while out.size < count:
        digest = hashlib.sha256(f"{seed}:{x}:{block}".encode()).digest()
        bits = np.unpackbits(np.frombuffer(digest, dtype=np.uint8))
        out = np.concatenate([out, bits.astype(np.int8)])
        block += 1
    return (out[:count] * 2 - 1).astype(np.int8)


def _int_bits_pm1(x, n):
    bits = (x >> np.arange(n)) & 1
    return (bits * 2 - 1).astype(np.int8)


def challenge2_counterexample(n, a2, N, trials, seed, guess_seed=None):
    """Average matching-game score of the tag-appending scheme.

    The adversary knows E reveals x verbatim, sets its guessed encoder's
    instance part to the identity, and fills the tag with its own random
    function (guess_seed; pass the true scheme's seed to simulate a
    perfect key guess). Returns (mean score, reconstruction exactness):
    the flag certifies every true encoding starts with x itself, i.e. the
    scheme is maximally non-private while scoring like chance for a2 >> n.
    """
    if min(n, a2, N, trials) < 1:
        raise ConfigError("all counterexample parameters must be positive")
    if N > 2**n:
        raise ConfigError(f"cannot draw {N} distinct points from {2**n}")
    true_scheme = BinaryScheme(n=n, a2=a2, seed=int(seed))
    guessed = BinaryScheme(
        n=n, a2=a2,
        seed=int(seed) + 1 if guess_seed is None else int(guess_seed),
    )
    scores = []
    reconstruction = True
    for t in range(trials):
        gen = rng.stream(seed, "theory.c2", t)
        zs = gen.choice(2**n, size=N, replace=False)
        true_eval = np.stack([true_scheme.encode(z) for z in zs])
        guess_eval = np.stack([guessed.encode(z) for z in zs])
        for i, z in enumerate(zs):
            if not np.array_equal(true_eval[i, :n], _int_bits_pm1(int(z), n)):
                reconstruction = False
        scores.append(score_challenge2(true_eval, guess_eval, "hamming").score)
    return float(np.mean(scores)), reconstruction
