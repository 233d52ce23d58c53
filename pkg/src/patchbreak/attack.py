"""The matching attack pipeline.

Stages, in the order run_attack executes them:

1. Pair simulation: the attacker samples fresh keys of the known architecture
   and encodes the public originals, producing (raw patch, encoded patch)
   pairs with true positions (pre-shuffle rows).
2. Patch similarity: two embedding nets are trained contrastively on
   permutation-invariant moment features; score = inner product.
3. Image similarity and initial matching: the patch-score matrix between an
   original and an encoding is solved as an assignment; the mean matched
   score is the image score; an N x N assignment gives the first matching.
4. Permutation recovery: raw inner products between encoded rows leak shared
   positions, aligning every encoding to one reference row order; one global
   assignment over summed patch-score matrices then maps original positions
   to reference slots.
5. Boost: with positions pinned, re-matching no longer needs inner
   assignments; alternate global-permutation recovery and re-matching until
   the matching stabilizes.
6. Extraction: fit a fresh encoder to (original, de-permuted encoding) pairs
   by Adam on squared error; the final matching is nearest-target in
   Euclidean distance.

All randomness is drawn from named substreams of AttackConfig.seed.
"""

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import encoder, nn, rng
from .errors import ConfigError, TrainingError, ValidationError
from .matching import solve_assignment


# --- moment features ---------------------------------------------------------

@dataclass(frozen=True)
class MomentConfig:
    max_order: int = 4

    def __post_init__(self):
        if self.max_order < 2:
            raise ConfigError(f"max_order must be >= 2, got {self.max_order}")

    @property
    def length(self):
        return self.max_order  # mu_0 plus mu_2..mu_K


def moment_features_batch(vs, cfg):
    """Rows of vs -> [mu_0, mu_2, ..., mu_K] each; invariant to entry order."""
    vs = np.asarray(vs, dtype=np.float64)
    if vs.ndim != 2 or vs.shape[1] == 0:
        raise ValidationError(f"need a (batch, n) array with n >= 1, got {vs.shape}")
    # sort each row so the reductions below see a canonical entry order and
    # the invariance is exact, not just up to float rounding
    vs = np.sort(vs, axis=1)
    mu0 = vs.mean(axis=1)
    centered = vs - mu0[:, None]
    cols = [mu0]
    power = centered
    for _ in range(2, cfg.max_order + 1):
        power = power * centered
        cols.append(power.mean(axis=1))
    return np.stack(cols, axis=1)


def moment_features(v, cfg):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError(f"need a nonempty vector, got shape {v.shape}")
    return moment_features_batch(v[None, :], cfg)[0]


# --- pair dataset ------------------------------------------------------------

@dataclass
class PairDataset:
    raw: np.ndarray  # (M, patch_len)
    enc: np.ndarray  # (M, d_out), pre-shuffle row of the same patch
    position: np.ndarray  # (M,), the shared patch position
    key_index: np.ndarray  # (M,), which simulated key produced the pair
    spec: encoder.ImageSpec


def build_pair_dataset(images, num_encoders, spec, seed, weight_scale=None):
    """Simulated supervision: encode every image under fresh keys, keeping
    rows in true position order so each raw patch pairs with its encoding."""
    images = np.asarray(images, dtype=np.float64)
    key_seeds = rng.spawn_seeds(seed, num_encoders, "attack.pair-keys")
    patches = np.array([encoder.patchify(spec, im) for im in images])
    n_img, n_patch = patches.shape[:2]
    raw, enc = [], []
    for ks in key_seeds:
        key = encoder.sample_key(spec, int(ks), weight_scale=weight_scale)
        for i in range(n_img):
            raw.append(patches[i])
            enc.append(encoder.encode_rows(key, images[i]))
    raw = np.concatenate(raw) if raw else np.empty((0, spec.patch_len))
    enc = np.concatenate(enc) if enc else np.empty((0, spec.out_width))
    position = np.tile(np.arange(n_patch), num_encoders * n_img)
    key_index = np.repeat(np.arange(num_encoders), n_img * n_patch)
    return PairDataset(raw=raw, enc=enc, position=position, key_index=key_index,
                       spec=spec)


# --- similarity model ----------------------------------------------------------

@dataclass
class SimilarityModel:
    n_x: nn.MlpParams
    n_y: nn.MlpParams
    moments: MomentConfig
    d_emb: int
    spec: encoder.ImageSpec
    feat_stats: dict  # per-side feature mean/std frozen at train time
    threshold: float = 0.0
    holdout_accuracy: float = float("nan")
    final_loss: float = float("nan")

    def embed_raw(self, patches):
        f = _condition(moment_features_batch(np.atleast_2d(patches), self.moments))
        f = (f - self.feat_stats["raw_mean"]) / self.feat_stats["raw_std"]
        return nn.forward(self.n_x, f)

    def embed_enc(self, rows):
        f = _condition(moment_features_batch(np.atleast_2d(rows), self.moments))
        f = (f - self.feat_stats["enc_mean"]) / self.feat_stats["enc_std"]
        return nn.forward(self.n_y, f)

    def recalibrate(self, rows):
        """Re-center the encoded-side feature statistics on one key's rows.

        Each key multiplies output moments by its own gain; any one key's
        encoded corpus is available to the attacker, so re-estimating the
        feature mean/std on it aligns that key with the per-key-normalized
        features the nets were trained on. Returns a new model.
        """
        f = _condition(moment_features_batch(np.atleast_2d(rows), self.moments))
        stats = dict(self.feat_stats)
        stats["enc_mean"] = f.mean(axis=0)
        stats["enc_std"] = f.std(axis=0) + 1e-12
        return replace(self, feat_stats=stats)


@dataclass
class TrainConfig:
    num_encoders: int = 64
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: str = "cosine"  # "cosine" anneals to 0; "none" holds lr fixed
    d_emb: int = 32
    hidden: tuple = (128, 128)
    init_scale: float = 0.25
    holdout_frac: float = 0.1
    seed: int = 0
    weight_scale: float | None = None


def _condition(feats):
    """Log the even central moments (nonnegative, spanning decades) so the
    embedding nets see roughly Gaussian inputs; odd channels pass through.
    The floor keeps near-constant patches finite."""
    out = np.array(feats, dtype=np.float64)
    for col in range(1, out.shape[1], 2):  # mu_2, mu_4, ... live at odd indices
        out[:, col] = np.log(out[:, col] + 1e-6)
    return out


def _feature_stats(fr, fe):
    eps = 1e-12
    return {
        "raw_mean": fr.mean(axis=0), "raw_std": fr.std(axis=0) + eps,
        "enc_mean": fe.mean(axis=0), "enc_std": fe.std(axis=0) + eps,
    }


def contrastive_loss_and_grads(ex, ey):
    """Softmax-over-encodings loss for an aligned batch of embeddings.

    Returns (loss, dL/dex, dL/dey) for
    loss = -(1/B) sum_i log softmax_j(<ex_i, ey_j>)[i].
    """
    B = ex.shape[0]
    S = ex @ ey.T
    S = S - S.max(axis=1, keepdims=True)
    expS = np.exp(S)
    P = expS / expS.sum(axis=1, keepdims=True)
    loss = -(np.log(P[np.arange(B), np.arange(B)] + 1e-300)).mean()
    dS = (P - np.eye(B)) / B
    return loss, dS @ ey, dS.T @ ex


def balanced_accuracy_and_threshold(pos_scores, neg_scores):
    """Best (TPR + TNR)/2 over thresholds, plus the achieving threshold."""
    scores = np.concatenate([pos_scores, neg_scores])
    labels = np.concatenate([np.ones(len(pos_scores)), np.zeros(len(neg_scores))])
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    tp = np.concatenate([[0], np.cumsum(labels)])
    fp = np.concatenate([[0], np.cumsum(1 - labels)])
    tpr = tp / max(1, len(pos_scores))
    tnr = 1 - fp / max(1, len(neg_scores))
    bal = (tpr + tnr) / 2
    k = int(np.argmax(bal))
    if k == 0:
        thr = scores[0] + 1.0
    elif k == len(scores):
        thr = scores[-1] - 1.0
    else:
        thr = (scores[k - 1] + scores[k]) / 2
    return float(bal[k]), float(thr)


def _holdout_split(key_index, holdout_frac, seed):
    """Hold out whole keys so accuracy measures transfer to unseen keys.
    With a single key, fall back to holding out a slice of its pairs."""
    keys = np.unique(key_index)
    if len(keys) > 1:
        n_hold = max(1, int(round(holdout_frac * len(keys))))
        n_hold = min(n_hold, len(keys) - 1)
        held = rng.stream(seed, "attack.sim-split").choice(keys, n_hold, replace=False)
        hold_mask = np.isin(key_index, held)
    else:
        M = len(key_index)
        perm = rng.stream(seed, "attack.sim-split").permutation(M)
        hold_mask = np.zeros(M, dtype=bool)
        hold_mask[perm[: max(1, int(M * holdout_frac))]] = True
    return np.flatnonzero(hold_mask), np.flatnonzero(~hold_mask)


def _same_key_negatives(key_index, seed):
    """One mismatched partner per pair, drawn from the same key's pairs."""
    gen = rng.stream(seed, "attack.sim-neg")
    neg = np.empty(len(key_index), dtype=np.intp)
    for k in np.unique(key_index):
        sel = np.flatnonzero(key_index == k)
        if len(sel) < 2:
            neg[sel] = sel  # degenerate key: nothing to mismatch against
            continue
        shift = int(gen.integers(1, len(sel)))
        neg[sel] = sel[(np.arange(len(sel)) + shift) % len(sel)]
    return neg


def train_patch_sim(pairs, cfg):
    """Contrastively train the two embedding nets on moment features.

    Batches never mix keys, so the in-batch softmax learns the decision the
    attack needs: same key, which encoded row goes with this raw patch. The
    recorded accuracy is balanced over held-out true pairs and same-key
    mismatches.
    """
    M = len(pairs.raw)
    if M < cfg.batch_size:
        raise ConfigError(f"need at least batch_size={cfg.batch_size} pairs, got {M}")
    moments = MomentConfig()
    hold, train = _holdout_split(pairs.key_index, cfg.holdout_frac, cfg.seed)

    fx = _condition(moment_features_batch(pairs.raw, moments))
    fy = _condition(moment_features_batch(pairs.enc, moments))
    stats = _feature_stats(fx[train], fy[train])
    fx = (fx - stats["raw_mean"]) / stats["raw_std"]
    # encoded-side features are standardized per key (each key scales the
    # output moments by its own gain; the attack sees whole keys and
    # recalibrates the same way, see SimilarityModel.recalibrate)
    for k in np.unique(pairs.key_index):
        sel = pairs.key_index == k
        fy[sel] = (fy[sel] - fy[sel].mean(axis=0)) / (fy[sel].std(axis=0) + 1e-12)

    dims = [moments.length, *cfg.hidden, cfg.d_emb]
    seeds = rng.spawn_seeds(cfg.seed, 2, "attack.sim-init")
    model = SimilarityModel(
        n_x=nn.init_mlp(dims, cfg.init_scale, int(seeds[0])),
        n_y=nn.init_mlp(dims, cfg.init_scale, int(seeds[1])),
        moments=moments, d_emb=cfg.d_emb, spec=pairs.spec, feat_stats=stats,
    )

    train_mask = np.zeros(M, dtype=bool)
    train_mask[train] = True
    train_by_key = [np.flatnonzero(train_mask & (pairs.key_index == k))
                    for k in np.unique(pairs.key_index[train])]
    if not any(len(t) >= cfg.batch_size for t in train_by_key):
        raise ConfigError("no key has batch_size training pairs after the split")

    if cfg.lr_decay not in ("cosine", "none"):
        raise ConfigError(f"unknown lr_decay {cfg.lr_decay!r}")
    opt_x = nn.adam_init(model.n_x, lr=cfg.lr)
    opt_y = nn.adam_init(model.n_y, lr=cfg.lr)
    B = cfg.batch_size
    last_loss = float("nan")
    for epoch in range(cfg.epochs):
        if cfg.lr_decay == "cosine":
            cur = cfg.lr * 0.5 * (1 + np.cos(np.pi * epoch / max(1, cfg.epochs)))
            opt_x = replace(opt_x, lr=cur)
            opt_y = replace(opt_y, lr=cur)
        gen = rng.stream(cfg.seed, "attack.sim-shuffle", epoch)
        blocks = []
        for sel in train_by_key:
            p = gen.permutation(sel)
            blocks.extend(p[s : s + B] for s in range(0, len(p) - B + 1, B))
        for bi in gen.permutation(len(blocks)):
            idx = blocks[bi]
            bx, by = fx[idx], fy[idx]
            ex = nn.forward(model.n_x, bx)
            ey = nn.forward(model.n_y, by)
            loss, dex, dey = contrastive_loss_and_grads(ex, ey)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"contrastive loss diverged at epoch {epoch}: {loss}"
                )
            gx = nn.backward(model.n_x, bx, dex)
            gy = nn.backward(model.n_y, by, dey)
            model.n_x, opt_x = nn.opt_step(model.n_x, gx, opt_x)
            model.n_y, opt_y = nn.opt_step(model.n_y, gy, opt_y)
            last_loss = float(loss)

    # held-out balanced accuracy: true pairs vs same-key mismatched pairs
    ex = nn.forward(model.n_x, fx[hold])
    ey = nn.forward(model.n_y, fy[hold])
    pos = (ex * ey).sum(axis=1)
    neg_of = _same_key_negatives(pairs.key_index[hold], cfg.seed)
    neg = (ex * ey[neg_of]).sum(axis=1)
    acc, thr = balanced_accuracy_and_threshold(pos, neg)
    model.holdout_accuracy = acc
    model.threshold = thr
    model.final_loss = last_loss
    return model


def p_sim(model, raw_patch, encoded_patch):
    """Similarity score; higher = more likely the same patch."""
    ex = model.embed_raw(np.asarray(raw_patch)[None, :])
    ey = model.embed_enc(np.asarray(encoded_patch)[None, :])
    return float(ex[0] @ ey[0])


def p_sim_matrix(model, raw_patches, encoded_rows):
    return model.embed_raw(raw_patches) @ model.embed_enc(encoded_rows).T


def _as_patches(model, image):
    image = np.asarray(image, dtype=np.float64)
    spec = model.spec
    if image.ndim == 2 and image.shape == (spec.num_patches, spec.patch_len):
        return image
    return encoder.patchify(spec, image)


def i_sim(model, image, encoded):
    """Best-assignment mean patch similarity and the maximizing alignment.

    The image may be given whole or already patchified.
    """
    patches = _as_patches(model, image)
    S = p_sim_matrix(model, patches, np.asarray(encoded))
    a = solve_assignment(-S)
    rho = a.mapping
    score = float(S[np.arange(len(rho)), rho].mean())
    return score, rho


# --- matching stages ------------------------------------------------------------

def _embed_all(model, xs, ys):
    Ex = np.array([model.embed_raw(_as_patches(model, x)) for x in xs])
    Ey = np.array([model.embed_enc(y) for y in ys])
    return Ex, Ey  # (N, a^2, d_emb) each


def all_pairs_isim(model, xs, ys):
    """(N_x, N_y) matrix of i_sim scores, embeddings computed once per image."""
    Ex, Ey = _embed_all(model, xs, ys)
    P = Ex.shape[1]
    out = np.empty((len(xs), len(ys)))
    for i in range(len(xs)):
        Si = Ex[i] @ Ey.transpose(0, 2, 1)  # (N_y, P, P)
        for j in range(len(ys)):
            a = solve_assignment(-Si[j])
            out[i, j] = Si[j][np.arange(P), a.mapping].mean()
    return out


def initial_matching(model, xs, ys):
    """m[i] = encoding row matched to original i, from all-pairs image scores."""
    if len(xs) != len(ys):
        raise ValidationError("originals and encodings differ in length")
    scores = all_pairs_isim(model, xs, ys)
    return solve_assignment(-scores).mapping


def recover_local_perms(ys, ref_index=0):
    """Align every encoding's rows to the reference's row order.

    Inner products between encoded rows peak when two rows carry the same
    position vector, so a max-weight assignment recovers each image's shuffle
    relative to the reference. Rows are length-normalized (patch content
    scales row norms; position does not), and instead of matching against the
    single reference image, each image is matched against the running mean of
    the rows aligned so far: averaging washes patch content out of the
    template while the shared position vectors accumulate. A second pass
    re-aligns everything against the full-consensus template, which also rids
    the early images of their noisy-template alignments.

    perms[j][u] = the row of y_j sitting in the reference's row-u slot;
    perms[ref] = identity.
    """
    ys = np.asarray(ys, dtype=np.float64)
    if len(ys) == 0:
        raise ValidationError("no encodings")
    n, P = ys.shape[0], ys.shape[1]
    norm = ys / (np.linalg.norm(ys, axis=2, keepdims=True) + 1e-12)
    perms = np.empty((n, P), dtype=np.int64)
    perms[ref_index] = np.arange(P)
    order = [ref_index] + [j for j in range(n) if j != ref_index]
    template = norm[ref_index].copy()
    count = 1
    for j in order[1:]:
        G = (template / count) @ norm[j].T
        perms[j] = solve_assignment(-G).mapping
        template += norm[j][perms[j]]
        count += 1
    if n > 2:
        # keep perms[ref] = identity: the reference defines the slot labels
        for j in order[1:]:
            G = (template - norm[j][perms[j]]) @ norm[j].T
            perms[j] = solve_assignment(-G).mapping
    return perms


def recover_global_perm(model, xs, ys, m, local_perms):
    """One assignment on the summed patch-score matrices maps original patch
    positions to reference slots; wrong matches add uncorrelated noise."""
    Ex, Ey = _embed_all(model, xs, ys)
    P = Ex.shape[1]
    total = np.zeros((P, P))
    for i in range(len(xs)):
        j = int(m[i])
        aligned = Ey[j][local_perms[j]]
        total += Ex[i] @ aligned.T
    return solve_assignment(-total).mapping


def refine_matching(model, xs, ys, rho_star, local_perms):
    """Re-match with positions pinned: no inner assignment, just the mean
    same-position similarity for every (original, encoding) pair."""
    Ex, Ey = _embed_all(model, xs, ys)
    aligned = np.array([Ey[j][local_perms[j][rho_star]] for j in range(len(ys))])
    scores = np.einsum("ipk,jpk->ij", Ex, aligned) / Ex.shape[1]
    return solve_assignment(-scores).mapping


# --- boost loop --------------------------------------------------------------------

@dataclass
class AttackState:
    matching: np.ndarray  # m[i] = encoding row for original i
    local_perms: np.ndarray  # (N, a^2)
    ref_index: int = 0
    global_perm: np.ndarray = None  # rho*[p] = reference slot of position p
    extracted: object = None
    stage_log: list = field(default_factory=list)


def boost_loop(model, xs, ys, state, max_rounds=5):
    """Alternate global-permutation recovery and re-matching until stable."""
    m = np.asarray(state.matching)
    for round_no in range(max_rounds):
        rho = recover_global_perm(model, xs, ys, m, state.local_perms)
        m_new = refine_matching(model, xs, ys, rho, state.local_perms)
        state.global_perm = rho
        state.stage_log.append({
            "stage": f"boost-{round_no + 1}",
            "changed": int((m_new != m).sum()),
        })
        stable = np.array_equal(m_new, m)
        m = m_new
        state.matching = m
        if stable:
            break
    return state


# --- extraction ----------------------------------------------------------------------

@dataclass
class ExtractConfig:
    steps: int = 4000
    lr: float = 3e-3
    trim_frac: float = 0.25
    seed: int = 0
    weight_scale: float | None = None


def depermuted_targets(ys, m, local_perms, rho_star):
    """Target rows for each original: its matched encoding, un-shuffled into
    original patch-position order."""
    ys = np.asarray(ys, dtype=np.float64)
    out = np.empty((len(m),) + ys.shape[1:])
    for i, j in enumerate(m):
        out[i] = ys[int(j)][local_perms[int(j)][rho_star]]
    return out


def _encoder_forward(key, patches):
    # patches (N, P, L) -> latent, pre-activation, hidden, output rows
    z = nn.forward(key.patch_mlp, patches)
    pre = z + key.positional
    r = np.maximum(pre, 0.0)
    out = r @ key.final_W.T + key.final_b
    return z, pre, r, out


def extract_encoder(xs, ys, m, local_perms, rho_star, spec, cfg):
    """Fit a fresh key to (original, de-permuted encoding) pairs by Adam on
    trimmed mean squared error.

    After a short warmup the worst-fitting trim_frac of images is dropped
    from each step's gradient. A corrupted match points a whole image at
    the wrong target, so once the fit is roughly right those images are
    exactly the high-loss ones and the trim shuts them out.
    """
    xs = np.asarray(xs, dtype=np.float64)
    targets = depermuted_targets(ys, m, local_perms, rho_star)
    patches = np.array([encoder.patchify(spec, x) for x in xs])
    key = encoder.sample_key(spec, cfg.seed, weight_scale=cfg.weight_scale)

    hp = dict(lr=cfg.lr, beta1=0.9, beta2=0.999, eps=1e-8)
    opt_stack = nn.adam_init(key.patch_mlp, **hp)
    mom = {name: (np.zeros_like(arr), np.zeros_like(arr))
           for name, arr in (("pos", key.positional), ("W", key.final_W),
                             ("b", key.final_b))}
    n_img, n_patch = patches.shape[0], patches.shape[1]
    n_trim = int(cfg.trim_frac * n_img)
    warmup = cfg.steps // 5
    log = []
    for step in range(cfg.steps):
        z, pre, r, out = _encoder_forward(key, patches)
        diff = out - targets
        per_img = (diff**2).sum(axis=(1, 2))
        w = np.ones(n_img)
        if n_trim > 0 and step >= warmup:
            w[np.argsort(per_img)[n_img - n_trim:]] = 0.0
        n_rows = w.sum() * n_patch
        loss = float((w @ per_img) / n_rows)
        if not np.isfinite(loss):
            raise TrainingError(f"extraction diverged at step {step}")
        d_out = 2.0 * diff * w[:, None, None] / n_rows
        flat_r = r.reshape(-1, r.shape[-1])
        flat_dout = d_out.reshape(-1, d_out.shape[-1])
        gW = flat_dout.T @ flat_r
        gb = flat_dout.sum(axis=0)
        d_pre = (d_out @ key.final_W) * (pre > 0)
        g_pos = d_pre.sum(axis=0)
        g_stack = nn.backward(key.patch_mlp, patches, d_pre)

        new_stack, opt_stack = nn.opt_step(key.patch_mlp, g_stack, opt_stack)
        t = opt_stack.step
        upd = {}
        for name, theta, g in (("pos", key.positional, g_pos),
                               ("W", key.final_W, gW), ("b", key.final_b, gb)):
            m1, m2 = mom[name]
            m1 = hp["beta1"] * m1 + (1 - hp["beta1"]) * g
            m2 = hp["beta2"] * m2 + (1 - hp["beta2"]) * g * g
            mh = m1 / (1 - hp["beta1"] ** t)
            vh = m2 / (1 - hp["beta2"] ** t)
            upd[name] = theta - hp["lr"] * mh / (np.sqrt(vh) + hp["eps"])
            mom[name] = (m1, m2)
        key = encoder.EncoderKey(
            patch_mlp=new_stack, positional=upd["pos"], final_W=upd["W"],
            final_b=upd["b"], spec=spec, seed=key.seed,
            weight_scale=key.weight_scale,
        )
        if step % 100 == 0 or step == cfg.steps - 1:
            log.append({"step": step, "loss": loss})
    key.extraction_log = log
    return key


def extraction_residual(t_tilde, true_key, images):
    """Held-out relative residual between the fitted and true encoders."""
    num = den = 0.0
    for img in images:
        want = encoder.encode_rows(true_key, img)
        got = encoder.encode_rows(t_tilde, img)
        num += float(((got - want) ** 2).sum())
        den += float((want**2).sum())
    return float(np.sqrt(num / den))


def final_matching(t_tilde, xs, ys, local_perms, rho_star):
    """Nearest de-permuted encoding to each simulated encoding, one solve."""
    n = len(xs)
    sim = np.array([encoder.encode_rows(t_tilde, x) for x in xs])
    dep = np.array([ys[j][local_perms[j][rho_star]] for j in range(n)])
    flat_s = sim.reshape(n, -1)
    flat_d = dep.reshape(n, -1)
    d2 = ((flat_s**2).sum(1)[:, None] + (flat_d**2).sum(1)[None, :]
          - 2.0 * flat_s @ flat_d.T)
    costs = d2 / (sim.shape[1] * sim.shape[2])
    return solve_assignment(costs).mapping


# --- full pipeline ---------------------------------------------------------------------

@dataclass
class AttackConfig:
    seed: int = 0
    train: TrainConfig = None
    extract: ExtractConfig = None
    ref_index: int = 0
    max_rounds: int = 5
    skip_extraction: str = "auto"  # auto | always | never

    def __post_init__(self):
        if self.train is None:
            self.train = TrainConfig(seed=self.seed)
        if self.extract is None:
            self.extract = ExtractConfig(seed=self.seed)
        if self.skip_extraction not in ("auto", "always", "never"):
            raise ConfigError(f"bad skip_extraction {self.skip_extraction!r}")

    def to_dict(self):
        d = asdict(self)
        d["train"]["hidden"] = list(self.train.hidden)
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        if isinstance(d.get("train"), dict):
            t = dict(d["train"])
            if "hidden" in t:
                t["hidden"] = tuple(t["hidden"])
            d["train"] = TrainConfig(**t)
        if isinstance(d.get("extract"), dict):
            d["extract"] = ExtractConfig(**d["extract"])
        return AttackConfig(**d)


@dataclass
class AttackReport:
    guess: np.ndarray  # guess[p] = original index claimed for bundle row p
    stage_guesses: dict  # stage name -> guess at that point (same orientation)
    stage_log: list
    holdout_accuracy: float
    config: dict
    timings: dict  # seconds per stage; kept out of the deterministic payload

    def to_dict(self, with_timings=False):
        d = {
            "guess": [int(g) for g in self.guess],
            "stage_guesses": {k: [int(g) for g in v]
                              for k, v in self.stage_guesses.items()},
            "stage_log": self.stage_log,
            "holdout_accuracy": self.holdout_accuracy,
            "config": self.config,
        }
        if with_timings:
            d["timings"] = self.timings
        return d


def invert_perm(p):
    p = np.asarray(p, dtype=np.int64)
    inv = np.empty_like(p)
    inv[p] = np.arange(len(p))
    return inv


def run_attack(bundle, cfg=None):
    """Execute every stage against a bundle. Never touches solution data."""
    cfg = cfg or AttackConfig()
    spec = bundle.spec
    xs, ys = bundle.originals, bundle.encodings
    n = len(xs)
    timings, stage_guesses = {}, {}

    def clock(name, fn):
        t0 = time.perf_counter()
        out = fn()
        timings[name] = time.perf_counter() - t0
        return out

    if n == 1:
        guess = np.zeros(1, dtype=np.int64)
        return AttackReport(guess=guess, stage_guesses={"final": guess.copy()},
                            stage_log=[{"stage": "trivial", "n": 1}],
                            holdout_accuracy=float("nan"),
                            config=cfg.to_dict(), timings={})

    pair_seed = int(rng.spawn_seeds(cfg.seed, 1, "attack.pairs")[0])
    train_seed = int(rng.spawn_seeds(cfg.seed, 1, "attack.train")[0])
    pairs = clock("pairs", lambda: build_pair_dataset(
        xs, cfg.train.num_encoders, spec, pair_seed,
        weight_scale=cfg.train.weight_scale))
    model = clock("train", lambda: train_patch_sim(
        pairs, replace(cfg.train, seed=train_seed)))
    model = model.recalibrate(np.asarray(ys).reshape(-1, spec.out_width))

    m0 = clock("initial", lambda: initial_matching(model, xs, ys))
    stage_guesses["initial"] = invert_perm(m0)

    local = clock("local-perms", lambda: recover_local_perms(ys, cfg.ref_index))
    state = AttackState(matching=m0, local_perms=local, ref_index=cfg.ref_index)
    state.stage_log.append({"stage": "initial", "n": n})

    state = clock("boost", lambda: boost_loop(
        model, xs, ys, state, max_rounds=cfg.max_rounds))
    stage_guesses["boost"] = invert_perm(state.matching)

    boost_stable = state.stage_log[-1].get("changed") == 0
    skip = (cfg.skip_extraction == "always"
            or (cfg.skip_extraction == "auto" and boost_stable))
    if skip:
        state.stage_log.append({"stage": "extraction", "skipped": True})
        final = state.matching
    else:
        ecfg = replace(cfg.extract,
                       seed=int(rng.spawn_seeds(cfg.seed, 1, "attack.extract")[0]))
        t_tilde = clock("extract", lambda: extract_encoder(
            xs, ys, state.matching, state.local_perms, state.global_perm,
            spec, ecfg))
        state.extracted = t_tilde
        final = clock("final", lambda: final_matching(
            t_tilde, xs, ys, state.local_perms, state.global_perm))
        state.stage_log.append({"stage": "extraction", "skipped": False})
    stage_guesses["final"] = invert_perm(final)

    return AttackReport(
        guess=invert_perm(final), stage_guesses=stage_guesses,
        stage_log=state.stage_log, holdout_accuracy=model.holdout_accuracy,
        config=cfg.to_dict(), timings=timings,
    )
