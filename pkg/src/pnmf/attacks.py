"""Parameter-free adversarial evaluation in feature space.

Two attacks under one L-inf budget: a momentum projected-gradient attack
with automatic step halving at shrinking checkpoints, and a black-box
random-search attack proposing contiguous +-eps blocks (the 1-D
adaptation of square patches).  The ensemble counts a sample robust only
if it is classified correctly clean and survives every attack.

Attack targets expose probability scores and (for the white-box attack)
per-sample input gradients; the defended pipeline averages both over K
fixed-seed purification draws so the attack adapts to the stochastic
defense while staying deterministic.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from pnmf import classifier as cls
from pnmf import neuralkit as nk
from pnmf.denoiser import DenoiserBundle, embed_time
from pnmf.errors import BadConfig, ScheduleMismatch, TargetContractError
from pnmf.rng import gaussians, keyed_rng


@dataclass
class AttackConfig:
    epsilon: float = 0.10
    apgd_iters: int = 100
    apgd_restarts: int = 1
    apgd_momentum: float = 0.75
    apgd_rho: float = 0.75
    # checkpoint spacing as fractions of the iteration budget
    apgd_ckpt_first: float = 0.22
    apgd_ckpt_decrement: float = 0.03
    apgd_ckpt_min: float = 0.06
    square_queries: int = 5000
    square_p_init: float = 0.8
    clamp_lo: float = -1.0
    clamp_hi: float = 1.0
    eot_K: int = 8
    seed: int = 0

    def validate(self):
        if self.epsilon < 0:
            raise BadConfig("epsilon must be >= 0")
        if self.apgd_iters < 1 or self.square_queries < 0:
            raise BadConfig("iteration/query budgets must be positive")
        if self.clamp_lo >= self.clamp_hi:
            raise BadConfig("clamp box is empty")


class BaselineTarget:
    """Deterministic classifier on selected features (rows = samples)."""

    def __init__(self, bundle: cls.ClassifierBundle):
        self.bundle = bundle

    def proba(self, x_rows, indices=None):
        return cls.predict_proba(self.bundle, np.asarray(x_rows, dtype=np.float64).T)

    def loss_and_grad(self, x_rows, y, indices=None):
        logits = nk.forward(self.bundle.net, x_rows, stop_before_softmax=True)
        losses = nk.cross_entropy_from_logits(logits, y)
        grads = nk.input_gradient(self.bundle.net, x_rows, "cross_entropy", y)
        return losses, grads


class DefendedTarget:
    """Purify-then-classify pipeline with EOT over K fixed-seed draws.

    Scores and gradients average over noise draws keyed by
    (seed, "attack-eot", sample, draw); the draws are fixed once per
    sample for the whole attack, independent of the defense's own
    evaluation seeds.
    """

    def __init__(self, clf: cls.ClassifierBundle, den: DenoiserBundle,
                 schedule, t_pur: int, K: int, seed: int):
        if schedule.checksum() != den.schedule_ref:
            raise ScheduleMismatch("denoiser bundle does not match this schedule")
        self.clf = clf
        self.den = den
        self.t_pur = int(t_pur)
        self.K = int(K)
        self.seed = int(seed)
        self.abar = float(schedule.alpha_bar[self.t_pur - 1])
        self.noise_scale = float(np.sqrt(1.0 - self.abar))
        self._emb = embed_time(float(self.t_pur), den.embed_dim)
        self._eps_cache: dict = {}

    def _eps(self, indices, dim):
        out = np.empty((len(indices), self.K, dim))
        for row, idx in enumerate(indices):
            idx = int(idx)
            if idx not in self._eps_cache:
                draws = np.empty((self.K, dim))
                for k in range(self.K):
                    draws[k] = gaussians(keyed_rng(self.seed, "attack-eot", idx, k), dim)
                self._eps_cache[idx] = draws
            out[row] = self._eps_cache[idx]
        return out

    def _denoised(self, x_rows, eps_k):
        xt = np.sqrt(self.abar) * x_rows + self.noise_scale * eps_k
        net_in = np.concatenate([xt, np.tile(self._emb, (xt.shape[0], 1))], axis=1)
        raw = nk.forward(self.den.net, net_in)
        z = xt + self.noise_scale * raw if self.den.head == "noise_scaled" else raw
        return net_in, z

    def proba(self, x_rows, indices):
        x_rows = np.asarray(x_rows, dtype=np.float64)
        eps = self._eps(indices, x_rows.shape[1])
        acc = np.zeros((x_rows.shape[0], 2))
        for k in range(self.K):
            _, z = self._denoised(x_rows, eps[:, k, :])
            acc += nk.forward(self.clf.net, z)
        return acc / self.K

    def loss_and_grad(self, x_rows, y, indices):
        x_rows = np.asarray(x_rows, dtype=np.float64)
        n, dim = x_rows.shape
        eps = self._eps(indices, dim)
        losses = np.zeros(n)
        grads = np.zeros((n, dim))
        for k in range(self.K):
            net_in, z = self._denoised(x_rows, eps[:, k, :])
            logits = nk.forward(self.clf.net, z, stop_before_softmax=True)
            losses += nk.cross_entropy_from_logits(logits, y)
            gz = nk.input_gradient(self.clf.net, z, "cross_entropy", y)
            g_net = nk.vjp_input(self.den.net, net_in, gz)[:, :dim]
            if self.den.head == "noise_scaled":
                g_xt = gz + self.noise_scale * g_net
            else:
                g_xt = g_net
            grads += np.sqrt(self.abar) * g_xt
        return losses / self.K, grads / self.K


def _project(z, x, eps, lo, hi):
    return np.clip(np.clip(z, x - eps, x + eps), lo, hi)


def _margin(probs, y):
    """Score margin p_correct - p_best_other; negative means misclassified."""
    n = probs.shape[0]
    correct = probs[np.arange(n), y]
    masked = probs.copy()
    masked[np.arange(n), y] = -np.inf
    return correct - masked.max(axis=1)


def apgd_ce(target, x, y, cfg: AttackConfig, indices=None):
    """Momentum PGD on cross-entropy with automatic step halving.

    Step size starts at 2*eps and halves at checkpoints spaced per the
    published schedule (first at 0.22 of the budget, gaps shrinking by
    0.03 of the budget down to 0.06) whenever too few steps improved
    the loss or both step and best loss stagnated; on halving the
    search restarts from the best point.  Returns one adversarial row
    per input row: the first misclassifying iterate where one was
    found, otherwise the best-loss iterate (over restarts).
    """
    cfg.validate()
    if not hasattr(target, "loss_and_grad"):
        raise TargetContractError("target exposes no loss_and_grad; use the score-only attack")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).astype(int)
    n, _ = x.shape
    if indices is None:
        indices = np.arange(n)
    if cfg.epsilon == 0.0:
        return x.copy()

    out = None
    out_flipped = np.zeros(n, dtype=bool)
    out_loss = np.full(n, -np.inf)
    for restart in range(max(cfg.apgd_restarts, 1)):
        x_r, flipped_r, loss_r = _apgd_run(target, x, y, cfg, indices, restart)
        if out is None:
            out, out_flipped, out_loss = x_r, flipped_r, loss_r
            continue
        new_flip = flipped_r & ~out_flipped
        better_loss = ~out_flipped & ~flipped_r & (loss_r > out_loss)
        take = new_flip | better_loss
        out = np.where(take[:, None], x_r, out)
        out_loss = np.where(take, loss_r, out_loss)
        out_flipped |= flipped_r
    return out


def _apgd_run(target, x, y, cfg: AttackConfig, indices, restart: int):
    n, dim = x.shape
    eps, lo, hi = cfg.epsilon, cfg.clamp_lo, cfg.clamp_hi
    n_iter = cfg.apgd_iters

    k_first = max(int(cfg.apgd_ckpt_first * n_iter), 1)
    k_decr = max(int(cfg.apgd_ckpt_decrement * n_iter), 1)
    k_min = max(int(cfg.apgd_ckpt_min * n_iter), 1)

    # seeded start on the ball surface, one stream per sample
    u = np.empty_like(x)
    for row, idx in enumerate(indices):
        rng = keyed_rng(cfg.seed, "apgd-init", int(idx), restart)
        u[row] = rng.uniform(-1.0, 1.0, dim)
    u /= np.maximum(np.abs(u).max(axis=1, keepdims=True), 1e-12)
    x_adv = _project(x + eps * u, x, eps, lo, hi)

    losses, grad = target.loss_and_grad(x_adv, y, indices)
    probs = target.proba(x_adv, indices)
    misclassified = _margin(probs, y) < 0.0

    x_best = x_adv.copy()
    loss_best = losses.copy()
    grad_best = grad.copy()
    x_best_adv = np.where(misclassified[:, None], x_adv, x)
    ever_flipped = misclassified.copy()

    step = 2.0 * eps * np.ones((n, 1))
    x_adv_old = x_adv.copy()
    # loss trace: row 0 is the start point, row i+1 is iterate i
    trace = np.zeros((n_iter + 1, n))
    trace[0] = losses
    counter_since_check = 0
    k = k_first
    loss_best_last_check = loss_best.copy()
    reduced_last_check = np.ones(n, dtype=bool)

    for i in range(n_iter):
        momentum = cfg.apgd_momentum if i > 0 else 1.0
        z = _project(x_adv + step * np.sign(grad), x, eps, lo, hi)
        x_new = _project(
            x_adv + momentum * (z - x_adv) + (1.0 - momentum) * (x_adv - x_adv_old),
            x, eps, lo, hi,
        )
        x_adv_old = x_adv
        x_adv = x_new

        losses, grad = target.loss_and_grad(x_adv, y, indices)
        probs = target.proba(x_adv, indices)
        flipped = _margin(probs, y) < 0.0
        x_best_adv = np.where((flipped & ~ever_flipped)[:, None], x_adv, x_best_adv)
        ever_flipped |= flipped

        trace[i + 1] = losses
        improved = losses > loss_best
        x_best = np.where(improved[:, None], x_adv, x_best)
        grad_best = np.where(improved[:, None], grad, grad_best)
        loss_best = np.where(improved, losses, loss_best)

        counter_since_check += 1
        if counter_since_check == k:
            # condition 1: too few improving steps over the last k iterates
            j = i + 1
            improving = np.sum(trace[j - k + 1 : j + 1] > trace[j - k : j], axis=0)
            cond1 = improving <= cfg.apgd_rho * k
            # condition 2: neither halved at the last check nor improved since
            cond2 = (~reduced_last_check) & (loss_best_last_check >= loss_best)
            halve = cond1 | cond2
            reduced_last_check = halve.copy()
            loss_best_last_check = loss_best.copy()
            if halve.any():
                step[halve] /= 2.0
                x_adv = np.where(halve[:, None], x_best, x_adv)
                grad = np.where(halve[:, None], grad_best, grad)
            k = max(k - k_decr, k_min)
            counter_since_check = 0

    return np.where(ever_flipped[:, None], x_best_adv, x_best), ever_flipped, loss_best


def _square_p(fraction: float, p_init: float) -> float:
    """Piecewise-constant width fraction, halving at 0.5%, 1%, 2%, 4% ... of budget."""
    p = p_init
    threshold = 0.005
    while fraction >= threshold:
        p /= 2.0
        threshold *= 2.0
    return p


def square_attack(target, x, y, cfg: AttackConfig, indices=None):
    """Random-search attack needing only score access.

    Keeps a current best point; every query re-writes one contiguous
    coordinate block of the perturbation to +-eps (block width follows
    the decaying fraction schedule) and accepts on margin improvement.
    Samples stop at their first misclassifying point.
    """
    cfg.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).astype(int)
    n, dim = x.shape
    if indices is None:
        indices = np.arange(n)
    if cfg.epsilon == 0.0 or cfg.square_queries == 0:
        return x.copy()
    eps, lo, hi = cfg.epsilon, cfg.clamp_lo, cfg.clamp_hi

    rngs = [keyed_rng(cfg.seed, "square", int(idx)) for idx in indices]

    # query 1: stripe init with one random sign per coordinate
    signs = np.stack([rng.integers(0, 2, dim) * 2.0 - 1.0 for rng in rngs])
    x_best = np.clip(x + eps * signs, lo, hi)
    margin_best = _margin(target.proba(x_best, indices), y)
    done = margin_best < 0.0

    for q in range(1, cfg.square_queries):
        if done.all():
            break
        p = _square_p(q / cfg.square_queries, cfg.square_p_init)
        width = min(dim, max(1, int(np.ceil(p * dim))))
        x_new = x_best.copy()
        active = np.flatnonzero(~done)
        for row in active:
            start = int(rngs[row].integers(0, dim - width + 1))
            sign = 1.0 if rngs[row].integers(0, 2) else -1.0
            x_new[row, start : start + width] = np.clip(
                x[row, start : start + width] + sign * eps, lo, hi
            )
        margin_new = np.full(n, np.inf)
        margin_new[active] = _margin(
            target.proba(x_new[active], np.asarray(indices)[active]), y[active]
        )
        accept = margin_new < margin_best
        x_best = np.where(accept[:, None], x_new, x_best)
        margin_best = np.where(accept, margin_new, margin_best)
        done |= margin_best < 0.0

    return x_best


@dataclass
class AttackReport:
    clean_accuracy: float
    per_attack_accuracy: dict
    robust_accuracy: float
    per_sample: list
    config: dict
    timings: dict = field(default_factory=dict)


def run_ensemble(target, eval_proba, X, labels, cfg: AttackConfig):
    """Sequential two-attack ensemble with canonical re-evaluation.

    ``target`` drives the attacks (attacker's view); ``eval_proba``
    maps feature columns to canonical class probabilities and decides
    clean correctness and survival.  Returns the report plus the final
    per-sample points and their canonical probabilities, for the
    metric table.  Samples misclassified clean count as non-robust
    without being attacked; each attack then runs on every clean-correct
    sample so per-attack accuracies are comparable.
    """
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    n = X.shape[1]
    if X.min() < cfg.clamp_lo or X.max() > cfg.clamp_hi:
        raise BadConfig("clamp box does not contain all clean inputs")

    clean_probs = eval_proba(X)
    clean_correct = np.argmax(clean_probs, axis=1) == y
    idx = np.flatnonzero(clean_correct)
    x_rows = X.T[idx]

    timings = {}
    survived = {}
    adv_points = {}
    for name, attack in (("apgd_ce", apgd_ce), ("square", square_attack)):
        t0 = time.perf_counter()
        if idx.size:
            x_adv = attack(target, x_rows, y[idx], cfg, indices=idx)
            probs_adv = eval_proba(x_adv.T)
            ok = np.argmax(probs_adv, axis=1) == y[idx]
        else:
            x_adv = np.zeros((0, X.shape[0]))
            ok = np.zeros(0, dtype=bool)
        timings[name] = time.perf_counter() - t0
        flags = np.zeros(n, dtype=bool)
        flags[idx] = ok
        survived[name] = flags
        adv_points[name] = x_adv

    survived_all = clean_correct & survived["apgd_ce"] & survived["square"]

    # final evaluation points: first successful attack's output, else clean
    X_final = X.copy()
    for row, sample in enumerate(idx):
        if not survived["apgd_ce"][sample]:
            X_final[:, sample] = adv_points["apgd_ce"][row]
        elif not survived["square"][sample]:
            X_final[:, sample] = adv_points["square"][row]
    robust_probs = eval_proba(X_final)

    per_sample = [
        {
            "index": int(i),
            "clean_correct": bool(clean_correct[i]),
            "survived_apgd": bool(survived["apgd_ce"][i]),
            "survived_square": bool(survived["square"][i]),
            "survived_all": bool(survived_all[i]),
        }
        for i in range(n)
    ]
    report = AttackReport(
        clean_accuracy=float(clean_correct.mean()),
        per_attack_accuracy={
            "apgd_ce": float((clean_correct & survived["apgd_ce"]).mean()),
            "square": float((clean_correct & survived["square"]).mean()),
        },
        robust_accuracy=float(survived_all.mean()),
        per_sample=per_sample,
        config=asdict(cfg),
        timings=timings,
    )
    return report, X_final, robust_probs
