"""Desk-scale simulator for the cone effect and modality-gap theory.

Pieces: random deep networks whose normalized outputs concentrate with depth,
the attraction/repulsion decomposition of the contrastive (InfoNCE) loss,
a law-of-total-variance decomposition over random weight draws, and a toy
two-encoder contrastive trainer that tracks the inter-modality gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEmbeddingError, NumericError, ParameterError

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass(frozen=True)
class RandomNetSpec:
    depth: int
    width: int
    input_dim: int
    activation: str = "relu"
    init_scale: float = 1.0
    seed: int = 0
    init_kind: str = "gaussian"  # or "orthogonal"

    def __post_init__(self):
        if self.depth < 0:
            raise ParameterError(f"depth must be >= 0, got {self.depth}")
        if self.width < 1:
            raise ParameterError(f"width must be >= 1, got {self.width}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if self.init_kind not in ("gaussian", "orthogonal"):
            raise ParameterError(f"unknown init_kind {self.init_kind!r}")


@dataclass
class SyntheticCorpus:
    samples: np.ndarray  # N x input_dim
    diversity: float     # cluster count * within-cluster spread

    def __post_init__(self):
        if self.samples.shape[0] < 2:
            raise ParameterError("corpus needs at least 2 samples")


@dataclass(frozen=True)
class InfoNceBreakdown:
    total_loss: float
    attraction: float
    repulsion: float
    temperature: float
    batch_size: int


def _act(name: str, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "tanh":
        return np.tanh(a)
    return a


def _act_grad(name: str, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (a > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - np.tanh(a) ** 2
    return np.ones_like(a)


def init_params(spec: RandomNetSpec, rng: np.random.Generator | None = None):
    """Layer weights (width x fan_in) and zero biases for a spec."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    params = []
    fan_in = spec.input_dim
    for _ in range(spec.depth):
        if spec.init_kind == "orthogonal":
            a = rng.standard_normal((max(spec.width, fan_in), fan_in))
            q, _ = np.linalg.qr(a)
            w = spec.init_scale * q[: spec.width, :fan_in]
        else:
            w = rng.standard_normal((spec.width, fan_in)) * (
                spec.init_scale / np.sqrt(fan_in)
            )
        params.append((w, np.zeros(spec.width)))
        fan_in = spec.width
    return params


def forward_raw(params, activation: str, inputs: np.ndarray) -> np.ndarray:
    """Run inputs through the layers without output normalization."""
    h = np.asarray(inputs, dtype=np.float64)
    for w, b in params:
        h = _act(activation, h @ w.T + b)
    return h


def random_net_forward(spec: RandomNetSpec, inputs: np.ndarray) -> np.ndarray:
    """Normalized outputs of a randomly initialized network (depth 0 = inputs)."""
    h = forward_raw(init_params(spec), spec.activation, inputs)
    norms = np.linalg.norm(h, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise DegenerateEmbeddingError(
            f"network output row {bad[0]} has near-zero norm {norms[bad[0]]:.3e}"
        )
    return h / norms[:, None]


def cone_metrics(embeddings: np.ndarray):
    """(mean resultant length, mean pairwise cosine) of unit rows.

    The pairwise mean over all unordered pairs is computed exactly through
    the identity sum_{i!=j} x_i.x_j = |sum x|^2 - N, so no subsampling is
    needed at any N.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ParameterError("cone_metrics needs at least 2 rows for the pairwise term")
    norms = np.linalg.norm(x, axis=1)
    if np.abs(norms - 1.0).max() > 1e-6:
        idx = int(np.abs(norms - 1.0).argmax())
        raise ParameterError(f"row {idx} is not unit-norm (norm {norms[idx]:.8f})")
    s = x.sum(axis=0)
    ss = float(s @ s)
    r = np.sqrt(ss) / n
    mean_cos = (ss - n) / (n * (n - 1))
    return float(r), float(mean_cos)


def make_corpus(
    n_samples: int,
    input_dim: int,
    n_clusters: int,
    cluster_spread: float,
    seed: int = 0,
) -> SyntheticCorpus:
    """Mixture-of-Gaussians corpus; diversity = n_clusters * cluster_spread.

    Cluster centers are drawn once at unit scale; the spread knob controls
    within-cluster variation only, so halving it does not simply rescale
    the whole corpus.
    """
    if n_clusters < 1:
        raise ParameterError(f"n_clusters must be >= 1, got {n_clusters}")
    if cluster_spread < 0:
        raise ParameterError(f"cluster_spread must be >= 0, got {cluster_spread}")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_clusters, input_dim))
    assignment = rng.integers(0, n_clusters, size=n_samples)
    noise = rng.standard_normal((n_samples, input_dim)) * cluster_spread
    return SyntheticCorpus(
        samples=centers[assignment] + noise,
        diversity=n_clusters * cluster_spread,
    )


def variance_decomposition(
    spec: RandomNetSpec, corpus: SyntheticCorpus, n_weight_draws: int
):
    """Split total output variance into data-induced and weight-induced terms.

    All three terms are estimated from the same weight draws with population
    variances, which makes data_term + weight_term = total an exact identity
    up to floating point.
    """
    if n_weight_draws < 1:
        raise ParameterError("n_weight_draws must be >= 1")
    if corpus.samples.shape[0] < 2:
        raise ParameterError("corpus must contain at least 2 samples")
    children = np.random.SeedSequence(spec.seed).spawn(n_weight_draws)
    outputs = []
    for child in children:
        params = init_params(spec, np.random.default_rng(child))
        outputs.append(forward_raw(params, spec.activation, corpus.samples))
    stack = np.stack(outputs)  # K x N x width

    per_draw_var = stack.var(axis=1)    # K x width, variance over the corpus
    per_draw_mean = stack.mean(axis=1)  # K x width
    data_term = float(per_draw_var.mean(axis=0).sum())
    weight_term = float(per_draw_mean.var(axis=0).sum())
    total = float(stack.reshape(-1, stack.shape[-1]).var(axis=0).sum())
    return data_term, weight_term, total


def infonce_decomposed(
    image_batch: np.ndarray, text_batch: np.ndarray, temperature: float
) -> InfoNceBreakdown:
    """Contrastive loss split into a positive-pair pull and a log-sum-exp push.

    Per sample i: attraction = -v_i.t_i / tau, repulsion = logsumexp_j(v_i.t_j / tau);
    batch means are reported and sum exactly to the total loss.
    """
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    v = np.asarray(image_batch, dtype=np.float64)
    t = np.asarray(text_batch, dtype=np.float64)
    if v.shape != t.shape or v.ndim != 2:
        raise ParameterError(f"batch shapes differ: {v.shape} vs {t.shape}")
    b = v.shape[0]
    if b < 1:
        raise ParameterError("batch must contain at least one pair")
    sims = v @ t.T / temperature
    smax = sims.max(axis=1)
    repulsion = smax + np.log(np.exp(sims - smax[:, None]).sum(axis=1))
    attraction = -np.diag(sims)
    return InfoNceBreakdown(
        total_loss=float((attraction + repulsion).mean()),
        attraction=float(attraction.mean()),
        repulsion=float(repulsion.mean()),
        temperature=float(temperature),
        batch_size=b,
    )


def _forward_with_cache(params, activation, x):
    h = x
    pre_acts = []
    hiddens = [x]
    for w, b in params:
        a = h @ w.T + b
        pre_acts.append(a)
        h = _act(activation, a)
        hiddens.append(h)
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    if (norms < 1e-12).any():
        raise DegenerateEmbeddingError("encoder output row collapsed to zero norm")
    return h / norms, h, norms, pre_acts, hiddens


def _backprop(params, activation, pre_acts, hiddens, raw, norms, grad_z):
    # Through z = h / |h|: dL/dh = (g - (g.z) z) / |h|
    z = raw / norms
    g = (grad_z - (np.sum(grad_z * z, axis=1, keepdims=True)) * z) / norms
    grads = [None] * len(params)
    for layer in reversed(range(len(params))):
        g = g * _act_grad(activation, pre_acts[layer])
        grads[layer] = (g.T @ hiddens[layer], g.sum(axis=0))
        if layer > 0:
            g = g @ params[layer][0]
    return grads


def train_toy_clip(
    image_corpus: SyntheticCorpus,
    text_corpus: SyntheticCorpus,
    image_spec: RandomNetSpec,
    text_spec: RandomNetSpec,
    steps: int,
    temperature: float = 0.07,
    learning_rate: float = 0.1,
    batch_size: int | None = None,
    log_every: int = 10,
    seed: int = 0,
):
    """Plain gradient descent on symmetric InfoNCE over two small encoders.

    Row i of each corpus is a positive pair. Records the centroid gap and
    per-modality concentration along the trajectory; deterministic given seed.
    Returns a list of {step, loss, gap_norm, r_image, r_text} records.
    """
    if temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    xi = np.asarray(image_corpus.samples, dtype=np.float64)
    xt = np.asarray(text_corpus.samples, dtype=np.float64)
    if xi.shape[0] != xt.shape[0]:
        raise ParameterError("corpora must have matched row counts")
    if image_spec.depth < 1 or text_spec.depth < 1:
        raise ParameterError("toy encoders need depth >= 1 to be trainable")
    n = xi.shape[0]
    params_v = init_params(image_spec)
    params_t = init_params(text_spec)
    rng = np.random.default_rng(seed)
    bsz = n if batch_size is None else min(batch_size, n)

    def log_record(step, loss):
        zv = random_net_like(params_v, image_spec.activation, xi)
        zt = random_net_like(params_t, text_spec.activation, xt)
        gap = float(np.linalg.norm(zv.mean(axis=0) - zt.mean(axis=0)))
        return {
            "step": step,
            "loss": loss,
            "gap_norm": gap,
            "r_image": float(np.linalg.norm(zv.mean(axis=0))),
            "r_text": float(np.linalg.norm(zt.mean(axis=0))),
        }

    trajectory = [log_record(0, None)]
    for step in range(1, steps + 1):
        if bsz < n:
            idx = rng.choice(n, size=bsz, replace=False)
        else:
            idx = np.arange(n)
        zv, raw_v, nv, pre_v, hid_v = _forward_with_cache(
            params_v, image_spec.activation, xi[idx]
        )
        zt, raw_t, nt, pre_t, hid_t = _forward_with_cache(
            params_t, text_spec.activation, xt[idx]
        )
        b = len(idx)
        sims = zv @ zt.T / temperature
        smax = sims.max()
        # row softmax (image -> text) and column softmax (text -> image)
        e = np.exp(sims - smax)
        et = np.ascontiguousarray(e.T)
        # reduce both directions along the contiguous axis so a perfectly
        # symmetric state stays symmetric to the last bit
        row_sums = e.sum(axis=1, keepdims=True)
        col_sums = et.sum(axis=1, keepdims=True)
        p_row = e / row_sums
        p_col = (et / col_sums).T
        row_lse = np.log(row_sums[:, 0]) + smax
        col_lse = np.log(col_sums[:, 0]) + smax
        diag = np.diag(sims)
        loss = float(0.5 * ((row_lse - diag).mean() + (col_lse - diag).mean()))
        if not np.isfinite(loss):
            raise NumericError(f"toy contrastive loss diverged at step {step}")
        eye = np.eye(b)
        d_sims = ((p_row - eye) + (p_col - eye)) / (2.0 * b)
        grad_zv = d_sims @ zt / temperature
        grad_zt = np.ascontiguousarray(d_sims.T) @ zv / temperature
        grads_v = _backprop(
            params_v, image_spec.activation, pre_v, hid_v, raw_v, nv, grad_zv
        )
        grads_t = _backprop(
            params_t, text_spec.activation, pre_t, hid_t, raw_t, nt, grad_zt
        )
        params_v = [
            (w - learning_rate * gw, bb - learning_rate * gb)
            for (w, bb), (gw, gb) in zip(params_v, grads_v)
        ]
        params_t = [
            (w - learning_rate * gw, bb - learning_rate * gb)
            for (w, bb), (gw, gb) in zip(params_t, grads_t)
        ]
        if step % log_every == 0 or step == steps:
            trajectory.append(log_record(step, loss))
    return trajectory


def random_net_like(params, activation, inputs):
    """Normalized forward pass through explicit parameters."""
    h = forward_raw(params, activation, inputs)
    norms = np.linalg.norm(h, axis=1)
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise DegenerateEmbeddingError(
            f"output row {bad[0]} has near-zero norm {norms[bad[0]]:.3e}"
        )
    return h / norms[:, None]
