"""Claim-validation network: word embedding, multi-width convolutions with
max-pooling, a bidirectional LSTM over the pooled feature sequence, and a
softmax head.  Forward/backward passes are written out by hand in float64
numpy so gradients can be verified against finite differences.

Input layout per report pair: call-log token ids, one separator id, detail
token ids, zero-padded (padding rows stay exactly zero) or truncated from
the detail end to the configured sequence length.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .records import NumericError

PAD_ID = 0
UNK_ID = 1
SEP_ID = 2
N_RESERVED = 3

JUNCTIONS = ("sequence", "pooled")


@dataclass(frozen=True)
class NetConfig:
    seq_len: int = 500
    embed_dim: int = 100
    filter_sizes: tuple = (2, 3, 4)
    filters_per_size: int = 200
    lstm_hidden: int = 64
    dense_dim: int = 128
    dropout_p: float = 0.5
    classes: int = 3
    batch_size: int = 200
    epochs: int = 15
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    junction: str = "sequence"
    lr_plateau_patience: int = 2

    def validate(self) -> None:
        if not self.filter_sizes or min(self.filter_sizes) < 1:
            raise ValueError("filter sizes must be >= 1")
        if self.seq_len < max(self.filter_sizes):
            raise ValueError("seq_len must cover the largest filter")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.junction not in JUNCTIONS:
            raise ValueError(f"junction must be one of {JUNCTIONS}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return {
            "seq_len": self.seq_len, "embed_dim": self.embed_dim,
            "filter_sizes": list(self.filter_sizes),
            "filters_per_size": self.filters_per_size,
            "lstm_hidden": self.lstm_hidden, "dense_dim": self.dense_dim,
            "dropout_p": self.dropout_p, "classes": self.classes,
            "batch_size": self.batch_size, "epochs": self.epochs,
            "learning_rate": self.learning_rate, "momentum": self.momentum,
            "seed": self.seed, "junction": self.junction,
            "lr_plateau_patience": self.lr_plateau_patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["filter_sizes"] = tuple(d.get("filter_sizes", (2, 3, 4)))
        return cls(**d)


class TokenVocab:
    """Token ids for the network; ids 0..2 are pad, unknown, separator."""

    def __init__(self, terms: list[str]):
        self.terms = list(terms)
        self.index = {t: N_RESERVED + i for i, t in enumerate(self.terms)}

    def __len__(self) -> int:
        return N_RESERVED + len(self.terms)

    def encode(self, tokens) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]

    def content_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.terms).encode("utf-8"))
        return digest.hexdigest()


def build_token_vocab(token_lists, max_size: int = 5000, min_count: int = 1) -> TokenVocab:
    counts: dict[str, int] = {}
    for tokens in token_lists:
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    terms = [t for t, c in ranked if c >= min_count][:max_size]
    return TokenVocab(terms)


@dataclass
class EpochStats:
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class ValidatorModel:
    config: NetConfig
    vocab: TokenVocab
    params: dict = field(default_factory=dict)

    def param_names(self) -> list[str]:
        return sorted(self.params)


def init_model(config: NetConfig, vocab: TokenVocab) -> ValidatorModel:
    """Seeded initialization: uniform embedding, fan-in scaled uniform weights."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    V, s = len(vocab), config.embed_dim
    F, D, H, C = (
        config.filters_per_size, config.dense_dim, config.lstm_hidden, config.classes,
    )
    params: dict[str, np.ndarray] = {}
    emb = rng.uniform(-0.05, 0.05, size=(V, s))
    emb[PAD_ID] = 0.0
    params["embedding"] = emb

    def fan_in(shape):
        limit = 1.0 / np.sqrt(shape[0])
        return rng.uniform(-limit, limit, size=shape)

    # biases start small but nonzero: all-zero biases park every padded
    # position exactly on the relu kink, which breaks finite differences
    def small(n):
        return rng.uniform(-0.05, 0.05, size=n)

    for h in config.filter_sizes:
        params[f"conv{h}_w"] = fan_in((h * s, F)).T.copy()  # (F, h*s)
        params[f"conv{h}_b"] = small(F)
    total_f = F * len(config.filter_sizes)
    params["dense_w"] = fan_in((total_f, D))
    params["dense_b"] = small(D)
    for direction in ("f", "b"):
        params[f"lstm_{direction}_wx"] = fan_in((D, 4 * H))
        params[f"lstm_{direction}_wh"] = fan_in((H, 4 * H))
        bias = small(4 * H)
        bias[H:2 * H] = 1.0  # forget gate starts open
        params[f"lstm_{direction}_b"] = bias
    params["out_w"] = fan_in((2 * H + total_f, C))
    params["out_b"] = small(C)
    for name, arr in params.items():
        params[name] = np.ascontiguousarray(arr, dtype=np.float64)
    return ValidatorModel(config=config, vocab=vocab, params=params)


def encode_pair(call_tokens, detail_tokens, vocab: TokenVocab) -> tuple[list[int], list[int]]:
    return vocab.encode(call_tokens), vocab.encode(detail_tokens)


def pair_to_ids(pair, config: NetConfig) -> np.ndarray:
    """Fixed-length id sequence: call log, separator, detail, zero padding.

    When the pair overflows, the detail tail is dropped first, then the
    separator, then the call-log tail; the separator survives whenever
    there is room for it.
    """
    call_ids, detail_ids = pair
    d = config.seq_len
    call = list(call_ids)[: d - 1] if d > 1 else []
    remaining = d - len(call) - 1
    detail = list(detail_ids)[: max(remaining, 0)]
    ids = call + [SEP_ID] + detail
    ids = ids[:d]
    ids.extend([PAD_ID] * (d - len(ids)))
    return np.asarray(ids, dtype=np.int64)


def batch_ids(pairs, config: NetConfig) -> np.ndarray:
    return np.stack([pair_to_ids(p, config) for p in pairs])


def embed(pair, model: ValidatorModel) -> np.ndarray:
    """Sequence-length x embed-dim matrix for one pair."""
    ids = pair_to_ids(pair, model.config)
    return model.params["embedding"][ids]


def conv_forward(matrix: np.ndarray, model: ValidatorModel) -> dict[int, np.ndarray]:
    """ReLU feature maps per filter size for one (seq_len x embed_dim) matrix."""
    out = {}
    for h in model.config.filter_sizes:
        maps, _ = _conv_maps(matrix[None, :, :], model, h)
        out[h] = maps[0]
    return out


def _conv_maps(E: np.ndarray, model: ValidatorModel, h: int):
    B, d, s = E.shape
    L = d - h + 1
    windows = np.lib.stride_tricks.sliding_window_view(E, h, axis=1)  # (B, L, s, h)
    windows = np.ascontiguousarray(windows.transpose(0, 1, 3, 2)).reshape(B, L, h * s)
    pre = windows @ model.params[f"conv{h}_w"].T + model.params[f"conv{h}_b"]
    return np.maximum(pre, 0.0), (windows, pre)


def max_pool(maps: dict[int, np.ndarray], model: ValidatorModel):
    """(pooled vector, pooled sequence) for one report's feature maps."""
    sizes = model.config.filter_sizes
    T = min(maps[h].shape[0] for h in sizes)
    pooled = np.concatenate([maps[h].max(axis=0) for h in sizes])
    sequence = np.concatenate([maps[h][:T, :] for h in sizes], axis=1)
    return pooled, sequence


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lstm_forward(U: np.ndarray, wx, wh, b):
    B, T, _ = U.shape
    H = wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = []
    for t in range(T):
        gates = U[:, t] @ wx + h @ wh + b
        i = _sigmoid(gates[:, :H])
        f = _sigmoid(gates[:, H:2 * H])
        o = _sigmoid(gates[:, 2 * H:3 * H])
        g = np.tanh(gates[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((h, c, i, f, o, g, tc))
        h = o * tc
        c = c_new
    return h, cache


def _lstm_backward(U, wx, wh, cache, dh_last):
    B, T, _ = U.shape
    H = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * H)
    dU = np.zeros_like(U)
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h_prev, c_prev, i, f, o, g, tc = cache[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dgates = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dg * (1.0 - g * g),
            ],
            axis=1,
        )
        dwx += U[:, t].T @ dgates
        dwh += h_prev.T @ dgates
        db += dgates.sum(axis=0)
        dU[:, t] = dgates @ wx.T
        dh = dgates @ wh.T
        dc = dc * f
    return dU, dwx, dwh, db


def bilstm_forward(sequence: np.ndarray, model: ValidatorModel) -> np.ndarray:
    """Concatenated final hidden states of the two opposite-direction passes."""
    U = sequence[None, :, :]
    p = model.params
    h_f, _ = _lstm_forward(U, p["lstm_f_wx"], p["lstm_f_wh"], p["lstm_f_b"])
    h_b, _ = _lstm_forward(U[:, ::-1], p["lstm_b_wx"], p["lstm_b_wh"], p["lstm_b_b"])
    return np.concatenate([h_f[0], h_b[0]])


def _forward_batch(model: ValidatorModel, ids: np.ndarray, train: bool, rng=None):
    """Full forward pass; returns probabilities and the backprop cache."""
    cfg = model.config
    p = model.params
    sizes = cfg.filter_sizes
    F = cfg.filters_per_size
    B = ids.shape[0]
    E = p["embedding"][ids]                              # (B, d, s)
    maps = {}
    conv_cache = {}
    for h in sizes:
        A, cc = _conv_maps(E, model, h)
        maps[h] = A
        conv_cache[h] = cc
    T = min(maps[h].shape[1] for h in sizes)
    pooled = np.concatenate([maps[h].max(axis=1) for h in sizes], axis=1)
    argmaxes = {h: maps[h].argmax(axis=1) for h in sizes}
    seq = np.concatenate([maps[h][:, :T, :] for h in sizes], axis=2)

    q = cfg.dropout_p
    if train and q > 0.0:
        if rng is None:
            raise ValueError("training mode needs an rng for dropout")
        keep = 1.0 - q
        mask_p = (rng.random(pooled.shape) < keep) / keep
        mask_s = (rng.random(seq.shape) < keep) / keep
    else:
        mask_p = None
        mask_s = None
    pooled_d = pooled * mask_p if mask_p is not None else pooled
    seq_d = seq * mask_s if mask_s is not None else seq

    if cfg.junction == "sequence":
        U_in = seq_d
    else:
        U_in = pooled_d[:, None, :]
    dense_pre = U_in @ p["dense_w"] + p["dense_b"]
    U = np.maximum(dense_pre, 0.0)

    h_f, cache_f = _lstm_forward(U, p["lstm_f_wx"], p["lstm_f_wh"], p["lstm_f_b"])
    U_rev = U[:, ::-1]
    h_b, cache_b = _lstm_forward(U_rev, p["lstm_b_wx"], p["lstm_b_wh"], p["lstm_b_b"])
    merged = np.concatenate([h_f, h_b], axis=1)

    z = np.concatenate([merged, pooled_d], axis=1)
    logits = z @ p["out_w"] + p["out_b"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    cache = {
        "ids": ids, "E": E, "maps": maps, "conv": conv_cache, "T": T,
        "pooled": pooled, "argmaxes": argmaxes, "mask_p": mask_p,
        "mask_s": mask_s, "pooled_d": pooled_d, "U_in": U_in,
        "dense_pre": dense_pre, "U": U, "U_rev": U_rev,
        "cache_f": cache_f, "cache_b": cache_b, "merged": merged,
        "z": z, "probs": probs, "B": B, "F": F, "sizes": sizes,
    }
    return probs, cache


def _backward_batch(model: ValidatorModel, cache: dict, y: np.ndarray) -> dict:
    """Mean cross-entropy gradients for every parameter tensor."""
    cfg = model.config
    p = model.params
    B = cache["B"]
    F = cache["F"]
    sizes = cache["sizes"]
    T = cache["T"]
    H = cfg.lstm_hidden

    probs = cache["probs"]
    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B

    grads: dict[str, np.ndarray] = {}
    z = cache["z"]
    grads["out_w"] = z.T @ dlogits
    grads["out_b"] = dlogits.sum(axis=0)
    dz = dlogits @ p["out_w"].T
    dmerged = dz[:, :2 * H]
    dpooled_d = dz[:, 2 * H:].copy()

    dU_f, dwx_f, dwh_f, db_f = _lstm_backward(
        cache["U"], p["lstm_f_wx"], p["lstm_f_wh"], cache["cache_f"], dmerged[:, :H]
    )
    dU_b_rev, dwx_b, dwh_b, db_b = _lstm_backward(
        cache["U_rev"], p["lstm_b_wx"], p["lstm_b_wh"], cache["cache_b"], dmerged[:, H:]
    )
    grads["lstm_f_wx"], grads["lstm_f_wh"], grads["lstm_f_b"] = dwx_f, dwh_f, db_f
    grads["lstm_b_wx"], grads["lstm_b_wh"], grads["lstm_b_b"] = dwx_b, dwh_b, db_b
    dU = dU_f + dU_b_rev[:, ::-1]

    ddense_pre = dU * (cache["dense_pre"] > 0)
    U_in = cache["U_in"]
    D = p["dense_w"].shape[1]
    grads["dense_w"] = U_in.reshape(-1, U_in.shape[-1]).T @ ddense_pre.reshape(-1, D)
    grads["dense_b"] = ddense_pre.reshape(-1, D).sum(axis=0)
    dU_in = ddense_pre @ p["dense_w"].T

    dseq = None
    if cfg.junction == "sequence":
        dseq = dU_in
    else:
        dpooled_d += dU_in[:, 0, :]

    if cache["mask_p"] is not None:
        dpooled = dpooled_d * cache["mask_p"]
    else:
        dpooled = dpooled_d
    if dseq is not None and cache["mask_s"] is not None:
        dseq = dseq * cache["mask_s"]

    dE = np.zeros_like(cache["E"])
    rows = np.arange(B)[:, None]
    cols = np.arange(F)[None, :]
    for gi, h in enumerate(sizes):
        A = cache["maps"][h]
        dA = np.zeros_like(A)
        # max-pool routes the pooled-vector gradient to each filter's argmax
        am = cache["argmaxes"][h]
        np.add.at(dA, (rows, am, cols), dpooled[:, gi * F:(gi + 1) * F])
        if dseq is not None:
            dA[:, :T, :] += dseq[:, :, gi * F:(gi + 1) * F]
        windows, pre = cache["conv"][h]
        dpre = dA * (pre > 0)
        flat_w = windows.reshape(-1, windows.shape[-1])
        flat_d = dpre.reshape(-1, F)
        grads[f"conv{h}_w"] = flat_d.T @ flat_w
        grads[f"conv{h}_b"] = flat_d.sum(axis=0)
        dwindows = (flat_d @ p[f"conv{h}_w"]).reshape(windows.shape)
        dwin4 = dwindows.reshape(B, -1, h, cfg.embed_dim)
        L = dwin4.shape[1]
        for j in range(h):
            dE[:, j:j + L, :] += dwin4[:, :, j, :]

    demb = np.zeros_like(p["embedding"])
    np.add.at(demb, cache["ids"], dE)
    demb[PAD_ID] = 0.0  # padding row is a structural zero, not a parameter
    grads["embedding"] = demb
    return grads


def _loss(probs: np.ndarray, y: np.ndarray) -> float:
    picked = np.clip(probs[np.arange(y.shape[0]), y], 1e-300, None)
    return float(-np.log(picked).mean())


def forward(pair, model: ValidatorModel, mode: str = "infer", rng=None) -> np.ndarray:
    """Class probabilities for one (call tokens ids, detail token ids) pair."""
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    ids = pair_to_ids(pair, model.config)[None, :]
    probs, _ = _forward_batch(model, ids, train=(mode == "train"), rng=rng)
    return probs[0]


def predict_proba(model: ValidatorModel, pairs) -> np.ndarray:
    """Deterministic inference probabilities, one row per pair."""
    cfg = model.config
    out = np.empty((len(pairs), cfg.classes))
    bs = max(cfg.batch_size, 1)
    for start in range(0, len(pairs), bs):
        chunk = pairs[start:start + bs]
        ids = batch_ids(chunk, cfg)
        probs, _ = _forward_batch(model, ids, train=False)
        out[start:start + len(chunk)] = probs
    return out


def train_validator(
    pairs,
    labels,
    config: NetConfig,
    vocab: TokenVocab,
    val_pairs=None,
    val_labels=None,
) -> tuple[ValidatorModel, list[EpochStats]]:
    """Mini-batch momentum gradient descent on mean cross-entropy.

    Seeded shuffling and a fixed parameter-update order make runs with the
    same config byte-reproducible.  The learning rate halves after the
    validation loss fails to improve for two consecutive epochs.  If no
    validation set is passed, a tenth of the data (at least one record) is
    carved off deterministically.
    """
    config.validate()
    model = init_model(config, vocab)
    history: list[EpochStats] = []
    if config.epochs == 0 or not pairs:
        return model, history

    y = np.asarray(labels, dtype=np.int64)
    if val_pairs is None:
        n_val = max(1, len(pairs) // 10) if len(pairs) >= 5 else 0
        split_rng = np.random.default_rng(config.seed + 1)
        order = split_rng.permutation(len(pairs))
        val_idx = order[:n_val]
        train_idx = order[n_val:]
        val_pairs = [pairs[i] for i in val_idx]
        val_labels = y[val_idx]
        train_pairs = [pairs[i] for i in train_idx]
        train_y = y[train_idx]
    else:
        train_pairs = list(pairs)
        train_y = y
        val_labels = np.asarray(val_labels, dtype=np.int64)

    ids_all = batch_ids(train_pairs, config)
    val_ids = batch_ids(val_pairs, config) if len(val_pairs) else None

    rng = np.random.default_rng(config.seed + 2)
    velocity = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    lr = config.learning_rate
    best_val = np.inf
    stall = 0
    n = ids_all.shape[0]
    bs = max(1, config.batch_size)
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, bs):
            sel = order[start:start + bs]
            probs, cache = _forward_batch(model, ids_all[sel], train=True, rng=rng)
            batch_loss = _loss(probs, train_y[sel])
            if not np.isfinite(batch_loss):
                raise NumericError(
                    "training loss is not finite; try a smaller learning_rate"
                )
            loss_sum += batch_loss * sel.size
            grads = _backward_batch(model, cache, train_y[sel])
            for name in model.param_names():
                v = velocity[name]
                v *= config.momentum
                v -= lr * grads[name]
                model.params[name] += v
        train_loss = loss_sum / n
        if val_ids is not None:
            val_probs, _ = _forward_batch(model, val_ids, train=False)
            val_loss = _loss(val_probs, val_labels)
            val_acc = float((val_probs.argmax(axis=1) == val_labels).mean())
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                stall = 0
            else:
                stall += 1
                if stall >= config.lr_plateau_patience:
                    lr *= 0.5
                    stall = 0
        else:
            val_loss = float("nan")
            val_acc = float("nan")
        history.append(EpochStats(train_loss, val_loss, val_acc))
    return model, history


def grad_check(
    model: ValidatorModel,
    pair,
    label: int,
    epsilon: float = 1e-5,
    n_samples: int = 200,
    seed: int = 0,
    corrupt=None,
) -> float:
    """Max relative analytic-vs-central-difference error over sampled weights.

    Samples at least `n_samples` coordinates spread over every parameter
    group (embedding coordinates come from rows the pair actually uses).
    `corrupt` = (name, flat_index, factor) scales one analytic entry, for
    checking that the comparison actually detects broken gradients.
    """
    ids = pair_to_ids(pair, model.config)[None, :]
    y = np.asarray([label], dtype=np.int64)
    probs, cache = _forward_batch(model, ids, train=False)
    grads = _backward_batch(model, cache, y)
    if corrupt is not None:
        name, flat_index, factor = corrupt
        flat = grads[name].reshape(-1)
        flat[flat_index] = flat[flat_index] * factor + (1e-6 if flat[flat_index] == 0 else 0.0)

    rng = np.random.default_rng(seed)
    names = model.param_names()
    per_group = max(2, int(np.ceil(n_samples / len(names))))
    max_err = 0.0
    used_rows = sorted(set(int(i) for i in ids.ravel()) - {PAD_ID})
    for name in names:
        arr = model.params[name]
        if name == "embedding":
            coords = []
            for _ in range(per_group):
                row = used_rows[rng.integers(len(used_rows))]
                col = int(rng.integers(arr.shape[1]))
                coords.append(row * arr.shape[1] + col)
        else:
            size = arr.size
            take = min(per_group, size)
            coords = rng.choice(size, size=take, replace=False).tolist()
        if corrupt is not None and corrupt[0] == name and corrupt[1] not in coords:
            coords.append(corrupt[1])
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for ci in coords:
            orig = flat[ci]
            flat[ci] = orig + epsilon
            probs_hi, _ = _forward_batch(model, ids, train=False)
            hi = _loss(probs_hi, y)
            flat[ci] = orig - epsilon
            probs_lo, _ = _forward_batch(model, ids, train=False)
            lo = _loss(probs_lo, y)
            flat[ci] = orig
            numeric = (hi - lo) / (2.0 * epsilon)
            analytic = gflat[ci]
            # below ~1e-6 the difference quotient is dominated by float64
            # round-off in the loss, so agreement there counts as exact
            if abs(numeric) < 1e-6 and abs(analytic) < 1e-6:
                continue
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric))
            max_err = max(max_err, err)
    return max_err


def model_payload(model: ValidatorModel) -> tuple[dict, dict]:
    meta = {
        "kind": "validator",
        "config": model.config.to_dict(),
        "vocab_hash": model.vocab.content_hash(),
        "vocab_terms": model.vocab.terms,
    }
    return meta, dict(model.params)


def model_from_payload(meta: dict, arrays: dict) -> ValidatorModel:
    config = NetConfig.from_dict(meta["config"])
    vocab = TokenVocab(meta["vocab_terms"])
    return ValidatorModel(config=config, vocab=vocab, params=dict(arrays))
