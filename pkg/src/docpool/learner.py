"""Trainable attention pooling over static positional windows, with a
one-hidden-layer classifier trained jointly on top.

Each window j owns a query vector q_j; attention over sentences is
softmax_n(q_j . emb(S_n) / sqrt(d)). The pooled document vector multiplies
the fixed positional window weights by the learned attention (and optionally
by per-sentence TF-IDF), L2-normalizes each window's sub-vector and
concatenates. Gradients are computed analytically in float64; a central
finite-difference check validates the backward pass.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import weighting
from .corpus import CollectionStats, Document
from .embed_store import EmbeddingMatrix
from .errors import FormatError, ValidationError
from .pert import PertWindowBank, build_window_bank, window_weights

MODES = ("att-pert", "att-tf-pert")
TASKS = ("multiclass", "multilabel")
DEFAULT_HIDDEN = 10

_EPS_NORM = 1e-12
_PARAM_NAMES = ("queries", "w1", "b1", "w2", "b2")


@dataclass
class TrainConfig:
    seed: int = 0
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    optimizer: str = "adam"
    patience: int = 5

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValidationError("learning_rate, epochs and batch_size must be positive")
        if self.patience <= 0:
            raise ValidationError("patience must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass(eq=False)
class PoolerModel:
    """Attention queries plus classifier parameters (all float64)."""

    queries: np.ndarray  # (J, d)
    w1: np.ndarray       # (J*d, H)
    b1: np.ndarray       # (H,)
    w2: np.ndarray       # (H, C)
    b2: np.ndarray       # (C,)
    mode: str
    task: str
    labels: list[str]
    history: list[dict] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if len(self.labels) != self.w2.shape[1]:
            raise ValidationError("label list does not match output width")

    @property
    def n_parts(self) -> int:
        return self.queries.shape[0]

    @property
    def dim(self) -> int:
        return self.queries.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "PoolerModel":
        return PoolerModel(
            queries=self.queries.copy(),
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            mode=self.mode,
            task=self.task,
            labels=list(self.labels),
        )


def init_model(
    dim: int,
    n_parts: int,
    labels: list[str],
    mode: str = "att-pert",
    task: str = "multiclass",
    hidden: int = DEFAULT_HIDDEN,
    seed: int = 0,
) -> PoolerModel:
    """Fresh model: zero queries (uniform attention, i.e. the static windowed
    pooling) and small random classifier weights."""
    rng = np.random.default_rng(seed)
    n_classes = len(labels)
    if n_classes < 1:
        raise ValidationError("need at least one label")
    return PoolerModel(
        queries=np.zeros((n_parts, dim)),
        w1=rng.normal(0.0, 1.0 / np.sqrt(n_parts * dim), size=(n_parts * dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, n_classes)),
        b2=np.zeros(n_classes),
        mode=mode,
        task=task,
        labels=list(labels),
    )


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def attention_weights(model: PoolerModel, embs: EmbeddingMatrix) -> np.ndarray:
    """Softmax attention of each window over sentences (J x N, rows sum to 1)."""
    if embs.dim != model.dim:
        raise ValidationError(f"dim mismatch: embeddings {embs.dim}, model {model.dim}")
    values = embs.values.astype(np.float64)
    scores = model.queries @ values.T / np.sqrt(model.dim)
    return _softmax_rows(scores)


def _pool_with_cache(
    model: PoolerModel,
    embs: EmbeddingMatrix,
    bank: PertWindowBank,
    tfidf_scores: np.ndarray | None,
) -> dict:
    if embs.dim != model.dim:
        raise ValidationError(f"dim mismatch: embeddings {embs.dim}, model {model.dim}")
    values = embs.values.astype(np.float64)
    n = embs.count
    positional = window_weights(bank, n)
    if model.mode == "att-tf-pert":
        if tfidf_scores is None:
            raise ValidationError("att-tf-pert pooling requires per-sentence tfidf scores")
        scale = np.asarray(tfidf_scores, dtype=np.float64)
        if scale.shape != (n,):
            raise ValidationError(f"tfidf scores have shape {scale.shape}, expected ({n},)")
    else:
        scale = np.ones(n)
    scores = model.queries @ values.T / np.sqrt(model.dim)
    attention = _softmax_rows(scores)
    coeff = positional * attention * scale[None, :]
    sub = coeff @ values  # (J, d)
    norms = np.linalg.norm(sub, axis=1)
    safe = norms > _EPS_NORM
    unit = np.where(safe[:, None], sub / np.where(safe, norms, 1.0)[:, None], 0.0)
    pool = (unit / np.sqrt(model.n_parts)).ravel()
    return {
        "values": values,
        "positional": positional,
        "scale": scale,
        "attention": attention,
        "sub": sub,
        "norms": norms,
        "safe": safe,
        "unit": unit,
        "pool": pool,
    }


def att_pert_pool(
    model: PoolerModel,
    embs: EmbeddingMatrix,
    bank: PertWindowBank,
    tfidf_scores: np.ndarray | None = None,
) -> np.ndarray:
    """Attention-weighted windowed document vector (J*d)."""
    return _pool_with_cache(model, embs, bank, tfidf_scores)["pool"]


def forward(
    model: PoolerModel,
    embs: EmbeddingMatrix,
    bank: PertWindowBank,
    tfidf_scores: np.ndarray | None = None,
) -> np.ndarray:
    """Class scores (C,): relu hidden layer over the pooled vector, then linear."""
    scores, _ = _forward_with_cache(model, embs, bank, tfidf_scores)
    return scores


def _forward_with_cache(model, embs, bank, tfidf_scores):
    cache = _pool_with_cache(model, embs, bank, tfidf_scores)
    pre_hidden = cache["pool"] @ model.w1 + model.b1
    hidden = np.maximum(pre_hidden, 0.0)
    scores = hidden @ model.w2 + model.b2
    cache["pre_hidden"] = pre_hidden
    cache["hidden"] = hidden
    return scores, cache


def _loss_and_dscores(scores: np.ndarray, target, task: str):
    if task == "multiclass":
        shifted = scores - scores.max()
        log_norm = np.log(np.exp(shifted).sum())
        loss = log_norm - shifted[target]
        dscores = np.exp(shifted - log_norm)
        dscores[target] -= 1.0
        return loss, dscores
    target = np.asarray(target, dtype=np.float64)
    # mean binary cross-entropy with logits: softplus(z) - y*z, averaged
    loss = float(np.mean(np.logaddexp(0.0, scores) - target * scores))
    sigmoid = 1.0 / (1.0 + np.exp(-scores))
    return loss, (sigmoid - target) / scores.size


def _backward(model: PoolerModel, cache: dict, dscores: np.ndarray) -> dict:
    hidden, pre_hidden, pool = cache["hidden"], cache["pre_hidden"], cache["pool"]
    gw2 = np.outer(hidden, dscores)
    gb2 = dscores.copy()
    dhidden = model.w2 @ dscores
    dpre = dhidden * (pre_hidden > 0)
    gw1 = np.outer(pool, dpre)
    gb1 = dpre.copy()
    dpool = model.w1 @ dpre

    j, d = model.n_parts, model.dim
    dunit = dpool.reshape(j, d) / np.sqrt(j)
    unit, norms, safe = cache["unit"], cache["norms"], cache["safe"]
    inner = np.einsum("jd,jd->j", dunit, unit)
    denom = np.where(safe, norms, 1.0)
    dsub = np.where(safe[:, None], (dunit - inner[:, None] * unit) / denom[:, None], 0.0)

    dcoeff = dsub @ cache["values"].T  # (J, N)
    dattention = dcoeff * cache["positional"] * cache["scale"][None, :]
    attention = cache["attention"]
    row_inner = (dattention * attention).sum(axis=1, keepdims=True)
    dscore_rows = attention * (dattention - row_inner)
    gq = dscore_rows @ cache["values"] / np.sqrt(d)
    return {"queries": gq, "w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def grad_check(
    model: PoolerModel,
    embs: EmbeddingMatrix,
    target,
    bank: PertWindowBank,
    tfidf_scores: np.ndarray | None = None,
    epsilon: float = 1e-5,
) -> float:
    """Max discrepancy between analytic and central-finite-difference gradients.

    Relative error when either gradient is appreciable, absolute error for
    near-zero pairs (dead relu paths and empty windows).
    """
    model = model.copy()
    target = _coerce_target(model, target)

    def loss_at_current() -> float:
        scores, _ = _forward_with_cache(model, embs, bank, tfidf_scores)
        loss, _ = _loss_and_dscores(scores, target, model.task)
        return float(loss)

    scores, cache = _forward_with_cache(model, embs, bank, tfidf_scores)
    _, dscores = _loss_and_dscores(scores, target, model.task)
    analytic = _backward(model, cache, dscores)

    worst = 0.0
    for name in _PARAM_NAMES:
        param = getattr(model, name)
        grad = analytic[name]
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + epsilon
            loss_plus = loss_at_current()
            param[idx] = original - epsilon
            loss_minus = loss_at_current()
            param[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            scale = max(abs(numeric), abs(grad[idx]))
            diff = abs(numeric - grad[idx])
            worst = max(worst, diff if scale < 1e-5 else diff / scale)
    return worst


def _coerce_target(model: PoolerModel, target):
    """Accept a label index, a label string, a binary vector, or a label set."""
    if model.task == "multiclass":
        if isinstance(target, str):
            return _label_index(model, target)
        return int(target)
    arr = np.zeros(model.n_classes)
    if isinstance(target, np.ndarray) and target.shape == (model.n_classes,):
        return target.astype(np.float64)
    for label in target:
        arr[_label_index(model, label)] = 1.0
    return arr


def _label_index(model: PoolerModel, label: str) -> int:
    try:
        return model.labels.index(label)
    except ValueError:
        raise ValidationError(f"label {label!r} outside the model's label space") from None


# ---------------------------------------------------------------------------
# Training


def _adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    state["t"] += 1
    t = state["t"]
    for name in _PARAM_NAMES:
        g = grads[name]
        state["m"][name] = beta1 * state["m"][name] + (1 - beta1) * g
        state["v"][name] = beta2 * state["v"][name] + (1 - beta2) * g * g
        m_hat = state["m"][name] / (1 - beta1**t)
        v_hat = state["v"][name] / (1 - beta2**t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _sgd_step(params, grads, lr):
    for name in _PARAM_NAMES:
        params[name] -= lr * grads[name]


def train(
    dataset: list[tuple[Document, EmbeddingMatrix, list[str]]],
    cfg: TrainConfig,
    mode: str = "att-pert",
    bank: PertWindowBank | None = None,
    stats: CollectionStats | None = None,
    hidden: int = DEFAULT_HIDDEN,
    task: str | None = None,
) -> PoolerModel:
    """Mini-batch gradient training of the pooler + classifier.

    Examples with ``doc.split == "train"`` are trained on; ``"dev"`` examples
    drive model selection and early stopping (the train split doubles as dev
    when none are marked). The label space is collected from the train split;
    any example labeled outside it is rejected before training. Deterministic
    for a fixed ``cfg.seed``. Returns the parameters from the best dev epoch,
    with per-epoch records on ``model.history``.
    """
    if bank is None:
        bank = build_window_bank()
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not dataset:
        raise ValidationError("empty dataset")

    train_items = [ex for ex in dataset if ex[0].split == "train"]
    dev_items = [ex for ex in dataset if ex[0].split == "dev"]
    if not train_items:
        raise ValidationError("no examples with split == 'train'")
    if not dev_items:
        dev_items = train_items

    label_space = sorted({label for _, _, labels in train_items for label in labels})
    if not label_space:
        raise ValidationError("train split has no labels")
    for doc, _, labels in dataset:
        bad = [label for label in labels if label not in label_space]
        if bad:
            raise ValidationError(
                f"document {doc.doc_id!r} has labels outside the label space: {bad}"
            )

    if task is None:
        single = all(len(labels) == 1 for _, _, labels in dataset)
        task = "multiclass" if single else "multilabel"
    if task == "multiclass" and any(len(labels) != 1 for _, _, labels in dataset):
        raise ValidationError("multiclass training requires exactly one label per document")

    dims = {embs.dim for _, embs, _ in dataset}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent embedding dims in dataset: {sorted(dims)}")
    dim = dims.pop()

    if mode == "att-tf-pert" and stats is None:
        raise ValidationError("att-tf-pert training requires collection statistics")
    tfidf_cache: dict[str, np.ndarray | None] = {}
    for doc, _, _ in dataset:
        if mode == "att-tf-pert":
            tfidf_cache[doc.doc_id] = weighting.tfidf_scores(doc, stats)
        else:
            tfidf_cache[doc.doc_id] = None

    model = init_model(dim, bank.parts, label_space, mode, task, hidden, seed=cfg.seed)
    index = {label: i for i, label in enumerate(label_space)}

    def target_of(labels: list[str]):
        if task == "multiclass":
            return index[labels[0]]
        arr = np.zeros(len(label_space))
        arr[[index[label] for label in labels]] = 1.0
        return arr

    train_targets = [target_of(labels) for _, _, labels in train_items]
    params = {name: getattr(model, name) for name in _PARAM_NAMES}
    adam_state = {
        "t": 0,
        "m": {name: np.zeros_like(params[name]) for name in _PARAM_NAMES},
        "v": {name: np.zeros_like(params[name]) for name in _PARAM_NAMES},
    }
    rng = np.random.default_rng(cfg.seed)

    best_metric = -np.inf
    best_model = model.copy()
    epochs_since_best = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_items))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = {name: np.zeros_like(params[name]) for name in _PARAM_NAMES}
            for i in batch:
                doc, embs, _ = train_items[i]
                scores, cache = _forward_with_cache(
                    model, embs, bank, tfidf_cache[doc.doc_id]
                )
                loss, dscores = _loss_and_dscores(scores, train_targets[i], task)
                epoch_loss += loss
                for name, g in _backward(model, cache, dscores).items():
                    grads[name] += g
            for name in _PARAM_NAMES:
                grads[name] /= len(batch)
            if cfg.optimizer == "adam":
                _adam_step(params, grads, adam_state, cfg.learning_rate)
            else:
                _sgd_step(params, grads, cfg.learning_rate)

        dev_metric = _dataset_metric(model, dev_items, bank, tfidf_cache)
        model.history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / len(train_items),
                "dev_metric": dev_metric,
            }
        )
        if dev_metric > best_metric + 1e-12:
            best_metric = dev_metric
            best_model = model.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    best_model.history = list(model.history)
    return best_model


def _dataset_metric(model, items, bank, tfidf_cache) -> float:
    golds = [labels for _, _, labels in items]
    preds = [
        predict(model, embs, bank, tfidf_cache.get(doc.doc_id))
        for doc, embs, _ in items
    ]
    if model.task == "multiclass":
        return accuracy([g[0] for g in golds], [p[0] for p in preds])
    return micro_f1(golds, preds)


def predict(
    model: PoolerModel,
    embs: EmbeddingMatrix,
    bank: PertWindowBank,
    tfidf_scores: np.ndarray | None = None,
) -> list[str]:
    """Predicted labels: the argmax class, or all labels with sigmoid >= 0.5."""
    scores = forward(model, embs, bank, tfidf_scores)
    if model.task == "multiclass":
        return [model.labels[int(np.argmax(scores))]]
    return [model.labels[i] for i in np.flatnonzero(scores >= 0.0)]


def accuracy(golds: list, preds: list) -> float:
    if not golds:
        raise ValidationError("accuracy of an empty set is undefined")
    return sum(g == p for g, p in zip(golds, preds)) / len(golds)


def micro_f1(golds: list, preds: list, restrict_to: set[str] | None = None) -> float:
    """Micro-averaged F1 over label sets; optionally restricted to a label subset."""
    tp = fp = fn = 0
    for gold, pred in zip(golds, preds):
        gold, pred = set(gold), set(pred)
        if restrict_to is not None:
            gold &= restrict_to
            pred &= restrict_to
        tp += len(gold & pred)
        fp += len(pred - gold)
        fn += len(gold - pred)
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def zero_shot_eval(
    model: PoolerModel,
    eval_sets: dict[str, list[tuple[Document, EmbeddingMatrix, list[str]]]],
    bank: PertWindowBank,
    stats_by_lang: dict[str, CollectionStats] | None = None,
) -> dict[str, float]:
    """Apply a frozen multiclass model to each language's documents.

    The document vectors must live in the same shared space the model was
    trained in; per-language TF-IDF statistics are required for att-tf-pert
    models.
    """
    if model.task != "multiclass":
        raise ValidationError("zero-shot evaluation expects a multiclass model")
    out = {}
    for lang, items in eval_sets.items():
        golds, preds = [], []
        for doc, embs, labels in items:
            if embs.dim != model.dim:
                raise ValidationError(
                    f"dim mismatch for {lang!r}: embeddings {embs.dim}, model {model.dim}"
                )
            tfidf = None
            if model.mode == "att-tf-pert":
                if stats_by_lang is None or lang not in stats_by_lang:
                    raise ValidationError(
                        f"att-tf-pert evaluation needs collection statistics for {lang!r}"
                    )
                tfidf = weighting.tfidf_scores(doc, stats_by_lang[lang])
            golds.append(labels[0])
            preds.append(predict(model, embs, bank, tfidf)[0])
        out[lang] = accuracy(golds, preds)
    return out


# ---------------------------------------------------------------------------
# Checkpoints

_CKPT_MAGIC = b"DPML"
_CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIIIBB")
_MODE_CODES = {mode: i for i, mode in enumerate(MODES)}
_TASK_CODES = {task: i for i, task in enumerate(TASKS)}


def save_checkpoint(model: PoolerModel, path):
    """Single binary file: header, float64 parameter blocks in declared order
    (queries, w1, b1, w2, b2), then a length-prefixed JSON label vocabulary."""
    header = _CKPT_HEADER.pack(
        _CKPT_MAGIC,
        _CKPT_VERSION,
        model.dim,
        model.n_parts,
        model.hidden,
        model.n_classes,
        _MODE_CODES[model.mode],
        _TASK_CODES[model.task],
    )
    blocks = b"".join(
        np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes()
        for name in _PARAM_NAMES
    )
    labels = json.dumps(model.labels, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(blocks)
        fh.write(struct.pack("<I", len(labels)))
        fh.write(labels)


def load_checkpoint(path) -> PoolerModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _CKPT_HEADER.size:
        raise FormatError(f"{path}: truncated checkpoint header", offset=len(data))
    magic, version, dim, parts, hidden, n_classes, mode_code, task_code = (
        _CKPT_HEADER.unpack_from(data)
    )
    if magic != _CKPT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", offset=0)
    if version != _CKPT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    shapes = {
        "queries": (parts, dim),
        "w1": (parts * dim, hidden),
        "b1": (hidden,),
        "w2": (hidden, n_classes),
        "b2": (n_classes,),
    }
    offset = _CKPT_HEADER.size
    arrays = {}
    for name in _PARAM_NAMES:
        size = int(np.prod(shapes[name])) * 8
        if len(data) < offset + size:
            raise FormatError(f"{path}: truncated parameter block {name!r}", offset=len(data))
        arrays[name] = (
            np.frombuffer(data, dtype="<f8", count=int(np.prod(shapes[name])), offset=offset)
            .reshape(shapes[name])
            .copy()
        )
        offset += size
    if len(data) < offset + 4:
        raise FormatError(f"{path}: missing label block", offset=len(data))
    (label_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    labels = json.loads(data[offset : offset + label_len].decode("utf-8"))
    modes = {code: mode for mode, code in _MODE_CODES.items()}
    tasks = {code: task for task, code in _TASK_CODES.items()}
    if mode_code not in modes or task_code not in tasks:
        raise FormatError(f"{path}: unknown mode/task codes ({mode_code}, {task_code})")
    model = PoolerModel(
        queries=arrays["queries"],
        w1=arrays["w1"],
        b1=arrays["b1"],
        w2=arrays["w2"],
        b2=arrays["b2"],
        mode=modes[mode_code],
        task=tasks[task_code],
        labels=labels,
    )
    for name in _PARAM_NAMES:
        if not np.all(np.isfinite(getattr(model, name))):
            raise ValidationError(f"{path}: non-finite values in {name!r}")
    return model
