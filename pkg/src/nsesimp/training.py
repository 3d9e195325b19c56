"""Training engine: masked cross-entropy, Adam, epoch loop, checkpoints.

Training is teacher-forced throughout: the decoder always sees gold
previous tokens.  Each batch accumulates per-sentence gradients of the
token-mean loss, clips the global gradient norm, and takes one Adam step.
After every epoch the development set is decoded greedily (with unknowns
replaced from the source via attention) and scored with corpus BLEU and
SARI; the checkpoint whose epoch wins the selection rule is retained.

The selection rule: tuning on BLEU picks the epoch with the best dev
BLEU; tuning on SARI picks the best dev SARI among epochs whose dev BLEU
clears a threshold, falling back to best BLEU when no epoch qualifies.
Ties always resolve to the earliest epoch.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .data import PAD_ID, ParallelCorpus, Vocabulary, batches
from .errors import ConfigError, FormatError, UsageError
from .metrics import EvalInstance, bleu_corpus, sari_corpus
from .model import DecodeSession, Model, build_model, encode, teacher_logits
from .search import greedy_decode, replace_unks

# ---------------------------------------------------------------------------
# loss


def xent_loss(logits: Tensor, target_ids) -> Tensor:
    """Mean negative log-likelihood over non-padding target positions."""
    ids = np.asarray(target_ids, dtype=np.intp)
    if logits.data.ndim != 2 or ids.shape != (logits.shape[0],):
        raise UsageError(
            f"xent_loss got logits {logits.shape} against {ids.shape[0] if ids.ndim else '?'} targets"
        )
    mask = (ids != PAD_ID).astype(np.float64)
    real = mask.sum()
    if real == 0:
        raise UsageError("target is entirely padding")
    log_probs = ad.log_softmax_rows(logits)
    picked = ad.gather_rows(log_probs, ids)
    masked = ad.mul(picked, Tensor(mask))
    return ad.scale(ad.sum_all(masked), -1.0 / real)


def sentence_loss(
    model: Model,
    src_ids,
    tgt_ids,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Teacher-forced mean token loss for one (source, target) id pair.

    ``tgt_ids`` is the bare target; begin/end wrapping happens here.
    """
    from .data import BOS_ID, EOS_ID

    enc = encode(model, src_ids, dropout_rate, training, rng)
    dec_in = [BOS_ID] + list(tgt_ids)
    dec_out = list(tgt_ids) + [EOS_ID]
    logits = teacher_logits(model, enc, dec_in, dropout_rate, training, rng)
    return xent_loss(logits, dec_out)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @staticmethod
    def create(params) -> "AdamState":
        return AdamState(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(
    params,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place."""
    if len(params) != len(state.m):
        raise UsageError(
            f"optimizer state tracks {len(state.m)} tensors, got {len(params)} params"
        )
    for p in params:
        if p.grad is None:
            raise UsageError("parameter has no gradient; run backward first")
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint norm is at most ``max_norm``.

    Returns the pre-clip norm.  Direction is never changed.
    """
    total = 0.0
    for p in params:
        if p.grad is None:
            raise UsageError("parameter has no gradient; run backward first")
        total += float((p.grad * p.grad).sum())
    norm = total**0.5
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
    return norm


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    """All knobs for one training run; defaults follow the standard recipe."""

    encoder_kind: str = "lstm"
    dim: int = 300
    vocab_size: int = 30000
    lr: float | None = None  # resolved per encoder kind when unset
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    dropout: float = 0.3
    max_epochs: int = 40
    tune_metric: str = "bleu"
    sari_bleu_threshold: float = 0.0
    seed: int = 0
    clip_norm: float = 5.0
    forget_bias: float = 1.0
    max_sentence_length: int = 100
    max_decode_len: int = 100
    beam_sizes: tuple[int, ...] = (5, 10)
    length_normalize: bool = False
    bucket: bool = False

    def resolved_lr(self) -> float:
        if self.lr is not None:
            return self.lr
        return 0.001 if self.encoder_kind == "lstm" else 0.0003

    def validate(self) -> None:
        if self.encoder_kind not in ("lstm", "nse"):
            raise ConfigError(f"encoder_kind must be lstm or nse, got {self.encoder_kind!r}")
        if self.dim < 1:
            raise ConfigError(f"dim {self.dim} must be positive")
        if self.vocab_size <= 4:
            raise ConfigError(f"vocab_size {self.vocab_size} leaves no room for real tokens")
        if self.lr is not None and self.lr <= 0:
            raise ConfigError(f"lr {self.lr} must be positive")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} {b} outside [0, 1)")
        if self.adam_eps <= 0:
            raise ConfigError(f"adam_eps {self.adam_eps} must be positive")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size {self.batch_size} must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout {self.dropout} outside [0, 1)")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs {self.max_epochs} must be at least 1")
        if self.tune_metric not in ("bleu", "sari"):
            raise ConfigError(f"tune_metric must be bleu or sari, got {self.tune_metric!r}")
        if self.sari_bleu_threshold < 0:
            raise ConfigError("sari_bleu_threshold must be non-negative")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm {self.clip_norm} must be positive")
        if self.max_decode_len < 1 or self.max_sentence_length < 1:
            raise ConfigError("length limits must be at least 1")
        if not self.beam_sizes or any(b < 1 for b in self.beam_sizes):
            raise ConfigError(f"beam_sizes {self.beam_sizes} must all be at least 1")


PRESETS = {
    "newsela": dict(vocab_size=20000, sari_bleu_threshold=22.0),
    "wikismall": dict(vocab_size=30000, sari_bleu_threshold=33.0),
    "wikilarge": dict(vocab_size=30000, sari_bleu_threshold=77.0),
}


def preset_config(corpus: str, encoder_kind: str = "lstm", **overrides) -> TrainConfig:
    """Standard-recipe configuration for one of the benchmark corpora."""
    if corpus not in PRESETS:
        raise ConfigError(f"unknown preset {corpus!r}; choose from {sorted(PRESETS)}")
    merged = dict(PRESETS[corpus])
    merged["encoder_kind"] = encoder_kind
    merged.update(overrides)
    config = TrainConfig(**merged)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# model selection


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    mean_loss: float
    dev_bleu: float
    dev_sari: float
    seconds: float


def select_model(records, tune_metric: str, threshold: float = 0.0) -> int:
    """Epoch number chosen by the tuning rule; ties go to the earliest."""
    if not records:
        raise UsageError("no epoch records to select from")
    if tune_metric == "bleu":
        return max(records, key=lambda r: r.dev_bleu).epoch
    if tune_metric != "sari":
        raise ConfigError(f"tune_metric must be bleu or sari, got {tune_metric!r}")
    eligible = [r for r in records if r.dev_bleu >= threshold]
    if not eligible:
        return max(records, key=lambda r: r.dev_bleu).epoch
    return max(eligible, key=lambda r: r.dev_sari).epoch


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"NSE1"
CHECKPOINT_VERSION = 1


@dataclass
class AdamSnapshot:
    t: int
    m: list[np.ndarray]  # float32
    v: list[np.ndarray]  # float32


@dataclass
class Checkpoint:
    """Everything needed to resume or serve a model, in 32-bit storage."""

    encoder_kind: str
    dim: int
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    params: list[tuple[str, np.ndarray]]  # float32 arrays
    adam: AdamSnapshot | None = None
    epoch: int = 0
    dev_bleu: float = 0.0
    dev_sari: float = 0.0


def make_checkpoint(
    model: Model,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    adam: AdamState | None = None,
    epoch: int = 0,
    dev_bleu: float = 0.0,
    dev_sari: float = 0.0,
) -> Checkpoint:
    params = [(name, t.data.astype(np.float32)) for name, t in model.named_params()]
    snap = None
    if adam is not None:
        snap = AdamSnapshot(
            t=adam.t,
            m=[a.astype(np.float32) for a in adam.m],
            v=[a.astype(np.float32) for a in adam.v],
        )
    return Checkpoint(
        encoder_kind=model.encoder_kind,
        dim=model.dim,
        src_vocab=src_vocab,
        tgt_vocab=tgt_vocab,
        params=params,
        adam=snap,
        epoch=epoch,
        dev_bleu=dev_bleu,
        dev_sari=dev_sari,
    )


def restore_model(ckpt: Checkpoint) -> Model:
    """Rebuild a live float64 model from stored float32 parameters."""
    model = build_model(
        ckpt.encoder_kind,
        ckpt.dim,
        ckpt.src_vocab.size,
        ckpt.tgt_vocab.size,
        np.random.default_rng(0),
    )
    live = model.named_params()
    if len(live) != len(ckpt.params):
        raise FormatError(
            f"checkpoint has {len(ckpt.params)} parameters, model needs {len(live)}"
        )
    for (want_name, tensor), (got_name, arr) in zip(live, ckpt.params):
        if want_name != got_name:
            raise FormatError(f"parameter {got_name!r} where {want_name!r} expected")
        if tuple(arr.shape) != tensor.shape:
            raise FormatError(
                f"parameter {got_name!r} has shape {arr.shape}, expected {tensor.shape}"
            )
        tensor.data = arr.astype(np.float64)
    return model


def restore_adam(ckpt: Checkpoint) -> AdamState | None:
    if ckpt.adam is None:
        return None
    return AdamState(
        m=[a.astype(np.float64) for a in ckpt.adam.m],
        v=[a.astype(np.float64) for a in ckpt.adam.v],
        t=ckpt.adam.t,
    )


class _Writer:
    def __init__(self):
        self.buf = bytearray()

    def raw(self, b: bytes):
        self.buf += b

    def u8(self, x: int):
        self.buf += struct.pack("<B", x)

    def u32(self, x: int):
        self.buf += struct.pack("<I", x)

    def u64(self, x: int):
        self.buf += struct.pack("<Q", x)

    def f64(self, x: float):
        self.buf += struct.pack("<d", x)

    def string(self, s: str):
        data = s.encode("utf-8")
        self.u32(len(data))
        self.buf += data

    def f32_array(self, arr: np.ndarray):
        self.u32(arr.ndim)
        for d in arr.shape:
            self.u32(d)
        self.buf += np.ascontiguousarray(arr, dtype="<f4").tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"file truncated while reading {what}", offset=self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return struct.unpack("<B", self.take(1, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f64(self, what: str) -> float:
        return struct.unpack("<d", self.take(8, what))[0]

    def string(self, what: str) -> str:
        n = self.u32(f"{what} length")
        at = self.pos
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{what} is not valid UTF-8", offset=at) from e

    def f32_array(self, what: str) -> np.ndarray:
        rank = self.u32(f"{what} rank")
        if rank > 8:
            raise FormatError(f"{what} has implausible rank {rank}", offset=self.pos - 4)
        shape = tuple(self.u32(f"{what} dim") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(count * 4, f"{what} data")
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    w = _Writer()
    w.raw(CHECKPOINT_MAGIC)
    w.u32(CHECKPOINT_VERSION)
    w.string(ckpt.encoder_kind)
    w.u32(ckpt.dim)
    w.u32(ckpt.epoch)
    w.f64(ckpt.dev_bleu)
    w.f64(ckpt.dev_sari)
    for vocab in (ckpt.src_vocab, ckpt.tgt_vocab):
        w.u32(vocab.size)
        for token in vocab.id_to_token:
            w.string(token)
    w.u32(len(ckpt.params))
    for name, arr in ckpt.params:
        w.string(name)
        w.f32_array(arr)
    if ckpt.adam is None:
        w.u8(0)
    else:
        w.u8(1)
        w.u64(ckpt.adam.t)
        for arr in ckpt.adam.m:
            w.f32_array(arr)
        for arr in ckpt.adam.v:
            w.f32_array(arr)
    with open(path, "wb") as f:
        f.write(bytes(w.buf))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    version = r.u32("version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    encoder_kind = r.string("encoder kind")
    if encoder_kind not in ("lstm", "nse"):
        raise FormatError(f"unknown encoder kind {encoder_kind!r}")
    dim = r.u32("dim")
    epoch = r.u32("epoch")
    dev_bleu = r.f64("dev bleu")
    dev_sari = r.f64("dev sari")
    vocabs = []
    for side in ("source", "target"):
        n = r.u32(f"{side} vocab size")
        tokens = [r.string(f"{side} vocab token") for _ in range(n)]
        if tokens[:4] != ["<pad>", "<unk>", "<s>", "</s>"]:
            raise FormatError(f"{side} vocabulary lacks the reserved header tokens")
        vocabs.append(Vocabulary(tokens, {t: i for i, t in enumerate(tokens)}))
    n_params = r.u32("parameter count")
    params = []
    for _ in range(n_params):
        name = r.string("parameter name")
        params.append((name, r.f32_array(f"parameter {name}")))
    adam = None
    if r.u8("optimizer flag"):
        t = r.u64("optimizer step")
        m = [r.f32_array("optimizer moment") for _ in range(n_params)]
        v = [r.f32_array("optimizer moment") for _ in range(n_params)]
        adam = AdamSnapshot(t=t, m=m, v=v)
    if r.pos != len(data):
        raise FormatError("unexpected trailing bytes", offset=r.pos)
    return Checkpoint(
        encoder_kind=encoder_kind,
        dim=dim,
        src_vocab=vocabs[0],
        tgt_vocab=vocabs[1],
        params=params,
        adam=adam,
        epoch=epoch,
        dev_bleu=dev_bleu,
        dev_sari=dev_sari,
    )


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class TrainResult:
    model: Model  # weights as of the last trained epoch
    best: Checkpoint  # snapshot at the selected epoch
    records: list[EpochRecord]
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    adam: AdamState


def dev_decode_scores(
    model: Model,
    dev_corpus: ParallelCorpus,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    max_decode_len: int,
):
    """Greedy-decode the dev set and return (BLEU, SARI) against targets."""
    instances = []
    for src_tokens, tgt_tokens in dev_corpus.pairs:
        session = DecodeSession(model, src_vocab.encode(src_tokens))
        hyp = greedy_decode(session, max_decode_len)
        out = replace_unks(hyp, src_tokens, tgt_vocab)
        instances.append(EvalInstance(source=src_tokens, output=out, references=[tgt_tokens]))
    return bleu_corpus(instances).score, sari_corpus(instances).score


def train(
    config: TrainConfig,
    train_corpus: ParallelCorpus,
    dev_corpus: ParallelCorpus,
    *,
    model: Model | None = None,
    src_vocab: Vocabulary | None = None,
    tgt_vocab: Vocabulary | None = None,
    adam: AdamState | None = None,
    records: list[EpochRecord] | None = None,
    best: Checkpoint | None = None,
    epochs: int | None = None,
    log=None,
) -> TrainResult:
    """Run (up to) ``config.max_epochs`` epochs and keep the best model.

    Passing ``model``/``adam``/``records``/``best`` from a previous result
    resumes training; ``epochs`` caps how many epochs this call runs,
    which lets callers interleave their own convergence checks.
    """
    config.validate()
    if len(train_corpus) == 0 or len(dev_corpus) == 0:
        raise ConfigError("training and development corpora must be non-empty")
    if src_vocab is None:
        src_vocab = _vocab_for(train_corpus.source_sentences(), config.vocab_size)
    if tgt_vocab is None:
        tgt_vocab = _vocab_for(train_corpus.target_sentences(), config.vocab_size)
    if model is None:
        model = build_model(
            config.encoder_kind,
            config.dim,
            src_vocab.size,
            tgt_vocab.size,
            np.random.default_rng([config.seed, 0]),
            forget_bias=config.forget_bias,
        )
    params = model.params()
    if adam is None:
        adam = AdamState.create(params)
    records = list(records) if records else []
    start = len(records)
    remaining = config.max_epochs - start
    n_epochs = remaining if epochs is None else min(epochs, remaining)

    for e in range(start, start + n_epochs):
        t0 = time.perf_counter()
        shuffle_rng = np.random.default_rng([config.seed, 1, e])
        dropout_rng = np.random.default_rng([config.seed, 2, e])
        total_nll = 0.0
        total_tokens = 0
        for batch in batches(
            train_corpus, src_vocab, tgt_vocab, config.batch_size, shuffle_rng, config.bucket
        ):
            model.zero_grads()
            batch_tokens = int(batch.tgt_mask.sum())
            for i in range(batch.size):
                dec_out = batch.tgt_out_ids(i)
                with Tape() as tape:
                    enc = encode(model, batch.src_ids(i), config.dropout, True, dropout_rng)
                    logits = teacher_logits(
                        model, enc, batch.tgt_in_ids(i), config.dropout, True, dropout_rng
                    )
                    mean_loss = xent_loss(logits, dec_out)
                    contribution = ad.scale(mean_loss, len(dec_out) / batch_tokens)
                backward(contribution, tape)
                total_nll += mean_loss.item() * len(dec_out)
                total_tokens += len(dec_out)
            clip_global_norm(params, config.clip_norm)
            adam_step(
                params, adam, config.resolved_lr(), config.beta1, config.beta2, config.adam_eps
            )
        dev_bleu, dev_sari = dev_decode_scores(
            model, dev_corpus, src_vocab, tgt_vocab, config.max_decode_len
        )
        record = EpochRecord(
            epoch=e + 1,
            mean_loss=total_nll / total_tokens,
            dev_bleu=dev_bleu,
            dev_sari=dev_sari,
            seconds=time.perf_counter() - t0,
        )
        records.append(record)
        if log is not None:
            log(
                f"epoch={record.epoch} loss={record.mean_loss:.4f} "
                f"dev_bleu={record.dev_bleu:.2f} dev_sari={record.dev_sari:.2f} "
                f"seconds={record.seconds:.1f}"
            )
        chosen = select_model(records, config.tune_metric, config.sari_bleu_threshold)
        if best is None or chosen == record.epoch:
            best = make_checkpoint(
                model,
                src_vocab,
                tgt_vocab,
                adam=adam,
                epoch=record.epoch,
                dev_bleu=dev_bleu,
                dev_sari=dev_sari,
            )
    if best is None:
        raise UsageError("no epochs were run and no previous best was supplied")
    return TrainResult(
        model=model,
        best=best,
        records=records,
        src_vocab=src_vocab,
        tgt_vocab=tgt_vocab,
        adam=adam,
    )


def _vocab_for(sentences, cap):
    from .data import build_vocab

    return build_vocab(sentences, cap)
