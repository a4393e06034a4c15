"""Tokenisation and the three scoring models.

* the dual-encoder scores a pair by the dot product of two pooled encodings;
* each discriminator encodes ``[CLS] x [SEP] y`` jointly and applies a linear
  scoring vector to the pooled output.  ``phi`` handles text-code pairs and
  ``psi`` code-code pairs.

All three share one architecture: token + learned position embeddings, pre-norm
transformer layers (multi-head self-attention honouring the padding mask, GELU
MLP) and masked mean pooling.  Pooling includes the CLS position.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch

PAD, UNK, CLS, SEP, EXTRACTED = 0, 1, 2, 3, 4
SPECIALS = ("<pad>", "<unk>", "<cls>", "<sep>", "<extracted>")

_RAW_TOKEN_RE = re.compile(
    r"<extracted>|[A-Za-z_][A-Za-z0-9_]*|\d+(?:\.\d+)?|==|!=|<=|>=|\+=|-=|\*=|/=|\*\*|//|->|\S"
)
_CAMEL_RE = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+")


def subtokens(text: str) -> list[str]:
    """Split identifiers on snake_case and camelCase, lowercase words, keep punctuation."""
    out = []
    for raw in _RAW_TOKEN_RE.findall(text):
        if raw == "<extracted>":
            out.append(raw)
        elif raw[0].isalpha() or raw[0] == "_":
            for part in raw.split("_"):
                out.extend(p.lower() for p in _CAMEL_RE.findall(part))
        else:
            out.append(raw)
    return out


class Vocab:
    """Token list with the five specials fixed at ids 0-4."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocab must start with the special tokens")
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate token in vocab")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_vocab(corpus: Iterable[str], max_size: int = 4096) -> Vocab:
    """Most frequent ``max_size`` subtokens (ties by string) after the specials."""
    counts = Counter()
    n = 0
    for text in corpus:
        counts.update(subtokens(text))
        n += 1
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    for special in SPECIALS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    return Vocab(list(SPECIALS) + [tok for tok, _ in ranked])


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    max_len: int

    def __post_init__(self) -> None:
        if len(self.ids) > self.max_len:
            raise ValueError("sequence longer than max_len")

    @property
    def mask(self) -> tuple[int, ...]:
        return tuple(int(i != PAD) for i in self.ids)


def tokenize(text: str, vocab: Vocab, max_len: int) -> TokenSeq:
    """``[CLS]`` followed by the subtokens, hard-truncated to ``max_len``."""
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    ids = [CLS] + [vocab.id(t) for t in subtokens(text)]
    return TokenSeq(tuple(ids[:max_len]), max_len)


def tokenize_pair(x: str, y: str, vocab: Vocab, max_len: int) -> TokenSeq:
    """``[CLS] x [SEP] y``; ``y`` is truncated first, then ``x``."""
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    xs = [vocab.id(t) for t in subtokens(x)]
    ys = [vocab.id(t) for t in subtokens(y)]
    budget = max_len - 2
    xs = xs[:budget]
    ys = ys[: budget - len(xs)]
    return TokenSeq(tuple([CLS] + xs + [SEP] + ys), max_len)


def pad_batch(seqs: Sequence[TokenSeq]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s.ids) for s in seqs)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s.ids)] = s.ids
    return ids, (ids != PAD).astype(np.float64)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    init_scale: float = 0.05

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        return cls(**{k: (float(v) if types[k] in ("float", float) else int(v)) for k, v in d.items() if k in types})


ParamSet = dict  # name -> Tensor


def init_param_set(cfg: ModelConfig, rng: np.random.Generator, scoring_head: bool) -> ParamSet:
    """Uniform(-init_scale, init_scale) matrices; unit gains and zero biases."""
    d, f, s = cfg.d_model, cfg.d_ff, cfg.init_scale

    def u(*shape):
        return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)

    def const(value, n):
        return Tensor(np.full(n, value, dtype=np.float64), requires_grad=True)

    p: ParamSet = {"tok_emb": u(cfg.vocab_size, d), "pos_emb": u(cfg.max_len, d)}
    for l in range(cfg.n_layers):
        pre = f"layer{l}."
        p[pre + "ln1.g"], p[pre + "ln1.b"] = const(1.0, d), const(0.0, d)
        for m in "qkvo":
            p[pre + f"attn.w{m}"] = u(d, d)
            p[pre + f"attn.b{m}"] = const(0.0, d)
        p[pre + "ln2.g"], p[pre + "ln2.b"] = const(1.0, d), const(0.0, d)
        p[pre + "mlp.w1"], p[pre + "mlp.b1"] = u(d, f), const(0.0, f)
        p[pre + "mlp.w2"], p[pre + "mlp.b2"] = u(f, d), const(0.0, d)
    if scoring_head:
        p["w_score"] = u(d)
    for name, t in p.items():
        t.name = name
    return p


class EncoderParams:
    """The disjoint parameter sets ``theta`` (dual-encoder), ``phi`` and ``psi``."""

    GROUPS = ("theta", "phi", "psi")

    def __init__(self, theta: ParamSet, phi: ParamSet, psi: ParamSet):
        self.theta, self.phi, self.psi = theta, phi, psi

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        return cls(init_param_set(cfg, rng, False), init_param_set(cfg, rng, True), init_param_set(cfg, rng, True))

    def group(self, name: str) -> ParamSet:
        if name not in self.GROUPS:
            raise KeyError(name)
        return getattr(self, name)

    def flat(self) -> dict[str, np.ndarray]:
        return {f"{g}.{k}": t.data for g in self.GROUPS for k, t in self.group(g).items()}

    @classmethod
    def from_flat(cls, flat: dict[str, np.ndarray]) -> "EncoderParams":
        groups = {g: {} for g in cls.GROUPS}
        for key, arr in flat.items():
            g, name = key.split(".", 1)
            groups[g][name] = Tensor(np.array(arr, dtype=np.float64), requires_grad=True, name=name)
        return cls(groups["theta"], groups["phi"], groups["psi"])

    def copy(self) -> "EncoderParams":
        return EncoderParams.from_flat({k: v.copy() for k, v in self.flat().items()})

    def copy_encoder(self, src: str, dst: str) -> None:
        """Overwrite ``dst``'s encoder weights with ``src``'s (scoring head untouched)."""
        a, b = self.group(src), self.group(dst)
        for name, t in a.items():
            if name in b:
                b[name].data = t.data.copy()


def encode(params: ParamSet, cfg: ModelConfig, ids: np.ndarray, mask: np.ndarray) -> Tensor:
    """Pooled encodings (B, d) of a padded batch of token ids."""
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=np.float64)
    if ids.ndim != 2 or mask.shape != ids.shape:
        raise ShapeMismatch(f"ids {ids.shape} / mask {mask.shape}")
    B, T = ids.shape
    if T > cfg.max_len:
        raise ShapeMismatch(f"sequence length {T} exceeds max_len {cfg.max_len}")
    d, H = cfg.d_model, cfg.n_heads
    dh = d // H
    positions = np.broadcast_to(np.arange(T), (B, T))
    x = ad.add(ad.embedding_lookup(params["tok_emb"], ids), ad.embedding_lookup(params["pos_emb"], positions))
    key_mask = mask[:, None, None, :].astype(bool)
    for l in range(cfg.n_layers):
        pre = f"layer{l}."
        h = ad.layer_norm(x, params[pre + "ln1.g"], params[pre + "ln1.b"])

        def proj(m):
            return ad.add(ad.matmul(h, params[pre + f"attn.w{m}"]), params[pre + f"attn.b{m}"])

        q = ad.transpose(ad.reshape(ad.scale(proj("q"), 1.0 / np.sqrt(dh)), (B, T, H, dh)), (0, 2, 1, 3))
        k = ad.transpose(ad.reshape(proj("k"), (B, T, H, dh)), (0, 2, 3, 1))
        v = ad.transpose(ad.reshape(proj("v"), (B, T, H, dh)), (0, 2, 1, 3))
        att = ad.softmax_rows(ad.matmul(q, k), key_mask)
        ctx = ad.reshape(ad.transpose(ad.matmul(att, v), (0, 2, 1, 3)), (B, T, d))
        x = ad.add(x, ad.add(ad.matmul(ctx, params[pre + "attn.wo"]), params[pre + "attn.bo"]))
        h = ad.layer_norm(x, params[pre + "ln2.g"], params[pre + "ln2.b"])
        h = ad.gelu(ad.add(ad.matmul(h, params[pre + "mlp.w1"]), params[pre + "mlp.b1"]))
        x = ad.add(x, ad.add(ad.matmul(h, params[pre + "mlp.w2"]), params[pre + "mlp.b2"]))
    return ad.masked_mean_pool(x, mask)


class Model:
    """Vocabulary, configuration and parameters bundled with cached tokenisation."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab, params: EncoderParams, chunk: int = 64):
        if len(vocab) != cfg.vocab_size:
            raise ValueError(f"vocab has {len(vocab)} tokens, config expects {cfg.vocab_size}")
        self.cfg = cfg
        self.vocab = vocab
        self.params = params
        self.chunk = chunk
        self._single: dict[str, TokenSeq] = {}
        self._pair: dict[tuple[str, str], TokenSeq] = {}

    @classmethod
    def create(cls, vocab: Vocab, seed: int = 0, **overrides) -> "Model":
        cfg = ModelConfig(vocab_size=len(vocab), **overrides)
        return cls(cfg, vocab, EncoderParams.init(cfg, seed))

    def copy(self) -> "Model":
        return Model(self.cfg, self.vocab, self.params.copy(), self.chunk)

    def seq(self, text: str) -> TokenSeq:
        s = self._single.get(text)
        if s is None:
            s = self._single[text] = tokenize(text, self.vocab, self.cfg.max_len)
        return s

    def pair_seq(self, x: str, y: str) -> TokenSeq:
        key = (x, y)
        s = self._pair.get(key)
        if s is None:
            if len(self._pair) > 200_000:
                self._pair.clear()
            s = self._pair[key] = tokenize_pair(x, y, self.vocab, self.cfg.max_len)
        return s

    def _encode_seqs(self, group: str, seqs: Sequence[TokenSeq]) -> Tensor:
        ids, mask = pad_batch(seqs)
        return encode(self.params.group(group), self.cfg, ids, mask)

    def embed(self, texts: Sequence[str]) -> Tensor:
        """Dual-encoder embeddings (n, d); duplicates are encoded once."""
        uniq = list(dict.fromkeys(texts))
        if len(uniq) == len(texts):
            return self._encode_seqs("theta", [self.seq(t) for t in texts])
        out = self._encode_seqs("theta", [self.seq(t) for t in uniq])
        pos = {t: i for i, t in enumerate(uniq)}
        return ad.take(out, np.array([pos[t] for t in texts]))

    def embed_numpy(self, texts: Sequence[str]) -> np.ndarray:
        """Inference-only embeddings, processed in chunks of similar length."""
        uniq = list(dict.fromkeys(texts))
        order = sorted(range(len(uniq)), key=lambda i: (len(self.seq(uniq[i]).ids), i))
        rows = np.zeros((len(uniq), self.cfg.d_model))
        with ad.no_grad():
            for start in range(0, len(order), self.chunk):
                idx = order[start : start + self.chunk]
                rows[idx] = self._encode_seqs("theta", [self.seq(uniq[i]) for i in idx]).data
        pos = {t: i for i, t in enumerate(uniq)}
        return rows[[pos[t] for t in texts]]

    def disc_scores(self, group: str, xs: Sequence[str], ys: Sequence[str]) -> Tensor:
        """Discriminator scores (n,) for aligned pairs ``(xs[i], ys[i])``."""
        if group not in ("phi", "psi"):
            raise KeyError(group)
        pooled = self._encode_seqs(group, [self.pair_seq(x, y) for x, y in zip(xs, ys)])
        w = self.params.group(group)["w_score"]
        return ad.reshape(ad.matmul(pooled, ad.reshape(w, (self.cfg.d_model, 1))), (len(xs),))

    def disc_scores_numpy(self, group: str, xs: Sequence[str], ys: Sequence[str]) -> np.ndarray:
        out = np.zeros(len(xs))
        with ad.no_grad():
            for start in range(0, len(xs), self.chunk):
                sl = slice(start, start + self.chunk)
                out[sl] = self.disc_scores(group, xs[sl], ys[sl]).data
        return out


def dual_score(model: Model, x: str, y: str) -> float:
    """``E(x) . E(y)`` under the dual-encoder."""
    emb = model.embed_numpy([x, y])
    return float(emb[0] @ emb[1])


def disc_score(model: Model, group: str, x: str, y: str) -> float:
    return float(model.disc_scores_numpy(group, [x], [y])[0])


def disc_group(anchor_kind: str) -> str:
    """``phi`` scores text anchors, ``psi`` code anchors."""
    return "phi" if anchor_kind == "text" else "psi"


def save_model(model: Model, directory, name: str = "model") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {k: str(v) for k, v in model.cfg.to_dict().items()}
    path = directory / f"{name}.ckpt"
    ad.save_tensors(path, model.params.flat(), meta)
    model.vocab.save(directory / "vocab.txt")
    return path


def load_model(directory, name: str = "model") -> Model:
    directory = Path(directory)
    flat, meta = ad.load_tensors(directory / f"{name}.ckpt")
    cfg = ModelConfig.from_dict(meta)
    return Model(cfg, Vocab.load(directory / "vocab.txt"), EncoderParams.from_flat(flat))
