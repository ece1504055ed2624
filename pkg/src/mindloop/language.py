"""Symbol codec and the quantity-extraction recurrent layer.

Text is lowercase, '.'-terminated, over a 39-symbol alphabet (a-z, 0-9,
space, '.', pad). Each symbol maps to its 7-bit character code zero-extended
to 8 bits, most significant bit first; pad is 0x00. The textizer inverts a
predicted 8-vector by rounding each entry to {0,1} (threshold 0.5, ties up)
and mapping the byte back; unmapped bytes fall back to '?'. Classification
happens entirely through this rounding, so prediction cost is eight
comparisons and there is no vocabulary-wide scoring anywhere.

The quantity layer (an LSTM named after the intraparietal sulcus it mimics)
reads the code sequence and regresses the embedded number divided by 100,
supervised at the final step only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import CodecError, ConfigError, ContractError, GrammarError
from .layers import FcLayer, LstmLayer
from .seeding import make_rng
from .tensor import Tensor

PAD = "\x00"
CODE_BITS = 8
FALLBACK = "?"

SYMBOLS = PAD + "abcdefghijklmnopqrstuvwxyz0123456789 ."
_BYTE_OF = {s: (0 if s == PAD else ord(s)) for s in SYMBOLS}
_SYMBOL_OF = {v: k for k, v in _BYTE_OF.items()}

QUANTITY_SCALE = 100.0


def byte_to_bits(byte: int) -> np.ndarray:
    return np.array([(byte >> (7 - i)) & 1 for i in range(CODE_BITS)], dtype=np.float32)


def bits_to_byte(bits: np.ndarray) -> int:
    byte = 0
    for i in range(CODE_BITS):
        byte = (byte << 1) | int(bits[i])
    return byte


def round_code(code) -> np.ndarray:
    """Strictify a soft code: entries >= 0.5 become 1, the rest 0."""
    code = np.asarray(code, dtype=np.float32)
    if code.shape != (CODE_BITS,):
        raise CodecError(f"symbol code must have {CODE_BITS} entries, got shape {code.shape}")
    if not np.isfinite(code).all():
        raise CodecError("symbol code contains non-finite entries")
    return (code >= 0.5).astype(np.float32)


def binarize(text: str) -> np.ndarray:
    """Text to an array of strict 8-bit codes, one row per symbol."""
    out = np.zeros((len(text), CODE_BITS), dtype=np.float32)
    for i, ch in enumerate(text):
        if ch not in _BYTE_OF:
            raise CodecError(f"symbol {ch!r} at position {i} is not in the alphabet")
        out[i] = byte_to_bits(_BYTE_OF[ch])
    return out


def textize(code) -> str:
    """Round a predicted code and map the byte to a symbol ('?' if unmapped)."""
    byte = bits_to_byte(round_code(code))
    return _SYMBOL_OF.get(byte, FALLBACK)


def textize_all(codes) -> str:
    return "".join(textize(c) for c in codes)


def alphabet_table() -> list[tuple[str, int, str]]:
    """(display name, byte, bit string) rows for every alphabet symbol."""
    rows = []
    for s in SYMBOLS:
        name = {"\x00": "pad", " ": "space"}.get(s, s)
        byte = _BYTE_OF[s]
        rows.append((name, byte, format(byte, "08b")))
    return rows


# ---------------------------------------------------------------------------
# grammar: the eight command syntaxes

_SYNTAX_PATTERNS = [
    (1, re.compile(r"^move left (\d{1,2})\.$")),
    (2, re.compile(r"^move right (\d{1,2})\.$")),
    (3, re.compile(r"^this is (\d)\.$")),
    (4, re.compile(r"^the size is (big|small)\.$")),
    (5, re.compile(r"^the size is not (small|big)\.$")),
    (6, re.compile(r"^give me a (\d)\.$")),
    (7, re.compile(r"^(enlarge|shrink)\.$")),
    (8, re.compile(r"^rotate (90|180|270)\.$")),
]

MAX_MOVE = 28
ROTATE_ANGLES = (90, 180, 270)


def parse_sentence(text: str) -> tuple[int, str]:
    """Return (syntax id, captured argument) or raise GrammarError."""
    for sid, pat in _SYNTAX_PATTERNS:
        m = pat.match(text)
        if m:
            arg = m.group(1)
            if sid in (1, 2) and int(arg) > MAX_MOVE:
                raise GrammarError(f"move distance {arg} exceeds {MAX_MOVE}")
            return sid, arg
    raise GrammarError(f"sentence does not parse: {text!r}")


def quantity_oracle(text: str) -> int:
    """Integer value of the sentence's digit run, 0 when it has none."""
    parse_sentence(text)
    digits = "".join(ch for ch in text if ch.isdigit())
    return int(digits) if digits else 0


def all_sentences(syntax_ids=None) -> list[str]:
    """The full finite sentence set, optionally restricted to some syntaxes."""
    wanted = set(syntax_ids) if syntax_ids is not None else set(range(1, 9))
    out = []
    if 1 in wanted:
        out += [f"move left {n}." for n in range(MAX_MOVE + 1)]
    if 2 in wanted:
        out += [f"move right {n}." for n in range(MAX_MOVE + 1)]
    if 3 in wanted:
        out += [f"this is {d}." for d in range(10)]
    if 4 in wanted:
        out += ["the size is big.", "the size is small."]
    if 5 in wanted:
        out += ["the size is not small.", "the size is not big."]
    if 6 in wanted:
        out += [f"give me a {d}." for d in range(10)]
    if 7 in wanted:
        out += ["enlarge.", "shrink."]
    if 8 in wanted:
        out += [f"rotate {a}." for a in ROTATE_ANGLES]
    return out


def allowed_next_symbols(prefix: str, sentences: list[str]) -> set[str]:
    """Symbols that can legally follow a sentence prefix; PAD when a sentence is complete."""
    allowed = set()
    for s in sentences:
        if s == prefix:
            allowed.add(PAD)
        elif s.startswith(prefix):
            allowed.add(s[len(prefix)])
    return allowed


# ---------------------------------------------------------------------------
# quantity extraction

@dataclass
class IpsModel:
    """LSTM over symbol codes plus a linear head emitting one scalar per step."""

    lstm: LstmLayer
    head: FcLayer

    @classmethod
    def new(cls, rng: np.random.Generator, hidden: int = 32):
        return cls(lstm=LstmLayer.new(rng, CODE_BITS, hidden),
                   head=FcLayer.new(rng, hidden, 1, "identity"))

    @property
    def hidden(self) -> int:
        return self.lstm.hidden

    def named_params(self):
        return dict(self.lstm.params("lstm") + self.head.params("head"))

    def arch(self) -> dict:
        return {"kind": "ips", "hidden": self.hidden}

    @classmethod
    def from_component(cls, arch: dict, params: dict[str, np.ndarray]) -> "IpsModel":
        model = cls.new(make_rng(0), hidden=arch["hidden"])
        _load_named(model.named_params(), params)
        return model

    def step(self, code_row: np.ndarray, state) -> tuple[float, tuple]:
        """Advance one symbol; returns (quantity, new state). Inference only."""
        h, c = state if state is not None else self.lstm.zero_state(1)
        x = Tensor(np.asarray(code_row, dtype=np.float32).reshape(1, CODE_BITS))
        h, c = self.lstm.step(x, h, c)
        q = self.head(h)
        return float(q.data[0, 0]), (h, c)


def _load_named(targets: dict[str, Tensor], params: dict[str, np.ndarray]):
    missing = set(targets) ^ set(params)
    if missing:
        raise ContractError(f"parameter names do not line up: {sorted(missing)}")
    for name, tens in targets.items():
        arr = params[name]
        if arr.shape != tens.data.shape:
            raise ContractError(f"parameter {name} has shape {arr.shape}, expected {tens.data.shape}")
        tens.data[...] = arr


def ips_forward(codes: np.ndarray, model: IpsModel) -> np.ndarray:
    """Per-step quantities for one code sequence; the final one is the answer."""
    codes = np.asarray(codes, dtype=np.float32)
    if codes.ndim != 2 or codes.shape[0] == 0 or codes.shape[1] != CODE_BITS:
        raise ContractError(f"need a nonempty [T,{CODE_BITS}] code sequence, got {codes.shape}")
    state = None
    out = np.zeros(codes.shape[0], dtype=np.float32)
    for t in range(codes.shape[0]):
        out[t], state = model.step(codes[t], state)
    return out


def extract_quantity(text: str, model: IpsModel) -> float:
    return float(ips_forward(binarize(text), model)[-1])


DEFAULT_IPS_DECAYS = ((0.5, 2e-4), (0.75, 5e-5), (0.92, 1e-5))


def train_ips(pairs: list[tuple[str, int]], *, steps: int = 10000, batch: int = 0,
              lr: float = 1e-3, decays=DEFAULT_IPS_DECAYS, hidden: int = 32,
              seed: int = 0, eval_every: int = 200, log=None) -> tuple[IpsModel, list[dict]]:
    """Fit the quantity layer on (sentence, number) pairs.

    Supervision applies at the final step of each sentence; the loss is the
    mean squared error of that step's output against number/100. The grammar
    yields well under a hundred distinct sentences, so batch=0 (the default)
    trains on the full set each step; exactness (within half a count of the
    true number) needs the stepped learning-rate decays to get under Adam's
    noise floor.
    """
    if not pairs:
        raise ConfigError("train_ips needs a nonempty dataset")
    rng = make_rng(seed)
    model = IpsModel.new(rng, hidden=hidden)
    from .optim import Adam  # local import keeps module load cheap

    params = model.named_params()
    opt = Adam(list(params.values()), lr=lr)
    codes = [binarize(text) for text, _ in pairs]
    targets = np.array([n / QUANTITY_SCALE for _, n in pairs], dtype=np.float32)
    metrics = []
    full = batch <= 0 or batch >= len(pairs)
    drop_at = {max(1, int(steps * frac)): rate for frac, rate in decays}
    for step in range(1, steps + 1):
        if step in drop_at:
            opt.lr = np.float32(drop_at[step])
        if full:
            idx = np.arange(len(pairs))
        else:
            idx = rng.integers(0, len(pairs), size=batch)
        loss_val = _ips_batch_step(model, [codes[i] for i in idx], targets[idx], opt)
        if log and (step % eval_every == 0 or step == steps):
            row = {"step": step, "loss": loss_val}
            metrics.append(row)
            log(row)
    return model, metrics


def _ips_batch_step(model: IpsModel, seqs, targets: np.ndarray, opt) -> float:
    batch = len(seqs)
    t_max = max(s.shape[0] for s in seqs)
    xs = np.zeros((t_max, batch, CODE_BITS), dtype=np.float32)
    final_mask = np.zeros((t_max, batch, 1), dtype=np.float32)
    for i, s in enumerate(seqs):
        xs[: s.shape[0], i] = s
        final_mask[s.shape[0] - 1, i, 0] = 1.0 / batch
    y = Tensor(targets.reshape(batch, 1))

    opt.zero_grad()
    h, c = model.lstm.zero_state(batch)
    loss = None
    for t in range(t_max):
        h, c = model.lstm.step(Tensor(xs[t]), h, c)
        pred = model.head(h)
        err = T.mul(T.sub(pred, y), Tensor(final_mask[t]))
        term = T.square_sum(err)
        loss = term if loss is None else T.add(loss, term)
    loss = T.scale(loss, batch)  # undo the 1/batch inside the squared mask once
    loss.backward()
    opt.step()
    return float(loss.data)


def exact_parse_rate(model: IpsModel, pairs: list[tuple[str, int]]) -> float:
    """Fraction of sentences whose scaled prediction rounds to the true number."""
    hits = 0
    for text, n in pairs:
        pred = extract_quantity(text, model) * QUANTITY_SCALE
        if abs(pred - n) < 0.5:
            hits += 1
    return hits / len(pairs)
