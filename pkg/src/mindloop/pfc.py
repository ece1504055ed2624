"""Working-memory model: an LSTM plus head that predicts the next frame.

Each time step consumes one 169-vector [symbol code (8) | quantity (1) |
v3 (128) | v4 (32)] assembled from the frozen language and vision models,
and emits a 136-vector [predicted symbol code (8, sigmoid) | predicted v3
(128, tanh)]. Training is teacher-forced next-frame prediction: the
prediction at step t is scored against the encoding of frame t+1, summed
over t = 1..T-1 and divided by T-1. Free-running replaces ground truth with
the model's own rounded symbol and its decoded-or-shortcut image feedback,
which is what evaluation and the thinking loop use.

Stages train cumulatively: each stage's batches mix a replay fraction of
episodes from earlier syntaxes so previously learned commands survive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .curriculum import Episode, Frame, make_episode
from .errors import ContractError, ShapeError
from .language import (
    CODE_BITS,
    PAD,
    IpsModel,
    binarize,
    round_code,
    textize,
)
from .layers import FcLayer, LstmLayer
from .optim import Adam
from .seeding import make_rng
from .tensor import Tensor
from .vision import VisionModel, param_checksum

PRED_DIM_SYM = CODE_BITS  # leading slice of every prediction


def input_vector(bits: np.ndarray, quantity: float, v3: np.ndarray, v4: np.ndarray) -> np.ndarray:
    """Assemble one time step's input in the fixed [code|quantity|v3|v4] layout."""
    return np.concatenate([
        np.asarray(bits, dtype=np.float32).reshape(CODE_BITS),
        np.array([quantity], dtype=np.float32),
        np.asarray(v3, dtype=np.float32).reshape(-1),
        np.asarray(v4, dtype=np.float32).reshape(-1),
    ])


def split_prediction(pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Break a prediction row into (symbol code, v3)."""
    pred = np.asarray(pred)
    return pred[:CODE_BITS], pred[CODE_BITS:]


class PfcModel:
    def __init__(self, lstm: LstmLayer, head: FcLayer, v3_dim: int, v4_dim: int):
        self.lstm = lstm
        self.head = head
        self.v3_dim = v3_dim
        self.v4_dim = v4_dim
        expected_in = CODE_BITS + 1 + v3_dim + v4_dim
        if lstm.n_in != expected_in or head.n_out != CODE_BITS + v3_dim:
            raise ShapeError("working-memory dims do not line up with the latent sizes")

    @classmethod
    def new(cls, rng: np.random.Generator, v3_dim: int = 128, v4_dim: int = 32,
            hidden: int = 512) -> "PfcModel":
        lstm = LstmLayer.new(rng, CODE_BITS + 1 + v3_dim + v4_dim, hidden)
        head = FcLayer.new(rng, hidden, CODE_BITS + v3_dim, "identity")
        return cls(lstm, head, v3_dim, v4_dim)

    @property
    def hidden(self) -> int:
        return self.lstm.hidden

    def zero_state(self, batch: int):
        return self.lstm.zero_state(batch)

    def step(self, x: Tensor, state) -> tuple[Tensor, tuple]:
        """One recurrence; head splits into a sigmoid code and a tanh latent."""
        h, c = state
        h, c = self.lstm.step(x, h, c)
        raw = self.head(h)
        code = T.sigmoid(T.narrow(raw, 1, 0, CODE_BITS))
        latent = T.tanh(T.narrow(raw, 1, CODE_BITS, raw.shape[1]))
        return T.concat([code, latent], axis=1), (h, c)

    def step_row(self, row: np.ndarray, state) -> tuple[np.ndarray, tuple]:
        """Inference convenience for a single unbatched input vector."""
        pred, state = self.step(Tensor(row.reshape(1, -1)), state)
        return pred.data[0], state

    def named_params(self) -> dict[str, Tensor]:
        return dict(self.lstm.params("lstm") + self.head.params("head"))

    def arch(self) -> dict:
        return {"kind": "pfc", "v3": self.v3_dim, "v4": self.v4_dim, "hidden": self.hidden}

    @classmethod
    def from_component(cls, arch: dict, params: dict[str, np.ndarray]) -> "PfcModel":
        model = cls.new(make_rng(0), v3_dim=arch["v3"], v4_dim=arch["v4"], hidden=arch["hidden"])
        from .language import _load_named

        _load_named(model.named_params(), params)
        return model


def next_frame_loss(predictions, actuals) -> float:
    """Mean over steps of the squared distance between prediction t and frame t+1.

    Both sequences must align one-to-one and be nonempty; the divisor is the
    step count, matching a sum over t = 1..T-1 divided by T-1.
    """
    preds = [np.asarray(p, dtype=np.float64).reshape(-1) for p in predictions]
    acts = [np.asarray(a, dtype=np.float64).reshape(-1) for a in actuals]
    if len(preds) != len(acts):
        raise ContractError(f"{len(preds)} predictions vs {len(acts)} actuals")
    if not preds:
        raise ContractError("next_frame_loss needs at least one step")
    total = 0.0
    for p, a in zip(preds, acts):
        if p.shape != a.shape:
            raise ContractError(f"prediction shape {p.shape} vs actual {a.shape}")
        d = p - a
        total += float(d @ d)
    return total / len(preds)


# ---------------------------------------------------------------------------
# episode encoding

@dataclass
class EncodedEpisode:
    inputs: np.ndarray   # [T, 169] teacher-forced inputs, steps 0..T-1
    targets: np.ndarray  # [T, 136] encodings of frames 1..T
    sentence: str


def encode_episode(ep: Episode, vision: VisionModel, ips: IpsModel) -> EncodedEpisode:
    """Teacher-forcing arrays for one episode.

    Command frames share one visible image by construction, so the vision
    stack runs once on it and once on the outcome frame.
    """
    sentence = ep.sentence
    t_len = len(sentence)
    codes = binarize(sentence)
    from .language import ips_forward

    quantities = ips_forward(codes, ips)
    # single-row encodes keep training targets bit-identical to what the
    # closed loop computes at inference time (BLAS rounds per batch shape)
    src_pair = vision.encode(ep.frames[0].image)
    v3_src, v4_src = src_pair.v3, src_pair.v4
    v3_out = vision.encode(ep.frames[-1].image).v3

    inputs = np.zeros((t_len, CODE_BITS + 1 + vision.v3_dim + vision.v4_dim), dtype=np.float32)
    targets = np.zeros((t_len, CODE_BITS + vision.v3_dim), dtype=np.float32)
    pad_bits = binarize(PAD)[0]
    for k in range(t_len):
        inputs[k] = input_vector(codes[k], quantities[k], v3_src, v4_src)
        if k + 1 < t_len:
            targets[k] = np.concatenate([codes[k + 1], v3_src])
        else:
            targets[k] = np.concatenate([pad_bits, v3_out])
    return EncodedEpisode(inputs=inputs, targets=targets, sentence=sentence)


def _stack_batch(encoded: list[EncodedEpisode]):
    batch = len(encoded)
    t_max = max(e.inputs.shape[0] for e in encoded)
    in_dim = encoded[0].inputs.shape[1]
    out_dim = encoded[0].targets.shape[1]
    xs = np.zeros((t_max, batch, in_dim), dtype=np.float32)
    ys = np.zeros((t_max, batch, out_dim), dtype=np.float32)
    w = np.zeros((t_max, batch, 1), dtype=np.float32)
    for i, e in enumerate(encoded):
        t_len = e.inputs.shape[0]
        xs[:t_len, i] = e.inputs
        ys[:t_len, i] = e.targets
        # every step is supervised, the first included: completion from the
        # first letter needs a trained step-0 prediction
        w[:t_len, i, 0] = 1.0 / t_len
    return xs, ys, w


def batch_loss(model: PfcModel, xs, ys, w) -> Tensor:
    """Masked teacher-forced loss over a padded batch; mean of per-episode losses."""
    t_max, batch, _ = xs.shape
    state = model.zero_state(batch)
    loss = None
    for k in range(t_max):
        pred, state = model.step(Tensor(xs[k]), state)
        diff = T.sub(pred, Tensor(ys[k]))
        term = T.sum_all(T.mul(T.mul(diff, diff), Tensor(w[k])))
        loss = term if loss is None else T.add(loss, term)
    return T.scale(loss, 1.0 / batch)


# ---------------------------------------------------------------------------
# staged training

@dataclass
class Stage:
    name: str
    syntaxes: tuple[int, ...]
    steps: int
    replay: float = 0.25
    criterion: float | None = None  # probe-loss threshold; stage stops when reached
    probe_every: int = 25
    probe_size: int = 24


@dataclass
class StageResult:
    name: str
    steps_run: int
    steps_to_criterion: int | None
    rows: list[dict] = field(default_factory=list)


def default_stages(scale: float = 1.0, replay: float = 0.25) -> list[Stage]:
    """The curriculum in teaching order; budgets scale together."""
    spec = [
        ("move", (1, 2), 6000),
        ("this-is", (3,), 4000),
        ("size", (4,), 1200),
        ("size-not", (5,), 600),
        ("give-me", (6,), 1500),
        ("resize", (7,), 1000),
        ("rotate", (8,), 2000),
    ]
    return [Stage(name=n, syntaxes=s, steps=max(1, int(round(k * scale))), replay=replay)
            for n, s, k in spec]


def train_stage(model: PfcModel, vision: VisionModel, ips: IpsModel, stage: Stage,
                pool, rng: np.random.Generator, *, batch: int = 16, lr: float = 1e-3,
                replay_syntaxes: tuple[int, ...] = (), opt: Adam | None = None,
                log=None, log_every: int = 100) -> StageResult:
    """Teacher-forced training on one stage, mixing in replay of earlier syntaxes.

    The frozen vision and language models must not move; their checksums are
    compared before and after and a violation raises.
    """
    frozen_before = (param_checksum(vision.named_params()), param_checksum(ips.named_params()))
    if opt is None:
        opt = Adam(list(model.named_params().values()), lr=lr)

    n_replay = int(round(stage.replay * batch)) if replay_syntaxes else 0
    n_new = batch - n_replay

    probe = None
    if stage.criterion is not None:
        probe_eps = [make_episode(int(rng.choice(stage.syntaxes)), pool, rng)
                     for _ in range(stage.probe_size)]
        probe = _stack_batch([encode_episode(e, vision, ips) for e in probe_eps])

    result = StageResult(name=stage.name, steps_run=0, steps_to_criterion=None)
    for step in range(1, stage.steps + 1):
        episodes = [make_episode(int(rng.choice(stage.syntaxes)), pool, rng) for _ in range(n_new)]
        episodes += [make_episode(int(rng.choice(replay_syntaxes)), pool, rng) for _ in range(n_replay)]
        xs, ys, w = _stack_batch([encode_episode(e, vision, ips) for e in episodes])
        opt.zero_grad()
        loss = batch_loss(model, xs, ys, w)
        loss.backward()
        opt.step()
        result.steps_run = step

        if log and (step % log_every == 0 or step == 1 or step == stage.steps):
            row = {"stage": stage.name, "step": step, "loss": float(loss.data)}
            result.rows.append(row)
            log(row)
        if probe is not None and step % stage.probe_every == 0:
            probe_loss = float(batch_loss(model, *probe).data)
            if probe_loss <= stage.criterion:
                result.steps_to_criterion = step
                break

    frozen_after = (param_checksum(vision.named_params()), param_checksum(ips.named_params()))
    if frozen_before != frozen_after:
        raise ContractError("frozen vision/language parameters changed during a stage")
    return result


# ---------------------------------------------------------------------------
# free running

@dataclass
class FreeRunResult:
    frames: list[Frame]          # generated frames, terminal pad frame included
    completion: str              # generated symbols with terminators stripped
    v3: np.ndarray               # final predicted latent
    v4: np.ndarray
    image: np.ndarray            # final loop image


def free_run(model, vision: VisionModel, ips: IpsModel, prefix_frames: list[Frame],
             *, max_steps: int = 20, loop_mode: str = "full",
             start_latents: tuple[np.ndarray, np.ndarray] | None = None) -> FreeRunResult:
    """Feed a prefix teacher-forced, then let the model drive itself.

    After the prefix each step consumes the rounded previous symbol code and,
    in full mode, the re-encoded decode of the predicted latent (the image
    changes as the model imagines); in shortcut mode the predicted latent and
    its v3->v4 projection feed back directly and the image stays put.
    Generation stops at the pad symbol or after max_steps.
    """
    if not prefix_frames:
        raise ContractError("free_run needs a nonempty prefix")
    if loop_mode not in ("full", "shortcut"):
        raise ContractError(f"unknown loop mode {loop_mode!r}")

    state = model.zero_state(1)
    ips_state = None
    image = prefix_frames[-1].image
    if start_latents is not None:
        v3, v4 = start_latents
    else:
        pair = vision.encode(image)
        v3, v4 = pair.v3, pair.v4

    pred = None
    for frame in prefix_frames:
        bits = binarize(frame.symbol)[0]
        q, ips_state = ips.step(bits, ips_state)
        if start_latents is None:
            pair = vision.encode(frame.image)
            v3, v4 = pair.v3, pair.v4
            image = frame.image
        pred, state = model.step_row(input_vector(bits, q, v3, v4), state)

    frames: list[Frame] = []
    completion = []
    for _ in range(max_steps):
        code, v3_pred = split_prediction(pred)
        bits = round_code(code)
        sym = textize(bits)
        v3 = v3_pred
        if loop_mode == "full":
            image = vision.decode(v3_pred)
            pair = vision.encode(image)
            v3, v4 = pair.v3, pair.v4
        else:
            v4 = vision.v3_to_v4(v3_pred)
        frames.append(Frame(symbol=sym, image=image))
        if sym == PAD:
            break
        completion.append(sym)
        q, ips_state = ips.step(bits, ips_state)
        pred, state = model.step_row(input_vector(bits, q, v3, v4), state)

    text = "".join(completion)
    if text.endswith("."):
        text = text[:-1]
    code, v3_last = split_prediction(pred)
    v4_last = vision.v3_to_v4(v3_last)
    return FreeRunResult(frames=frames, completion=text, v3=v3_last, v4=v4_last, image=image)


def teacher_forced_predictions(model, enc: EncodedEpisode) -> np.ndarray:
    """Predictions at every step of an encoded episode, ground truth as input."""
    state = model.zero_state(1)
    preds = np.zeros_like(enc.targets)
    for k in range(enc.inputs.shape[0]):
        preds[k], state = model.step_row(enc.inputs[k], state)
    return preds


# ---------------------------------------------------------------------------
# evaluation

ANSWER_PREFIX = {3: "this is ", 4: "the size is ", 5: "the size is not "}


def completion_score(model, vision, ips, ep: Episode, sentences: list[str]) -> tuple[int, int]:
    """Deterministic-position completion score after the first letter.

    Free-runs from the sentence's first symbol and scores every position
    whose next symbol is forced by the grammar given what has been emitted;
    the first off-grammar emission scores one miss and ends the walk.
    """
    from .language import allowed_next_symbols

    prefix = [Frame(symbol=ep.sentence[0], image=ep.frames[0].image)]
    run = free_run(model, vision, ips, prefix, max_steps=len(ep.sentence) + 4)
    text = ep.sentence[0]
    correct = total = 0
    for frame in run.frames:
        allowed = allowed_next_symbols(text, sentences)
        deterministic = len(allowed) == 1
        if deterministic:
            total += 1
            if frame.symbol in allowed:
                correct += 1
        if frame.symbol not in allowed:
            if not deterministic:
                total += 1
            break
        if frame.symbol == PAD:
            break
        text += frame.symbol
    return correct, total


def evaluate_syntax(model, vision: VisionModel, ips: IpsModel, syntax_id: int,
                    n_episodes: int, pool, rng: np.random.Generator,
                    *, known_syntaxes=None) -> dict:
    """Per-syntax metrics: completion accuracy, answer accuracy where the
    sentence carries an answer word, and imagined-image error elsewhere."""
    from .language import all_sentences

    known = list(known_syntaxes) if known_syntaxes is not None else [syntax_id]
    sentences = all_sentences(known)
    comp_correct = comp_total = 0
    answer_hits = 0
    mses = []
    corrs = []
    for _ in range(n_episodes):
        ep = make_episode(syntax_id, pool, rng)
        c, t = completion_score(model, vision, ips, ep, sentences)
        comp_correct += c
        comp_total += t

        enc = encode_episode(ep, vision, ips)
        preds = teacher_forced_predictions(model, enc)

        if syntax_id in ANSWER_PREFIX:
            answer_hits += _answer_matches(model, vision, ips, ep)
        else:
            _, v3_pred = split_prediction(preds[-1])
            img = vision.decode(v3_pred)
            want = ep.frames[-1].image
            mses.append(float(np.mean((img - want) ** 2)))
            corrs.append(_pearson(img, want))

    out = {
        "syntax": syntax_id,
        "episodes": n_episodes,
        "completion_acc": comp_correct / comp_total if comp_total else 0.0,
    }
    if syntax_id in ANSWER_PREFIX:
        out["answer_acc"] = answer_hits / n_episodes
    else:
        out["image_mse"] = float(np.mean(mses))
        out["image_corr"] = float(np.mean(corrs))
    return out


def _answer_matches(model, vision, ips, ep: Episode) -> bool:
    prefix_text = ANSWER_PREFIX[ep.syntax_id]
    prefix = [Frame(symbol=ch, image=ep.frames[0].image) for ch in prefix_text]
    run = free_run(model, vision, ips, prefix, max_steps=8)
    want = ep.sentence[len(prefix_text):-1]
    return run.completion == want


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a.reshape(-1).astype(np.float64)
    b = b.reshape(-1).astype(np.float64)
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))


# ---------------------------------------------------------------------------
# the trained trio travels together

@dataclass
class ModelBundle:
    vision: VisionModel
    ips: IpsModel
    pfc: PfcModel | None = None

    def save(self, path, meta: dict | None = None) -> None:
        from . import checkpoint as ck

        components = {
            "vision": ck.Component(self.vision.arch(),
                                   {k: v.data for k, v in self.vision.named_params().items()}),
            "ips": ck.Component(self.ips.arch(),
                                {k: v.data for k, v in self.ips.named_params().items()}),
        }
        if self.pfc is not None:
            components["pfc"] = ck.Component(self.pfc.arch(),
                                             {k: v.data for k, v in self.pfc.named_params().items()})
        ck.save(ck.Checkpoint(meta=meta or {}, components=components), path)

    @classmethod
    def load(cls, path) -> tuple["ModelBundle", dict]:
        from . import checkpoint as ck

        ckpt = ck.load(path)
        if "vision" not in ckpt.components or "ips" not in ckpt.components:
            raise ContractError(f"checkpoint {path} is missing vision or language components")
        vis = VisionModel.from_component(ckpt.components["vision"].arch,
                                         ckpt.components["vision"].params)
        ips = IpsModel.from_component(ckpt.components["ips"].arch,
                                      ckpt.components["ips"].params)
        pfc = None
        if "pfc" in ckpt.components:
            pfc = PfcModel.from_component(ckpt.components["pfc"].arch,
                                          ckpt.components["pfc"].params)
        return cls(vision=vis, ips=ips, pfc=pfc), ckpt.meta
