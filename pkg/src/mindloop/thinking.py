"""Closed-loop command sessions over a trained model trio.

A session holds an imagined image that starts all-zero (eyes closed) and is
reshaped by successive commands with no external visual input. Commands
ending in '.' are executed: their symbols are fed teacher-forced against the
current imagined image and the terminal prediction refreshes the imagery.
Commands without the terminator ("this is ", "the size is ") are answer
prefixes: the model free-runs a completion. Working-memory state resets at
each command; the imagined image is what carries context between commands.

Two feedback modes exist. In full mode the predicted latent is decoded to a
fresh image which re-enters the encoder next time. In shortcut mode the
predicted latent and its v3->v4 projection feed back directly; pixels are
only rendered when a snapshot or caller explicitly asks.

The directive "close eyes." is handled by the session itself (image and
states reset) rather than the model, mirroring how a scripted run begins.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .curriculum import SIDE, Frame
from .errors import ContractError
from .language import PAD, binarize
from .pfc import ModelBundle, free_run, input_vector, split_prediction
from .render import write_pgm
from .seeding import make_rng

CLOSE_EYES = "close eyes."
MODES = ("full", "shortcut")


@dataclass
class ThoughtResult:
    completion: str
    image_after: np.ndarray
    latents: tuple[np.ndarray, np.ndarray]


class SessionState:
    """Single-owner thinking session; one command in flight at a time."""

    def __init__(self, bundle: ModelBundle, mode: str = "full", seed: int = 0,
                 persist_hidden: bool = False, max_completion_steps: int = 16):
        if bundle.vision is None or bundle.ips is None or bundle.pfc is None:
            raise ContractError("a session needs trained vision, language and working-memory models")
        if mode not in MODES:
            raise ContractError(f"unknown loop mode {mode!r}")
        self.bundle = bundle
        self.mode = mode
        self.seed = seed
        self.rng = make_rng(seed)
        self.persist_hidden = persist_hidden
        self.max_completion_steps = max_completion_steps
        self.transcript: list[dict] = []
        self._busy = False
        self._reset_imagery()
        self._reset_states()

    def _reset_imagery(self):
        self.image = np.zeros((SIDE, SIDE), dtype=np.float32)
        pair = self.bundle.vision.encode(self.image)
        self.latents = (pair.v3, pair.v4)
        self._image_stale = False

    def _reset_states(self):
        self.pfc_state = self.bundle.pfc.zero_state(1)
        self.ips_state = None

    def current_image(self, render: bool = True) -> np.ndarray:
        """The imagined image; in shortcut mode pixels render on request only."""
        if self._image_stale and render:
            self.image = self.bundle.vision.decode(self.latents[0])
            self._image_stale = False
        return self.image


def new_session(bundle: ModelBundle, mode: str = "full", seed: int = 0, **kwargs) -> SessionState:
    return SessionState(bundle, mode=mode, seed=seed, **kwargs)


def issue_command(session: SessionState, text: str) -> ThoughtResult:
    """Run one command or answer prefix against the imagined scene."""
    if session._busy:
        raise ContractError("session already has a command in flight")
    session._busy = True
    try:
        return _issue(session, text)
    finally:
        session._busy = False


def _issue(session: SessionState, text: str) -> ThoughtResult:
    if text == CLOSE_EYES:
        session._reset_imagery()
        session._reset_states()
        return _record(session, text, "")

    binarize(text)  # surfaces CodecError before any state changes
    if not session.persist_hidden:
        session._reset_states()
    vision = session.bundle.vision
    ips = session.bundle.ips
    pfc = session.bundle.pfc

    if text.endswith("."):
        if session.mode == "full":
            img = session.current_image()
            pair = vision.encode(img)
            v3, v4 = pair.v3, pair.v4
        else:
            v3, v4 = session.latents
        pred = None
        state = session.pfc_state
        ips_state = session.ips_state
        codes = binarize(text)
        for bits in codes:
            q, ips_state = ips.step(bits, ips_state)
            pred, state = pfc.step_row(input_vector(bits, q, v3, v4), state)
        session.pfc_state = state
        session.ips_state = ips_state
        _, v3_pred = split_prediction(pred)
        if session.mode == "full":
            session.image = vision.decode(v3_pred)
            pair = vision.encode(session.image)
            session.latents = (pair.v3, pair.v4)
            session._image_stale = False
        else:
            session.latents = (v3_pred, vision.v3_to_v4(v3_pred))
            session._image_stale = True
        return _record(session, text, "")

    # answer prefix: free-run the completion
    prefix_image = session.current_image(render=session.mode == "full")
    prefix = [Frame(symbol=ch, image=prefix_image) for ch in text]
    start = session.latents if session.mode == "shortcut" else None
    run = free_run(pfc, vision, ips, prefix, max_steps=session.max_completion_steps,
                   loop_mode=session.mode, start_latents=start)
    if session.mode == "full":
        session.image = run.image
        pair = vision.encode(session.image)
        session.latents = (pair.v3, pair.v4)
        session._image_stale = False
    else:
        session.latents = (run.v3, run.v4)
        session._image_stale = True
    return _record(session, text, run.completion)


def _record(session: SessionState, command: str, completion: str) -> ThoughtResult:
    snapshot = session.current_image().copy()
    session.transcript.append({
        "step": len(session.transcript),
        "command": command,
        "completion": completion,
        "image": snapshot,
    })
    return ThoughtResult(completion=completion, image_after=snapshot, latents=session.latents)


# ---------------------------------------------------------------------------
# scripted sessions

def command_slug(command: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", command.lower()).strip("-")
    return slug or "blank"


def load_script(path) -> list[str]:
    """One command per line; '#' comments and blank lines skipped.

    Trailing spaces are significant (they mark answer prefixes), so only the
    newline is stripped.
    """
    commands = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        commands.append(line)
    return commands


def run_script(bundle: ModelBundle, commands: list[str], *, mode: str = "full",
               seed: int = 0, out_dir=None, on_step=None) -> list[dict]:
    """Execute commands in order; write per-step PGM frames and a JSON record.

    Model outputs are never judged here: a wrong completion is still a valid
    transcript entry. On I/O failure the partially written transcript stays
    on disk.
    """
    session = new_session(bundle, mode=mode, seed=seed)
    records = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for i, command in enumerate(commands):
        result = issue_command(session, command)
        record = {
            "step": i,
            "command": command,
            "completion": result.completion,
            "mode": mode,
            "seed": seed,
        }
        if out is not None:
            frame_name = f"step{i:03d}_{command_slug(command)}.pgm"
            write_pgm(result.image_after, out / frame_name)
            record["frame"] = frame_name
            (out / "transcript.json").write_text(
                json.dumps(records + [record], indent=2, sort_keys=True) + "\n")
        records.append(record)
        if on_step:
            on_step(record, result)
    return records


FIG_SCRIPT_NAME = "fig7.script"


def bundled_script_path() -> Path:
    return Path(__file__).parent / "scripts" / FIG_SCRIPT_NAME
