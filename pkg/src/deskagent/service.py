"""Session service: the agent loop behind a message-stream interface.

A session owns one episode. Each user input advances the loop
synchronously until the agent next waits for input or the episode ends;
every step of the way is recorded as a ``SessionMessage`` with a strictly
increasing sequence number, consumable over REST polling or a WebSocket.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket
from fastapi.websockets import WebSocketDisconnect
from pydantic import BaseModel

from . import lang, router, scenegen, world
from .pipeline import Pipeline
from .world import SceneState, TaskSpec

MESSAGE_KINDS = ("scene_frame", "agent_utterance", "signal", "user_answer",
                 "action_progress", "episode_result", "error")

# one action_progress frame per this many simulated steps
FRAME_STRIDE = 10


class SessionError(RuntimeError):
    pass


class PhaseError(SessionError):
    """Input arrived in a phase that does not accept it."""


def scene_frame(scene: SceneState) -> dict:
    held_obj = scene.held_object()
    held = held_obj.id if held_obj is not None else None
    return {
        "objects": [
            {"id": o.id, "category": o.category, "color": o.color,
             "x": o.position.x, "y": o.position.y, "radius": o.radius,
             "water": o.water, "held": o.id == held}
            for o in scene.objects
        ],
        "effector": {"x": scene.effector.position.x,
                     "y": scene.effector.position.y,
                     "gripper": scene.effector.gripper,
                     "tilt": scene.effector.tilt},
        "brightness": scene.brightness,
        "step_count": scene.step_count,
    }


@dataclass
class SessionMessage:
    seq: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "payload": self.payload}


SCENARIOS = {
    "place-ambiguous": ("place", "ambiguous"),
    "place-unambiguous": ("place", "unambiguous"),
    "place-absent": ("place", "absent_target"),
    "pour-ambiguous": ("pour", "ambiguous"),
    "pour-unambiguous": ("pour", "unambiguous"),
    "pour-absent": ("pour", "absent_target"),
    "stack-ambiguous": ("stack", "ambiguous"),
    "stack-unambiguous": ("stack", "unambiguous"),
}


class Session:
    """One live episode; single-threaded, advanced by ``provide_input``."""

    def __init__(self, session_id: int, pipe: Pipeline, scene: SceneState,
                 task: TaskSpec, max_rounds: int = scenegen.MAX_ROUNDS,
                 max_chunks: int = 6, seed: int = 0):
        self.id = session_id
        self.pipe = pipe
        self.scene = scene
        self.task = task
        self.max_rounds = max_rounds
        self.max_chunks = max_chunks
        self.seed = seed
        self.phase = router.AgentPhase.AWAIT_INSTRUCTION
        self.rounds = 0
        self.history: list[str] = []
        self.current_instruction: tuple[str, ...] | None = None
        self.messages: list[SessionMessage] = []
        self.transcript: list[tuple[str, tuple[str, ...]]] = []
        self.result: dict | None = None
        self._obs = world.render_observation(scene)
        self._lock = threading.Lock()
        self._emit("scene_frame", scene_frame(scene))

    # -- messaging ---------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> SessionMessage:
        msg = SessionMessage(len(self.messages), kind, payload)
        self.messages.append(msg)
        return msg

    def messages_since(self, since: int) -> list[SessionMessage]:
        return [m for m in self.messages if m.seq > since]

    @property
    def closed(self) -> bool:
        return self.phase in (router.AgentPhase.DONE,
                              router.AgentPhase.REJECTED,
                              router.AgentPhase.ERROR)

    # -- episode loop ------------------------------------------------------

    def provide_input(self, text: str) -> list[SessionMessage]:
        """Feed one user utterance; run until the next wait or terminal."""
        with self._lock:
            return self._advance(text)

    def _advance(self, text: str) -> list[SessionMessage]:
        if self.closed:
            raise SessionError("session is closed")
        if self.phase not in (router.AgentPhase.AWAIT_INSTRUCTION,
                              router.AgentPhase.AWAIT_ANSWER):
            raise PhaseError(f"phase {self.phase.name} does not accept input")
        start = len(self.messages)
        tokens = tuple(text.split())
        self.transcript.append(("user", tokens))
        if self.phase is router.AgentPhase.AWAIT_INSTRUCTION:
            self.current_instruction = tokens
            self.history = [lang.USER, *tokens, lang.AGENT]
            self._emit("user_answer", {"role": "instruction",
                                       "text": list(tokens)})
        else:
            self.rounds += 1
            self.history += [lang.USER, *tokens, lang.AGENT]
            self._emit("user_answer", {"role": "answer", "text": list(tokens)})
        self.phase = router.AgentPhase.GENERATE
        self._loop()
        return self.messages[start:]

    def _loop(self) -> None:
        while self.phase in (router.AgentPhase.GENERATE,
                             router.AgentPhase.CONFIRM):
            if self.phase is router.AgentPhase.CONFIRM:
                self.history = [lang.USER, *self.current_instruction,
                                lang.AGENT]
            try:
                gen, _, no_signal = self.pipe.collab.generate(self.history,
                                                              self._obs)
            except Exception as exc:
                self._fail(f"generation failed: {exc}")
                return
            self.transcript.append(("agent", tuple(gen)))
            if no_signal:
                self._fail("missing signal token")
                return
            try:
                sig = router.detect_signal(gen)
            except router.ProtocolError as exc:
                self._fail(str(exc))
                return
            self._emit("agent_utterance", {"text": list(gen),
                                           "signal": sig.value})
            self._emit("signal", {"signal": sig.value})
            nxt, effect = router.transition(self.phase, sig)
            if nxt is router.AgentPhase.ERROR:
                self._fail(f"illegal signal {sig.value} in "
                           f"phase {self.phase.name}")
                return
            if effect == "ask":
                if self.rounds >= self.max_rounds:
                    self._fail("clarification round limit exceeded")
                    return
                self.history = self.history + list(gen)
                self.phase = router.AgentPhase.AWAIT_ANSWER
                return
            if effect == "confirm":
                try:
                    self.current_instruction = \
                        router.extract_correct_instruction(gen)
                except router.ProtocolError as exc:
                    self._fail(str(exc))
                    return
                self.phase = router.AgentPhase.CONFIRM
                continue
            if effect == "act":
                self.phase = router.AgentPhase.ACTING
                self._act()
                return
            # refuse
            self.phase = router.AgentPhase.REJECTED
            self._finish(success=False, refused=True)
            return

    def _act(self) -> None:
        counter = {"n": 0}

        def frame_hook(scene: SceneState) -> None:
            counter["n"] += 1
            if counter["n"] % FRAME_STRIDE == 0:
                self._emit("action_progress", scene_frame(scene))

        result = router.EpisodeResult()
        try:
            self.scene, ok = router.act_until_done(
                self.pipe, self.scene, self.task, self.current_instruction,
                self.max_chunks, self.seed, result, frame_hook)
        except router.ProtocolError as exc:
            self._fail(str(exc))
            return
        self._obs = world.render_observation(self.scene)
        self.phase = router.AgentPhase.DONE
        self._finish(success=ok, refused=False,
                     world_steps=result.world_steps)

    def _finish(self, success: bool, refused: bool,
                world_steps: int = 0) -> None:
        self._emit("scene_frame", scene_frame(self.scene))
        self.result = {
            "success": success, "refused": refused,
            "rounds": self.rounds, "world_steps": world_steps,
            "resolved_instruction": (list(self.current_instruction)
                                     if self.current_instruction else None),
            "transcript": [[sp, list(t)] for sp, t in self.transcript],
        }
        self._emit("episode_result", self.result)

    def _fail(self, reason: str) -> None:
        self.phase = router.AgentPhase.ERROR
        self._emit("error", {"reason": reason})
        self.result = {"success": False, "refused": False, "error": reason,
                       "rounds": self.rounds,
                       "transcript": [[sp, list(t)]
                                      for sp, t in self.transcript]}
        self._emit("episode_result", self.result)


class SessionHub:
    """Checkpoint registry plus session lifecycle; shared read-only models."""

    def __init__(self, checkpoint_dir: str | Path):
        self.checkpoint_dir = Path(checkpoint_dir)
        self._pipes: dict[str, Pipeline] = {}
        self._sessions: dict[int, Session] = {}
        self._next_id = 1
        self._lock = threading.Lock()

    def list_checkpoints(self) -> list[str]:
        return sorted(p.stem for p in self.checkpoint_dir.glob("*.ckpt"))

    def list_scenarios(self) -> list[str]:
        return sorted(SCENARIOS)

    def _pipeline(self, checkpoint_id: str) -> Pipeline:
        if checkpoint_id not in self._pipes:
            path = self.checkpoint_dir / f"{checkpoint_id}.ckpt"
            if not path.exists():
                raise SessionError(f"unknown checkpoint: {checkpoint_id}")
            pipe, _ = Pipeline.load(path)
            self._pipes[checkpoint_id] = pipe
        return self._pipes[checkpoint_id]

    def create_session(self, checkpoint_id: str, scenario: str,
                       seed: int = 0) -> Session:
        if scenario not in SCENARIOS:
            raise SessionError(f"unknown scenario: {scenario}")
        pipe = self._pipeline(checkpoint_id)
        family, mode = SCENARIOS[scenario]
        scene, task, _ = scenegen.sample_scene(family, mode, seed)
        with self._lock:
            sid = self._next_id
            self._next_id += 1
            session = Session(sid, pipe, scene, task, seed=seed)
            self._sessions[sid] = session
        return session

    def get(self, session_id: int) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionError(f"no such session: {session_id}") from None


# module-scope request models: the route annotations below are resolved
# lazily by name against this module's globals
class CreateSessionRequest(BaseModel):
    checkpoint: str
    scenario: str
    seed: int = 0


class UserInput(BaseModel):
    text: str


def build_app(hub: SessionHub):
    """FastAPI application over a session hub."""
    app = FastAPI(title="deskagent service")
    app.state.hub = hub

    def _http(exc: SessionError) -> HTTPException:
        code = 409 if isinstance(exc, PhaseError) else 404
        return HTTPException(status_code=code, detail=str(exc))

    @app.get("/checkpoints")
    def checkpoints():
        return {"checkpoints": hub.list_checkpoints()}

    @app.get("/scenarios")
    def scenarios():
        return {"scenarios": hub.list_scenarios()}

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            s = hub.create_session(req.checkpoint, req.scenario, req.seed)
        except SessionError as exc:
            raise _http(exc)
        return {"session_id": s.id, "phase": s.phase.value,
                "messages": [m.to_dict() for m in s.messages]}

    @app.post("/sessions/{sid}/input")
    def post_input(sid: int, body: UserInput):
        try:
            msgs = hub.get(sid).provide_input(body.text)
        except SessionError as exc:
            raise _http(exc)
        s = hub.get(sid)
        return {"phase": s.phase.value,
                "messages": [m.to_dict() for m in msgs]}

    @app.get("/sessions/{sid}/messages")
    def poll_messages(sid: int, since: int = -1):
        try:
            s = hub.get(sid)
        except SessionError as exc:
            raise _http(exc)
        return {"phase": s.phase.value, "closed": s.closed,
                "messages": [m.to_dict() for m in s.messages_since(since)]}

    @app.get("/sessions/{sid}/transcript")
    def transcript(sid: int):
        try:
            s = hub.get(sid)
        except SessionError as exc:
            raise _http(exc)
        return {"transcript": [[sp, list(t)] for sp, t in s.transcript],
                "phase": s.phase.value, "result": s.result}

    @app.get("/sessions/{sid}/replay")
    def replay(sid: int):
        try:
            s = hub.get(sid)
        except SessionError as exc:
            raise _http(exc)
        return {"messages": [m.to_dict() for m in s.messages],
                "result": s.result}

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: int):
        import asyncio

        await ws.accept()
        try:
            s = hub.get(sid)
        except SessionError:
            await ws.close(code=4404)
            return
        sent = -1
        try:
            while True:
                for m in s.messages_since(sent):
                    await ws.send_json(m.to_dict())
                    sent = m.seq
                if s.closed:
                    await ws.close()
                    return
                try:
                    text = await asyncio.wait_for(ws.receive_text(),
                                                  timeout=0.1)
                except asyncio.TimeoutError:
                    continue
                try:
                    await asyncio.to_thread(s.provide_input, text)
                except SessionError as exc:
                    await ws.send_json({"seq": -1, "kind": "error",
                                        "payload": {"reason": str(exc)}})
        except WebSocketDisconnect:
            return

    return app


def run_chat(pipe: Pipeline, scenario: str, seed: int = 0,
             reader=input, writer=print) -> Session:
    """Headless terminal chat: same loop, stdin/stdout transport."""
    family, mode = SCENARIOS[scenario]
    scene, task, _ = scenegen.sample_scene(family, mode, seed)
    session = Session(0, pipe, scene, task, seed=seed)
    writer(f"scenario {scenario}: {len(scene.objects)} objects on the table")
    while not session.closed:
        try:
            text = reader("you> ")
        except EOFError:
            break
        if not text.strip():
            continue
        try:
            msgs = session.provide_input(text)
        except PhaseError as exc:
            writer(f"[{exc}]")
            continue
        for m in msgs:
            if m.kind == "agent_utterance":
                writer("agent> " + " ".join(m.payload["text"]))
            elif m.kind == "episode_result":
                writer(f"[episode over: success={m.payload.get('success')} "
                       f"refused={m.payload.get('refused')}]")
            elif m.kind == "error":
                writer(f"[error: {m.payload['reason']}]")
    return session
