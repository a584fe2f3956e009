"""Client/server deployment of chunk policies over TCP.

Frames are a 4-byte big-endian length followed by one UTF-8 JSON object on a
single line.  A session is opened by its first request, which must carry the
world file text (the server needs the map to plan) and may carry a policy
seed.  Every later request only sends the observed pose.  Sessions belong to
the connection that opened them and are discarded when it closes.
"""
from __future__ import annotations

import json
import logging
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field

from .entropy import ExecMode
from .grammar import ActionUnits, chunk_text, parse_chunk
from .hpac import HpacConfig
from .sim.episode import EpisodeResult, build_policy, drive
from .sim.policy import NoiseModel, PolicyFailure
from .sim.world import Pose, World, WorldFormatError, format_world, parse_world

log = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024
VOLATILE_FIELDS = ("server_latency_ms",)


class ProtocolError(RuntimeError):
    pass


class ConnectionLost(ProtocolError):
    pass


class ServerError(ProtocolError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def encode(obj: dict) -> bytes:
    data = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
    return HEADER.pack(len(data)) + data


def _recv_exact(sock, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise ConnectionLost("connection closed mid-frame")
            return None
        buf.extend(chunk)
    return bytes(buf)


def recv_frame(sock) -> bytes | None:
    """Raw payload of the next frame, ``None`` on a clean end of stream."""
    head = _recv_exact(sock, HEADER.size)
    if head is None:
        return None
    (n,) = HEADER.unpack(head)
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds limit")
    payload = _recv_exact(sock, n)
    if payload is None:
        raise ConnectionLost("connection closed mid-frame")
    return payload


def send(sock, obj: dict) -> bytes:
    frame = encode(obj)
    sock.sendall(frame)
    return frame


# -- server ------------------------------------------------------------------

@dataclass
class ServerConfig:
    policy: str = "oracle"
    exec_mode: ExecMode = field(default_factory=lambda: ExecMode("entropy"))
    units: ActionUnits = ActionUnits()
    hpac: HpacConfig = HpacConfig()
    noise: NoiseModel = NoiseModel()
    k_max: int = 3
    default_seed: int = 0


@dataclass
class _Session:
    world: World
    policy: object
    last_seq: int
    lock: threading.Lock = field(default_factory=threading.Lock)


class _Malformed(Exception):
    pass


def _error(code: str, message: str, req: dict | None = None) -> dict:
    out = {"error": {"code": code, "message": message}}
    if isinstance(req, dict):
        for key in ("session_id", "seq"):
            if key in req:
                out[key] = req[key]
    return out


def _observation(req: dict) -> Pose:
    obs = req.get("observation")
    if not isinstance(obs, dict):
        raise _Malformed("observation must be an object with x, y, heading")
    try:
        return Pose.from_seq([obs["x"], obs["y"], obs["heading"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise _Malformed(f"bad observation: {exc}") from None


class NavServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, config: ServerConfig = ServerConfig()):
        self.config = config
        self.sessions: dict[str, _Session] = {}
        self._sessions_lock = threading.Lock()
        super().__init__(address, _Handler)

    def _open(self, req: dict, sid: str, seq: int) -> _Session:
        if "world" not in req:
            raise _Malformed("first request of a session must include the world")
        try:
            world = parse_world(req["world"])
        except (WorldFormatError, ValueError, TypeError) as exc:
            raise _Malformed(f"bad world: {exc}") from None
        seed = req.get("seed", self.config.default_seed)
        if not isinstance(seed, int):
            raise _Malformed("seed must be an integer")
        cfg = self.config
        policy = build_policy(cfg.policy, seed, cfg.units, cfg.hpac, cfg.noise)
        return _Session(world, policy, seq - 1)

    def handle_request_obj(self, req, opened: set | None = None) -> dict:
        """Answer one decoded request; ids of newly opened sessions go into ``opened``."""
        t0 = time.perf_counter()
        if not isinstance(req, dict):
            return _error("MALFORMED", "request must be a JSON object")
        sid, seq = req.get("session_id"), req.get("seq")
        if not isinstance(sid, str) or not sid or type(seq) is not int:
            return _error("MALFORMED", "session_id (string) and seq (integer) are required", req)
        try:
            pose = _observation(req)
            with self._sessions_lock:
                session = self.sessions.get(sid)
                if session is None:
                    session = self.sessions[sid] = self._open(req, sid, seq)
                    if opened is not None:
                        opened.add(sid)
            with session.lock:
                if seq <= session.last_seq:
                    return _error("OUT_OF_ORDER", f"seq {seq} after {session.last_seq}", req)
                session.last_seq = seq
                cfg = self.config
                out = session.policy(session.world, pose, cfg.k_max)
                t_star, H = cfg.exec_mode.horizon(out.predictions)
        except _Malformed as exc:
            return _error("MALFORMED", str(exc), req)
        except PolicyFailure as exc:
            return _error("POLICY_FAILURE", str(exc), req)
        return {
            "session_id": sid,
            "seq": seq,
            "chunks": [chunk_text(p.chunk, self.config.units) for p in out.predictions],
            "entropies": [float(h) for h in H],
            "t_star": t_star,
            "server_latency_ms": (time.perf_counter() - t0) * 1000.0,
        }


    def close_sessions(self, sids) -> None:
        with self._sessions_lock:
            for sid in sids:
                self.sessions.pop(sid, None)


class _Handler(socketserver.BaseRequestHandler):
    def setup(self):
        self.opened: set[str] = set()

    def finish(self):
        self.server.close_sessions(self.opened)

    def handle(self):
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while True:
            try:
                payload = recv_frame(sock)
            except ProtocolError as exc:
                log.warning("dropping connection: %s", exc)
                return
            except OSError:
                return
            if payload is None:
                return
            try:
                req = json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                resp = _error("MALFORMED", f"not a JSON document: {exc}")
            else:
                resp = self.server.handle_request_obj(req, self.opened)
            try:
                send(sock, resp)
            except OSError:
                return


def start_server(host: str = "127.0.0.1", port: int = 0,
                 config: ServerConfig = ServerConfig()) -> tuple[NavServer, threading.Thread]:
    """Serve in a background thread; ``server.server_address`` holds the bound port."""
    server = NavServer((host, port), config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


# -- client ------------------------------------------------------------------

class NavClient:
    """One session over one connection; optionally records every exchange."""

    def __init__(self, address, session_id: str, timeout: float = 5.0, log_fh=None):
        self.session_id = session_id
        self.seq = 0
        self.log_fh = log_fh
        try:
            self.sock = socket.create_connection(address, timeout=timeout)
        except OSError as exc:
            raise ConnectionLost(f"cannot reach {address[0]}:{address[1]}: {exc}") from exc
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def request(self, pose: Pose, instruction: str = "", **extra) -> dict:
        self.seq += 1
        req = {
            "session_id": self.session_id,
            "seq": self.seq,
            "instruction": instruction,
            "observation": {"x": pose.x, "y": pose.y, "heading": pose.heading},
            "timestamp": int(time.time() * 1000),
            **extra,
        }
        try:
            send(self.sock, req)
            payload = recv_frame(self.sock)
        except OSError as exc:
            raise ConnectionLost(str(exc)) from exc
        if payload is None:
            raise ConnectionLost("server closed the connection")
        resp = json.loads(payload.decode("utf-8"))
        if self.log_fh is not None:
            self.log_fh.write(json.dumps({"request": req, "response": resp}, sort_keys=True,
                                         separators=(",", ":")) + "\n")
            self.log_fh.flush()
        if "error" in resp:
            err = resp["error"]
            raise ServerError(err.get("code", "UNKNOWN"), err.get("message", ""))
        return resp

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def client_run(address, world: World, instruction: str = "", episode_id: str = "",
               seed: int | None = None, units: ActionUnits = ActionUnits(),
               timeout: float = 5.0, log_fh=None, mode: str = "") -> EpisodeResult:
    """Drive ``world`` locally, asking the server for chunks at every re-plan."""
    session_id = f"{episode_id or 'episode'}:{seed if seed is not None else 'default'}"
    world_text = format_world(world)
    with NavClient(address, session_id, timeout, log_fh) as client:
        def query(pose: Pose):
            extra = {}
            if client.seq == 0:
                extra["world"] = world_text
                if seed is not None:
                    extra["seed"] = seed
            resp = client.request(pose, instruction if client.seq == 0 else "", **extra)
            try:
                chunks = [parse_chunk(text, units) for text in resp["chunks"]]
                H, t_star = resp["entropies"], int(resp["t_star"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"bad response: {exc}") from exc
            if len(H) != len(chunks) or not 1 <= t_star <= len(chunks):
                raise ProtocolError("response violates chunk/entropy/t_star invariants")
            return chunks, H, t_star

        return drive(world, query, units, episode_id=episode_id, mode=mode, seed=seed)


def _canonical(resp: dict) -> bytes:
    return encode({k: v for k, v in resp.items() if k not in VOLATILE_FIELDS})


def replay(log_lines, address, timeout: float = 5.0) -> list[int]:
    """Resend logged requests; returns indices whose responses differ.

    Responses are compared as canonical frames with the measured latency
    removed, which is the only field that depends on wall-clock time.
    """
    entries = [json.loads(line) for line in log_lines if line.strip()]
    mismatches = []
    try:
        sock = socket.create_connection(address, timeout=timeout)
    except OSError as exc:
        raise ConnectionLost(str(exc)) from exc
    with sock:
        for i, entry in enumerate(entries):
            try:
                send(sock, entry["request"])
                payload = recv_frame(sock)
            except OSError as exc:
                raise ConnectionLost(str(exc)) from exc
            if payload is None:
                raise ConnectionLost("server closed the connection")
            if _canonical(json.loads(payload)) != _canonical(entry["response"]):
                mismatches.append(i)
    return mismatches
