import io
import json
import socket
import struct
import threading
import time

import pytest

from chunknav.entropy import ExecMode, select_horizon
from chunknav.grammar import parse_chunk
from chunknav.hpac import derive_seed
from chunknav.serve import (ConnectionLost, NavClient, ServerConfig, ServerError, client_run,
                            encode, recv_frame, replay, send, start_server)
from chunknav.sim.episode import run_batch
from chunknav.sim.policy import oracle_actions
from chunknav.sim.world import empty_world, format_world


@pytest.fixture
def server():
    srv, _ = start_server(config=ServerConfig(policy="oracle"))
    yield srv
    srv.shutdown()
    srv.server_close()


def raw_exchange(address, payload: bytes):
    with socket.create_connection(address, timeout=5) as s:
        s.sendall(struct.pack(">I", len(payload)) + payload)
        return json.loads(recv_frame(s))


def test_frame_encoding():
    frame = encode({"b": 1, "a": "é"})
    assert frame[:4] == struct.pack(">I", len(frame) - 4)
    assert frame[4:] == '{"a":"é","b":1}'.encode()


def test_oracle_response_is_shortest_path_prefix(server):
    world = empty_world(10, 10)
    with NavClient(server.server_address, "s1") as c:
        resp = c.request(world.start, "go", world=format_world(world))
    assert resp["seq"] == 1 and resp["session_id"] == "s1"
    assert len(resp["entropies"]) == len(resp["chunks"])
    assert resp["t_star"] == select_horizon(resp["entropies"])
    planned, _ = oracle_actions(world)
    got = [a for text in resp["chunks"] for a in parse_chunk(text).actions()]
    assert got == planned[:len(got)]
    assert resp["server_latency_ms"] >= 0


def test_duplicate_seq_is_rejected(server):
    world = empty_world(10, 10)
    with NavClient(server.server_address, "dup") as c:
        c.request(world.start, world=format_world(world))
        c.seq = 0
        with pytest.raises(ServerError) as err:
            c.request(world.start)
    assert err.value.code == "OUT_OF_ORDER"


def test_malformed_requests(server):
    addr = server.server_address
    assert raw_exchange(addr, b"not json")["error"]["code"] == "MALFORMED"
    resp = raw_exchange(addr, json.dumps({"session_id": "m", "seq": 4}).encode())
    assert resp["error"]["code"] == "MALFORMED" and resp["seq"] == 4
    resp = raw_exchange(addr, json.dumps({"session_id": "m", "seq": 5, "observation":
                                          {"x": 1, "y": 1, "heading": 0}}).encode())
    assert "world" in resp["error"]["message"]
    resp = raw_exchange(addr, json.dumps({"session_id": "m", "seq": 6, "world": "bogus",
                                          "observation": {"x": 1, "y": 1, "heading": 0}}).encode())
    assert resp["error"]["code"] == "MALFORMED"


def test_sessions_are_isolated(server):
    world = empty_world(10, 10)
    addr = server.server_address
    with NavClient(addr, "a") as a, NavClient(addr, "b") as b:
        ra = a.request(world.start, world=format_world(world))
        rb = b.request(world.start, world=format_world(world))
        assert ra["chunks"] == rb["chunks"]
        assert a.request(world.start)["seq"] == 2


def test_concurrent_clients(worlds30):
    srv, _ = start_server(config=ServerConfig(policy="noisy"))
    try:
        expected = run_batch(worlds30[:6], "noisy", "entropy", seed=2)
        got = {}

        def worker(eid, world):
            got[eid] = client_run(srv.server_address, world, "go", eid, derive_seed(2, eid))

        threads = [threading.Thread(target=worker, args=w) for w in worlds30[:6]]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(got[r.episode_id].path == r.path for r in expected)
    finally:
        srv.shutdown()
        srv.server_close()


def test_server_down_raises_connection_lost():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(ConnectionLost):
        client_run(("127.0.0.1", port), empty_world(), timeout=0.5)


def test_server_vanishing_mid_episode(worlds30):
    # a server that answers once, then hangs up
    listener = socket.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen()

    def once():
        conn, _ = listener.accept()
        with conn:
            recv_frame(conn)
            send(conn, {"session_id": "x", "seq": 1, "chunks": ["move forward 25 cm"],
                        "entropies": [0.0], "t_star": 1, "server_latency_ms": 0.0})
        listener.close()

    threading.Thread(target=once, daemon=True).start()
    log = io.StringIO()
    with pytest.raises(ConnectionLost):
        client_run(listener.getsockname(), worlds30[0][1], timeout=1.0, log_fh=log)
    assert len(log.getvalue().splitlines()) == 1


def test_replay_matches(server, worlds30):
    log = io.StringIO()
    eid, world = worlds30[1]
    client_run(server.server_address, world, "go", eid, 7, log_fh=log)
    fresh, _ = start_server(config=ServerConfig(policy="oracle"))
    try:
        assert replay(log.getvalue().splitlines(), fresh.server_address) == []
    finally:
        fresh.shutdown()
        fresh.server_close()
    # the session closed with its connection, so the same server replays cleanly too
    assert replay(log.getvalue().splitlines(), server.server_address) == []


def test_stale_seq_within_connection(server, worlds30):
    log = io.StringIO()
    eid, world = worlds30[2]
    client_run(server.server_address, world, "go", eid, 3, log_fh=log)
    lines = log.getvalue().splitlines()
    # sending the opening request twice on one connection repeats its seq
    assert replay([lines[0], lines[0]], server.server_address) == [1]


def test_session_dropped_on_disconnect(server, worlds30):
    eid, world = worlds30[3]
    client_run(server.server_address, world, "go", eid, 5)
    time.sleep(0.05)
    assert f"{eid}:5" not in server.sessions


def test_exec_mode_applied_server_side():
    srv, _ = start_server(config=ServerConfig(policy="oracle", exec_mode=ExecMode("fixed", 1)))
    try:
        world = empty_world(10, 10)
        with NavClient(srv.server_address, "f") as c:
            assert c.request(world.start, world=format_world(world))["t_star"] == 1
    finally:
        srv.shutdown()
        srv.server_close()
