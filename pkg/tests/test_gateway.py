import numpy as np
import pytest
from fastapi.testclient import TestClient

from mindloop.gateway import create_app
from mindloop.language import IpsModel
from mindloop.pfc import ModelBundle
from mindloop.seeding import make_rng

from stubs import CommandOracleStub


@pytest.fixture()
def client(pool, small_vision):
    ips = IpsModel.new(make_rng(3), hidden=8)
    stub = CommandOracleStub(small_vision, pool, seed=21)
    bundle = ModelBundle(vision=small_vision, ips=ips, pfc=stub)
    app = create_app(bundle=bundle, session_ttl=60.0)
    with TestClient(app) as c:
        yield c


@pytest.fixture()
def empty_client():
    app = create_app(bundle=None)
    with TestClient(app) as c:
        yield c


def test_healthz_before_load(empty_client):
    assert empty_client.get("/healthz").status_code == 503


def test_create_session_needs_model(empty_client):
    assert empty_client.post("/sessions", json={"mode": "full"}).status_code == 503


def test_healthz_ready(client):
    assert client.get("/healthz").status_code == 200


def test_create_session(client):
    r = client.post("/sessions", json={"mode": "full"})
    assert r.status_code == 201
    body = r.json()
    assert body["mode"] == "full"
    assert body["id"]


def test_invalid_mode_is_400(client):
    assert client.post("/sessions", json={"mode": "warp"}).status_code == 400


def test_session_ids_unique(client):
    a = client.post("/sessions", json={"mode": "full"}).json()["id"]
    b = client.post("/sessions", json={"mode": "full"}).json()["id"]
    assert a != b


def test_command_round_trip(client):
    sid = client.post("/sessions", json={"mode": "full"}).json()["id"]
    r = client.post(f"/sessions/{sid}/command", json={"text": "give me a 9."})
    assert r.status_code == 200
    body = r.json()
    assert body["completion"] == ""
    img = np.array(body["image"])
    assert img.shape == (784,)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert (img > 0.5).sum() > 10
    assert body["latents_dim"] == 128


def test_uppercase_command_is_422(client):
    sid = client.post("/sessions", json={"mode": "full"}).json()["id"]
    r = client.post(f"/sessions/{sid}/command", json={"text": "THIS IS"})
    assert r.status_code == 422


def test_unknown_session_404(client):
    assert client.post("/sessions/nope/command", json={"text": "enlarge."}).status_code == 404
    assert client.get("/sessions/nope").status_code == 404
    assert client.get("/sessions/nope/frame.pgm").status_code == 404


def test_concurrent_command_conflict(client):
    """While one command holds the session lock, a second gets 409; the
    session still works once the first releases."""
    sid = client.post("/sessions", json={"mode": "full"}).json()["id"]
    rec = client.app.state.sessions[sid]
    assert rec.lock.acquire(blocking=False)
    try:
        r = client.post(f"/sessions/{sid}/command", json={"text": "enlarge."})
        assert r.status_code == 409
    finally:
        rec.lock.release()
    r = client.post(f"/sessions/{sid}/command", json={"text": "give me a 9."})
    assert r.status_code == 200


def test_summary_tracks_transcript(client):
    sid = client.post("/sessions", json={"mode": "full"}).json()["id"]
    client.post(f"/sessions/{sid}/command", json={"text": "give me a 2."})
    client.post(f"/sessions/{sid}/command", json={"text": "enlarge."})
    body = client.get(f"/sessions/{sid}").json()
    assert body["transcript_len"] == 2
    assert body["mode"] == "full"


def test_frame_pgm_matches_json_image(client):
    sid = client.post("/sessions", json={"mode": "full"}).json()["id"]
    body = client.post(f"/sessions/{sid}/command", json={"text": "give me a 7."}).json()
    pgm = client.get(f"/sessions/{sid}/frame.pgm")
    assert pgm.status_code == 200
    raw = pgm.content
    assert raw.startswith(b"P5\n28 28\n255\n")
    pixels = np.frombuffer(raw.split(b"255\n", 1)[1], dtype=np.uint8)
    want = np.rint(np.array(body["image"]) * 255.0).astype(np.uint8)
    np.testing.assert_array_equal(pixels, want)


def test_session_eviction_after_ttl(pool, small_vision):
    ips = IpsModel.new(make_rng(3), hidden=8)
    stub = CommandOracleStub(small_vision, pool, seed=22)
    bundle = ModelBundle(vision=small_vision, ips=ips, pfc=stub)
    app = create_app(bundle=bundle, session_ttl=0.0)
    with TestClient(app) as c:
        sid = c.post("/sessions", json={"mode": "full"}).json()["id"]
        import time

        time.sleep(0.01)
        assert c.get(f"/sessions/{sid}").status_code == 404
