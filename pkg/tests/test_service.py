import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

from contourforge.raster import ScalarField, write_fpm
from contourforge.service import create_app, rle_encode

from conftest import ring_field


@pytest.fixture
def ring_bytes(tmp_path):
    path = tmp_path / "ring.fpm"
    write_fpm(path, ring_field(64, 32, 32, 10, width=1.5))
    return path.read_bytes()


@pytest.fixture
def client():
    return TestClient(create_app())


def upload(client, data):
    return client.post("/api/v1/maps", content=data)


def square_polygon(lo=26.0, hi=38.0):
    return {"closed": True, "vertices": [[lo, lo], [hi, lo], [hi, hi], [lo, hi]]}


def make_session(client, ring_bytes, params=None, polygon=None):
    map_id = upload(client, ring_bytes).json()["map_id"]
    body = {"prob_map_id": map_id, "init_polygon": polygon or square_polygon()}
    if params is not None:
        body["params"] = params
    r = client.post("/api/v1/sessions", json=body)
    assert r.status_code == 201, r.text
    return r.json()


class TestMaps:
    def test_upload_fpm(self, client, ring_bytes):
        r = upload(client, ring_bytes)
        assert r.status_code == 201
        assert len(r.json()["map_id"]) == 16

    def test_truncated_header_400(self, client):
        r = upload(client, b"FPM1\n8 8 1\n\x00\x00")
        assert r.status_code == 400

    def test_unknown_format_400(self, client):
        r = upload(client, b"GIF89a...")
        assert r.status_code == 400

    def test_idempotent_by_content(self, client, ring_bytes):
        a = upload(client, ring_bytes).json()["map_id"]
        b = upload(client, ring_bytes).json()["map_id"]
        assert a == b

    def test_oversize_413(self, ring_bytes):
        small = TestClient(create_app(max_body_bytes=64))
        assert upload(small, ring_bytes).status_code == 413

    def test_pgm_upload_and_fetch(self, client):
        data = b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])
        r = upload(client, data)
        assert r.status_code == 201
        got = client.get(f"/api/v1/maps/{r.json()['map_id']}")
        assert got.status_code == 200
        assert got.content == data
        assert got.headers["X-Map-Format"] == "pgm"

    def test_fetch_unknown_404(self, client):
        assert client.get("/api/v1/maps/doesnotexist").status_code == 404


class TestSessions:
    def test_create_returns_contour(self, client, ring_bytes):
        payload = make_session(client, ring_bytes,
                               polygon={"closed": True,
                                        "vertices": [[20, 20], [40, 22], [30, 42]]})
        assert payload["step"] == 0
        assert len(payload["contours"]) == 1

    def test_two_vertex_polygon_422(self, client, ring_bytes):
        map_id = upload(client, ring_bytes).json()["map_id"]
        r = client.post("/api/v1/sessions", json={
            "prob_map_id": map_id,
            "init_polygon": {"closed": True, "vertices": [[1, 1], [5, 5]]},
        })
        assert r.status_code == 422

    def test_out_of_bounds_polygon_422(self, client, ring_bytes):
        map_id = upload(client, ring_bytes).json()["map_id"]
        r = client.post("/api/v1/sessions", json={
            "prob_map_id": map_id,
            "init_polygon": {"closed": True, "vertices": [[-5, 1], [70, 1], [30, 70]]},
        })
        assert r.status_code == 422

    def test_unknown_map_404(self, client):
        r = client.post("/api/v1/sessions", json={
            "prob_map_id": "nope", "init_polygon": square_polygon(),
        })
        assert r.status_code == 404

    def test_default_params_echoed(self, client, ring_bytes):
        payload = make_session(client, ring_bytes)
        assert payload["params"] == {"lambda": 0.0, "c": 1.0, "mu": 1,
                                     "balloon_threshold": 0.3}

    def test_display_image_ref(self, client, ring_bytes):
        map_id = upload(client, ring_bytes).json()["map_id"]
        img_id = upload(client, b"P5\n2 2\n255\n" + bytes([0, 255, 0, 255])).json()["map_id"]
        r = client.post("/api/v1/sessions", json={
            "prob_map_id": map_id,
            "init_polygon": square_polygon(),
            "image_ref": img_id,
        })
        assert r.status_code == 201
        state = client.get(f"/api/v1/sessions/{r.json()['session_id']}").json()
        assert state["image_ref"] == img_id

    def test_unknown_image_ref_404(self, client, ring_bytes):
        map_id = upload(client, ring_bytes).json()["map_id"]
        r = client.post("/api/v1/sessions", json={
            "prob_map_id": map_id,
            "init_polygon": square_polygon(),
            "image_ref": "missing",
        })
        assert r.status_code == 404


class TestStepping:
    def test_zero_steps_422(self, client, ring_bytes):
        sid = make_session(client, ring_bytes)["session_id"]
        r = client.post(f"/api/v1/sessions/{sid}/step", json={"steps": 0})
        assert r.status_code == 422

    def test_step_composition(self, client, ring_bytes):
        a = make_session(client, ring_bytes)["session_id"]
        b = make_session(client, ring_bytes)["session_id"]
        client.post(f"/api/v1/sessions/{a}/step", json={"steps": 1})
        ra = client.post(f"/api/v1/sessions/{a}/step", json={"steps": 1}).json()
        rb = client.post(f"/api/v1/sessions/{b}/step", json={"steps": 2}).json()
        assert ra["step"] == rb["step"] == 2
        sa = client.get(f"/api/v1/sessions/{a}", params={"include": "mask"}).json()
        sb = client.get(f"/api/v1/sessions/{b}", params={"include": "mask"}).json()
        assert sa["mask_rle"] == sb["mask_rle"]

    def test_ring_fixture_converges_to_ridge(self, client, ring_bytes):
        sid = make_session(client, ring_bytes)["session_id"]
        r = client.post(f"/api/v1/sessions/{sid}/step", json={"steps": 80}).json()
        radii = []
        for contour in r["contours"]:
            for x, y in contour["vertices"]:
                radii.append(np.hypot(x - 32, y - 32))
        assert 9.0 <= np.mean(radii) <= 11.0

    def test_changed_false_when_halted(self, client, ring_bytes):
        sid = make_session(client, ring_bytes)["session_id"]
        client.post(f"/api/v1/sessions/{sid}/step", json={"steps": 200})
        r = client.post(f"/api/v1/sessions/{sid}/step", json={"steps": 10}).json()
        assert r["changed"] is False

    def test_busy_session_409(self, client, ring_bytes):
        sid = make_session(client, ring_bytes)["session_id"]
        app_sessions = client.app.state.sessions
        session = app_sessions[sid]
        assert session.lock.acquire(blocking=False)
        try:
            r = client.post(f"/api/v1/sessions/{sid}/step", json={"steps": 1})
            assert r.status_code == 409
        finally:
            session.lock.release()

    def test_unknown_session_404(self, client):
        assert client.post("/api/v1/sessions/zzz/step", json={"steps": 1}).status_code == 404

    def test_isolation_interleaved_equals_sequential(self, client, ring_bytes):
        a = make_session(client, ring_bytes)["session_id"]
        b = make_session(client, ring_bytes,
                         polygon=square_polygon(24.0, 40.0))["session_id"]
        for _ in range(4):
            client.post(f"/api/v1/sessions/{a}/step", json={"steps": 3})
            client.post(f"/api/v1/sessions/{b}/step", json={"steps": 3})
        interleaved_a = client.get(f"/api/v1/sessions/{a}", params={"include": "mask"}).json()
        interleaved_b = client.get(f"/api/v1/sessions/{b}", params={"include": "mask"}).json()

        fresh = make_session(client, ring_bytes)["session_id"]
        client.post(f"/api/v1/sessions/{fresh}/step", json={"steps": 12})
        seq_a = client.get(f"/api/v1/sessions/{fresh}", params={"include": "mask"}).json()
        fresh_b = make_session(client, ring_bytes,
                               polygon=square_polygon(24.0, 40.0))["session_id"]
        client.post(f"/api/v1/sessions/{fresh_b}/step", json={"steps": 12})
        seq_b = client.get(f"/api/v1/sessions/{fresh_b}", params={"include": "mask"}).json()
        assert interleaved_a["mask_rle"] == seq_a["mask_rle"]
        assert interleaved_b["mask_rle"] == seq_b["mask_rle"]


class TestStateAndReset:
    def test_get_reports_step(self, client, ring_bytes):
        sid = make_session(client, ring_bytes)["session_id"]
        for _ in range(3):
            client.post(f"/api/v1/sessions/{sid}/step", json={"steps": 1})
        assert client.get(f"/api/v1/sessions/{sid}").json()["step"] == 3

    def test_reset_restores_step_zero(self, client, ring_bytes):
        sid = make_session(client, ring_bytes)["session_id"]
        client.post(f"/api/v1/sessions/{sid}/step", json={"steps": 5})
        r = client.post(f"/api/v1/sessions/{sid}/reset", json=square_polygon())
        assert r.status_code == 200 and r.json()["step"] == 0
        assert client.get(f"/api/v1/sessions/{sid}").json()["step"] == 0

    def test_mask_rle_round_trip(self, client, ring_bytes):
        sid = make_session(client, ring_bytes)["session_id"]
        payload = client.get(f"/api/v1/sessions/{sid}", params={"include": "mask"}).json()
        runs = payload["mask_rle"]
        total = sum(runs)
        assert total == payload["width"] * payload["height"]
        # decode and compare against the drawn square (13x13 pixel centers)
        flat = np.zeros(total, bool)
        pos, value = 0, False
        for run in runs:
            flat[pos : pos + run] = value
            pos += run
            value = not value
        assert flat.sum() == 13 * 13

    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200 and r.json() == {"status": "ok"}


class TestEviction:
    def test_lru_eviction(self, ring_bytes):
        client = TestClient(create_app(max_sessions=3))
        sids = [make_session(client, ring_bytes)["session_id"] for _ in range(4)]
        assert client.get(f"/api/v1/sessions/{sids[0]}").status_code == 404
        assert client.get(f"/api/v1/sessions/{sids[-1]}").status_code == 200

    def test_idle_ttl_eviction(self, ring_bytes):
        now = [0.0]
        client = TestClient(create_app(idle_ttl_seconds=100, clock=lambda: now[0]))
        sid = make_session(client, ring_bytes)["session_id"]
        now[0] = 50.0
        assert client.get(f"/api/v1/sessions/{sid}").status_code == 200
        now[0] = 200.0
        assert client.get(f"/api/v1/sessions/{sid}").status_code == 404


def test_rle_encode_basics():
    assert rle_encode(np.array([[False, False, True]])) == [2, 1]
    assert rle_encode(np.array([[True, True, False]])) == [0, 2, 1]
    assert rle_encode(np.zeros((2, 2), bool)) == [4]
