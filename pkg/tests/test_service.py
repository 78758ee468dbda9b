import numpy as np
import pytest
from fastapi.testclient import TestClient

from egan import dataset as ds
from egan import imgio, models
from egan.checkpoint import save_checkpoint
from egan.service import create_app


@pytest.fixture(scope="module")
def client(tmp_path_factory, tiny_config):
    state = models.init_params(tiny_config, seed=2)
    path = save_checkpoint(tmp_path_factory.mktemp("svc") / "ck", state, ds.SYNTHETIC_SCHEMA)
    app = create_app(path)
    return TestClient(app, raise_server_exceptions=False)


@pytest.fixture(scope="module")
def image_b64(small_dataset):
    return imgio.encode_png_base64(small_dataset[0].pixels)


class TestAttributes:
    def test_schema_payload(self, client):
        response = client.get("/v1/attributes")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("application/json")
        body = response.json()
        assert body["names"] == list(ds.SYNTHETIC_ATTRIBUTES)
        assert len(body["names"]) == 4
        assert body["latent_dim"] == 6
        assert body["resolution"] == 32

    def test_stable_ordering(self, client):
        a = client.get("/v1/attributes").json()["names"]
        b = client.get("/v1/attributes").json()["names"]
        assert a == b

    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert set(body) == {"checkpoint_id", "schema_hash"}


class TestInvert:
    def test_latent_shape_and_range(self, client, image_b64):
        body = client.post("/v1/invert", json={"image": image_b64}).json()
        assert len(body["z"]) == 6
        assert all(-1.0 < v < 1.0 for v in body["z"])
        assert set(body["predicted_attributes"]) == set(ds.SYNTHETIC_ATTRIBUTES)

    def test_malformed_base64(self, client):
        response = client.post("/v1/invert", json={"image": "@@not-base64@@"})
        assert response.status_code == 400
        assert response.json()["code"] == "bad_image"

    def test_wrong_resolution(self, client):
        big = imgio.encode_png_base64(np.zeros((64, 64, 3), dtype=np.float32))
        response = client.post("/v1/invert", json={"image": big})
        assert response.status_code == 422
        assert response.json()["code"] == "resolution_mismatch"


class TestEdit:
    def test_identity_map_matches_reconstruct_bytes(self, client, image_b64):
        edit = client.post("/v1/edit", json={"image": image_b64, "attributes": {}}).json()
        recon = client.post("/v1/reconstruct", json={"image": image_b64}).json()
        assert edit["image"] == recon["image"]

    def test_out_of_range_value(self, client, image_b64):
        response = client.post("/v1/edit", json={"image": image_b64, "attributes": {"red_tint": 1.5}})
        assert response.status_code == 422
        assert response.json()["code"] == "attribute_range"

    def test_repeat_request_is_deterministic(self, client, image_b64):
        payload = {"image": image_b64, "attributes": {"red_tint": 1.0, "border": -0.5}}
        a = client.post("/v1/edit", json=payload).json()["image"]
        b = client.post("/v1/edit", json=payload).json()["image"]
        assert a == b

    def test_edit_from_latent(self, client):
        body = client.post("/v1/generate", json={"attributes": {}, "seed": 1}).json()
        response = client.post("/v1/edit", json={"z": body["z"], "attributes": {"border": 1.0}})
        assert response.status_code == 200


class TestGenerate:
    def test_same_seed_same_bytes(self, client):
        payload = {"attributes": {"red_tint": 1.0}, "seed": 9}
        a = client.post("/v1/generate", json=payload).json()
        b = client.post("/v1/generate", json=payload).json()
        assert a["image"] == b["image"]
        assert a["z"] == b["z"]

    def test_omitted_seed_is_returned_and_replayable(self, client):
        first = client.post("/v1/generate", json={"attributes": {}}).json()
        assert "seed" in first
        replay = client.post("/v1/generate", json={"attributes": {}, "seed": first["seed"]}).json()
        assert replay["image"] == first["image"]

    def test_unknown_attribute(self, client):
        response = client.post("/v1/generate", json={"attributes": {"bluriness": 1.0}})
        assert response.status_code == 422
        assert response.json()["code"] == "unknown_attribute"


class TestInterpolate:
    def test_two_steps_returns_exact_endpoints(self, client):
        a = client.post("/v1/generate", json={"attributes": {}, "seed": 4}).json()
        b = client.post("/v1/generate", json={"attributes": {"border": 1.0}, "seed": 5}).json()
        body = client.post(
            "/v1/interpolate",
            json={"a": {"z": a["z"], "attributes": {}}, "b": {"z": b["z"], "attributes": {"border": 1.0}}, "steps": 2},
        ).json()
        assert len(body["frames"]) == 2
        assert body["frames"][0] == a["image"]
        assert body["frames"][1] == b["image"]

    def test_too_many_frames(self, client, image_b64):
        response = client.post(
            "/v1/interpolate", json={"a": {"image": image_b64}, "b": {"image": image_b64}, "steps": 65}
        )
        assert response.status_code == 422
        assert response.json()["code"] == "too_many_frames"

    def test_pose_mode_endpoints_are_reconstructions(self, client, image_b64, small_dataset):
        frames = client.post(
            "/v1/interpolate", json={"a": {"image": image_b64}, "mode": "pose", "steps": 3}
        ).json()["frames"]
        assert len(frames) == 3
        recon = client.post("/v1/reconstruct", json={"image": image_b64}).json()["image"]
        assert frames[0] == recon
        flipped = imgio.encode_png_base64(
            np.ascontiguousarray(np.flip(small_dataset[0].pixels, axis=1))
        )
        flip_recon = client.post("/v1/reconstruct", json={"image": flipped}).json()["image"]
        assert frames[-1] == flip_recon


class TestErrorShape:
    def test_all_errors_share_code_message_shape(self, client, image_b64):
        cases = [
            client.post("/v1/invert", json={"image": "zzz"}),
            client.post("/v1/edit", json={"image": image_b64, "attributes": {"x": 1}}),
            client.post("/v1/generate", json={"attributes": {"red_tint": 7}}),
            client.post("/v1/interpolate", json={"steps": 2}),
        ]
        for response in cases:
            assert response.status_code in (400, 422)
            assert set(response.json()) == {"code", "message"}
