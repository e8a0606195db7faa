import json

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

from embed_service.app import ServiceConfig, create_app
from embed_service.backends import HashingBackend, load_backend

RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["dim", "vectors"],
    "additionalProperties": False,
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "vectors": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
    },
}

WORDS = [
    "gradle", "build", "fragment", "view", "push", "intent", "adapter",
    "layout", "service", "token", "crash", "module", "thread", "cache",
]


@pytest.fixture(scope="module")
def client():
    config = ServiceConfig(model="hash:dim=64,seed=42", max_batch=64, max_text_len=200)
    app = create_app(config)
    with TestClient(app) as c:
        yield c


def _embed(client, texts):
    response = client.post("/v1/embed", json={"texts": texts})
    assert response.status_code == 200, response.text
    return response.json()


class TestProtocol:
    def test_health(self, client):
        payload = client.get("/v1/health").json()
        assert payload == {"status": "ok", "dim": 64, "model": "hash:dim=64,seed=42"}

    def test_shape_and_order(self, client):
        payload = _embed(client, ["a", "b"])
        assert payload["dim"] == 64
        assert len(payload["vectors"]) == 2
        assert all(len(v) == 64 for v in payload["vectors"])

    def test_empty_batch(self, client):
        assert _embed(client, []) == {"dim": 64, "vectors": []}

    def test_repeated_text_identical_vectors(self, client):
        payload = _embed(client, ["gradle build", "gradle build"])
        assert payload["vectors"][0] == payload["vectors"][1]

    def test_oversize_batch_rejected(self, client):
        response = client.post("/v1/embed", json={"texts": ["x"] * 65})
        assert response.status_code == 400
        assert response.json() == {"error": "batch too large"}

    def test_malformed_json_rejected(self, client):
        response = client.post(
            "/v1/embed", content=b"{not json", headers={"Content-Type": "application/json"}
        )
        assert response.status_code == 400
        assert "error" in response.json()

    def test_wrong_payload_shape_rejected(self, client):
        response = client.post("/v1/embed", json={"texts": "not a list"})
        assert response.status_code == 400
        assert "error" in response.json()

    def test_long_text_truncated_not_failed(self, client):
        payload = _embed(client, ["word " * 500])
        assert len(payload["vectors"]) == 1

    def test_conformance_on_random_batches(self, client):
        rng = np.random.default_rng(0)
        for _ in range(100):
            texts = [
                " ".join(WORDS[i] for i in rng.integers(0, len(WORDS), size=rng.integers(1, 9)))
                for _ in range(int(rng.integers(0, 12)))
            ]
            payload = _embed(client, texts)
            jsonschema.validate(payload, RESPONSE_SCHEMA)
            assert len(payload["vectors"]) == len(texts)
            assert all(len(v) == payload["dim"] for v in payload["vectors"])


PARAPHRASE_PAIRS = [
    ("gradle build failed", "build error in gradle", "recyclerview scroll listener"),
    ("fragment crashes on rotate", "rotate makes the fragment crash", "proguard keeps stripping enums"),
    ("push notification never arrives", "notification push is not delivered", "listview item height wrong"),
    ("intent extras are lost", "the intent loses its extras", "gradle sync takes forever"),
    ("recyclerview scroll is janky", "janky scroll in recyclerview", "broadcast receiver not registered"),
    ("service killed in background", "background service gets killed", "viewpager swipe disabled"),
    ("layout inflater returns null", "null from the layout inflater", "analytics events missing"),
    ("adapter notify does nothing", "calling notify on the adapter does nothing", "emulator fails to boot"),
    ("proguard strips my classes", "my classes get stripped by proguard", "scroll listener leaks memory"),
    ("emulator will not boot", "the emulator never boots", "intent filter ignored"),
    ("listview rows duplicate", "duplicate rows in my listview", "gcm token refresh loop"),
    ("broadcast receiver never fires", "the broadcast receiver does not fire", "gradle daemon crashes"),
    ("viewpager swipe stops working", "swipe in the viewpager stops working", "notification icon is white"),
    ("gcm registration fails", "registration with gcm fails", "adapter position off by one"),
    ("analytics events not sent", "events never reach analytics", "fragment backstack broken"),
    ("build cache corrupts outputs", "corrupted outputs from the build cache", "push channel misconfigured"),
    ("activity leaks its context", "context leak in the activity", "listview scroll position lost"),
    ("layout margin ignored on tablets", "tablets ignore the layout margin", "service binder dies"),
    ("back button closes the app", "app closes when pressing back", "gradle plugin version clash"),
    ("row height collapses to zero", "the row collapses to zero height", "notification sound missing"),
]


class TestSemanticSanity:
    def test_paraphrases_rank_above_unrelated(self, client):
        def cos(a, b):
            a, b = np.array(a), np.array(b)
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            return float(a @ b / (na * nb)) if na and nb else 0.0

        for anchor, paraphrase, unrelated in PARAPHRASE_PAIRS:
            vectors = _embed(client, [anchor, paraphrase, unrelated])["vectors"]
            assert cos(vectors[0], vectors[1]) > cos(vectors[0], vectors[2]), anchor


class TestBackends:
    def test_hash_spec_parsing(self):
        backend = load_backend("hash:dim=128,seed=7")
        assert isinstance(backend, HashingBackend)
        assert backend.dim == 128
        assert backend.model_name == "hash:dim=128,seed=7"

    def test_hash_backend_deterministic(self):
        a = HashingBackend(dim=32, seed=5).encode(["gradle build", ""])
        b = HashingBackend(dim=32, seed=5).encode(["gradle build", ""])
        assert np.array_equal(a, b)
        assert not a[1].any()

    def test_hash_backend_unit_norm(self):
        (vec,) = HashingBackend(dim=32, seed=5).encode(["gradle build failed"])
        assert abs(np.linalg.norm(vec.astype(np.float64)) - 1.0) < 1e-6

    def test_sentence_transformer_backend_if_available(self):
        pytest.importorskip("sentence_transformers")
        try:
            backend = load_backend("sentence-transformers/all-MiniLM-L6-v2")
        except Exception:
            pytest.skip("no model checkpoint available in this environment")
        vectors = backend.encode(["gradle build failed"])
        assert vectors.shape == (1, backend.dim)
