import json
import struct
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from stackdigest.embed import (
    BuiltinEmbedder,
    EmbedCountMismatchError,
    EmbedDimMismatchError,
    EmbeddingCache,
    EmbedStatusError,
    EmbedTransportError,
    HttpEmbedder,
    cosine_similarity,
    embed_texts,
    fnv1a_bucket,
)

WORDS = [
    "gradle", "build", "project", "fragment", "view", "layout", "service",
    "intent", "push", "token", "crash", "debug", "thread", "cache", "index",
    "parse", "widget", "margin", "bundle", "launcher",
]


def _random_text(rng, vocab, n):
    return " ".join(rng.choice(vocab) for _ in range(n))


class TestBuiltinEmbedder:
    def test_rejects_small_dim(self):
        with pytest.raises(ValueError):
            BuiltinEmbedder(dim=4)

    def test_deterministic_across_instances(self):
        a = BuiltinEmbedder(dim=64, seed=7)
        b = BuiltinEmbedder(dim=64, seed=7)
        texts = ["gradle build failed", "fragment view layout", ""]
        va = a.embed_batch(texts)
        vb = b.embed_batch(texts)
        assert va.dtype == np.float32
        assert np.array_equal(va, vb)

    def test_determinism_over_many_random_texts(self):
        rng = np.random.default_rng(0)
        texts = [_random_text(rng, WORDS, int(rng.integers(1, 12))) for _ in range(1000)]
        emb = BuiltinEmbedder(dim=32, seed=3)
        first = emb.embed_batch(texts)
        second = BuiltinEmbedder(dim=32, seed=3).embed_batch(texts)
        assert np.array_equal(first, second)

    def test_unit_norm(self):
        emb = BuiltinEmbedder(dim=64, seed=42)
        vecs = emb.embed_batch(["a b", "a b c"])
        for v in vecs:
            assert abs(np.linalg.norm(v.astype(np.float64)) - 1.0) < 1e-6
        assert cosine_similarity(vecs[0], vecs[0]) == pytest.approx(1.0)

    def test_empty_text_is_zero_vector(self):
        emb = BuiltinEmbedder(dim=32, seed=1)
        assert not emb.embed_one("").any()
        assert not emb.embed_one("123 ++").any()

    def test_seed_changes_vectors(self):
        v1 = BuiltinEmbedder(dim=64, seed=1).embed_one("gradle build")
        v2 = BuiltinEmbedder(dim=64, seed=2).embed_one("gradle build")
        assert not np.array_equal(v1, v2)

    def test_disjoint_token_sets_nearly_orthogonal(self):
        # random projection concentration: 100 pairs of token-disjoint texts
        rng = np.random.default_rng(42)
        emb = BuiltinEmbedder(dim=256, seed=42)
        left_vocab = WORDS[:10]
        right_vocab = [w + "xq" for w in WORDS[10:]]
        for _ in range(100):
            a = emb.embed_one(_random_text(rng, left_vocab, int(rng.integers(3, 9))))
            b = emb.embed_one(_random_text(rng, right_vocab, int(rng.integers(3, 9))))
            assert abs(cosine_similarity(a, b)) < 0.3

    def test_shared_vocabulary_beats_disjoint(self):
        rng = np.random.default_rng(7)
        emb = BuiltinEmbedder(dim=128, seed=42)
        group = [_random_text(rng, WORDS[:6], 8) for _ in range(10)]
        other = [_random_text(rng, [w + "zz" for w in WORDS[6:12]], 8) for _ in range(10)]
        group_v = emb.embed_batch(group)
        other_v = emb.embed_batch(other)
        within = np.mean(
            [cosine_similarity(group_v[i], group_v[j]) for i in range(10) for j in range(i + 1, 10)]
        )
        across = np.mean(
            [cosine_similarity(group_v[i], other_v[j]) for i in range(10) for j in range(10)]
        )
        assert within > across

    def test_bucket_hash_is_stable(self):
        assert fnv1a_bucket("gradle") == fnv1a_bucket("gradle")
        assert 0 <= fnv1a_bucket("gradle") < 2 ** 15


class TestCosine:
    def test_self_similarity(self):
        v = np.array([3.0, 4.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_opposite(self):
        v = np.array([1.0, 2.0, 3.0])
        assert cosine_similarity(v, -v) == pytest.approx(-1.0)

    def test_orthogonal(self):
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_zero_vector_rule(self):
        assert cosine_similarity(np.zeros(3), np.array([1.0, 0.0, 0.0])) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity(np.zeros(3), np.zeros(4))


class TestEmbeddingCache:
    def test_hit_is_bit_identical(self, tmp_path):
        cache = EmbeddingCache(tmp_path / "c.bin")
        vec = BuiltinEmbedder(dim=16, seed=1).embed_one("gradle build")
        cache.put("p", "gradle build", vec)
        got = cache.get("p", "gradle build")
        assert got.tobytes() == vec.tobytes()
        cache.close()

    def test_persists_across_reopen(self, tmp_path):
        path = tmp_path / "c.bin"
        vec = np.arange(8, dtype=np.float32)
        with EmbeddingCache(path) as cache:
            cache.put("p", "text", vec)
        with EmbeddingCache(path) as cache:
            assert np.array_equal(cache.get("p", "text"), vec)

    def test_record_layout(self, tmp_path):
        path = tmp_path / "c.bin"
        vec = np.array([1.5, -2.0], dtype=np.float32)
        with EmbeddingCache(path) as cache:
            cache.put("prov", "text", vec)
        data = path.read_bytes()
        (name_len,) = struct.unpack_from("<I", data, 0)
        assert name_len == 4
        assert data[4:8] == b"prov"
        digest = data[8:40]
        assert len(digest) == 32
        (dim,) = struct.unpack_from("<I", data, 40)
        assert dim == 2
        assert np.frombuffer(data[44:52], dtype="<f4").tolist() == [1.5, -2.0]
        assert len(data) == 52

    def test_keyed_by_provider_and_text(self, tmp_path):
        with EmbeddingCache(tmp_path / "c.bin") as cache:
            cache.put("a", "t", np.zeros(4, dtype=np.float32))
            assert cache.get("b", "t") is None
            assert cache.get("a", "u") is None

    def test_cold_and_warm_results_identical(self, tmp_path):
        texts = ["gradle build", "fragment view", "push intent", ""]
        emb = BuiltinEmbedder(dim=32, seed=9)
        with EmbeddingCache(tmp_path / "c.bin") as cache:
            cold = embed_texts(emb, texts, cache)
            assert cache.misses == len(texts)
        with EmbeddingCache(tmp_path / "c.bin") as cache:
            warm = embed_texts(emb, texts, cache)
            assert cache.hits == len(texts)
            assert cache.misses == 0
        assert cold.tobytes() == warm.tobytes()

    def test_concurrent_writers_serialize(self, tmp_path):
        import threading

        path = tmp_path / "c.bin"
        emb = BuiltinEmbedder(dim=16, seed=2)
        with EmbeddingCache(path) as cache:
            def worker(offset):
                for i in range(50):
                    text = f"text {offset} {i}"
                    cache.put("p", text, emb.embed_one(text))

            threads = [threading.Thread(target=worker, args=(t,)) for t in range(4)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        with EmbeddingCache(path) as cache:
            for offset in range(4):
                for i in range(50):
                    text = f"text {offset} {i}"
                    assert np.array_equal(cache.get("p", text), emb.embed_one(text))

    def test_embed_texts_batches(self, tmp_path):
        class CountingProvider:
            name = "count"
            dim = 8

            def __init__(self):
                self.calls = []

            def embed_batch(self, texts):
                self.calls.append(len(texts))
                return np.zeros((len(texts), self.dim), dtype=np.float32)

        provider = CountingProvider()
        embed_texts(provider, [f"t{i}" for i in range(130)], None, batch_size=64)
        assert provider.calls == [64, 64, 2]


class _StubHandler(BaseHTTPRequestHandler):
    behavior = "ok"
    dim = 8

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        texts = payload["texts"]
        if self.behavior == "ok":
            vectors = [[float(len(t) + i)] * self.dim for i, t in enumerate(texts)]
            body = {"dim": self.dim, "vectors": vectors}
            status = 200
        elif self.behavior == "short":
            body = {"dim": self.dim, "vectors": [[0.0] * self.dim]}
            status = 200
        elif self.behavior == "ragged":
            body = {"dim": self.dim, "vectors": [[0.0] * (self.dim - 1) for _ in texts]}
            status = 200
        else:
            body = {"error": "bad request"}
            status = 400
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    thread.join()


class TestHttpEmbedder:
    def test_success_roundtrip(self, stub_server):
        _StubHandler.behavior = "ok"
        emb = HttpEmbedder(stub_server)
        out = emb.embed_batch(["ab", "cdef"])
        assert out.shape == (2, 8)
        assert emb.dim == 8
        assert out.dtype == np.float32

    def test_count_mismatch(self, stub_server):
        _StubHandler.behavior = "short"
        with pytest.raises(EmbedCountMismatchError):
            HttpEmbedder(stub_server).embed_batch(["a", "b"])

    def test_dim_mismatch(self, stub_server):
        _StubHandler.behavior = "ragged"
        with pytest.raises(EmbedDimMismatchError):
            HttpEmbedder(stub_server).embed_batch(["a", "b"])

    def test_client_error_status(self, stub_server):
        _StubHandler.behavior = "error"
        with pytest.raises(EmbedStatusError) as err:
            HttpEmbedder(stub_server).embed_batch(["a"])
        assert stub_server in str(err.value)

    def test_connection_refused_after_retries(self):
        emb = HttpEmbedder("http://127.0.0.1:9", retries=3, backoff=0.01, timeout=0.2)
        with pytest.raises(EmbedTransportError) as err:
            emb.embed_batch(["a"])
        assert "3 attempts" in str(err.value)
