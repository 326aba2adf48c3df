import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from charannot.backends import BackendError
from charannot.embeddings import (
    HashEmbeddingBackend,
    HttpEmbeddingBackend,
    character_profile_text,
    cosine_similarity,
    embed_characters,
    write_embeddings,
)
from charannot.model import Annotation, AnnotationCorpus


def small_corpus() -> AnnotationCorpus:
    return AnnotationCorpus.from_records(
        [
            Annotation("Ada", "solves the cipher", "clever", 1, 2),
            Annotation("Ada", "teaches the class", "patient", 1, 1),
            Annotation("Basil", "burns the toast", "careless", 1, 1),
            Annotation("Clem", "waters the garden", "gentle", 1, 3),
        ]
    )


# -- profiles -------------------------------------------------------------------


def test_profile_structure(simpsons_corpus):
    profile = character_profile_text(simpsons_corpus, "Homer Simpson")
    assert profile.startswith("Homer Simpson")
    assert "humorous (7)" in profile
    assert "impulsive (7)" in profile


def test_profile_actions_in_chunk_order():
    profile = character_profile_text(small_corpus(), "Ada")
    assert profile.index("teaches the class") < profile.index("solves the cipher")


def test_profile_single_record():
    corpus = AnnotationCorpus.from_records([Annotation("Solo", "waves", "friendly", 1, 1)])
    profile = character_profile_text(corpus, "Solo")
    assert profile.splitlines() == ["Solo", "friendly (1)", "waves"]


def test_profile_deterministic(simpsons_corpus):
    a = character_profile_text(simpsons_corpus, "Lisa Simpson")
    b = character_profile_text(simpsons_corpus, "Lisa Simpson")
    assert a == b


def test_profile_unknown_character():
    with pytest.raises(KeyError):
        character_profile_text(small_corpus(), "Nobody")


# -- test backend ------------------------------------------------------------------


def test_hash_backend_unit_norm_and_dimension():
    backend = HashEmbeddingBackend(dimension=64)
    vectors = embed_characters(small_corpus(), backend)
    assert len(vectors) == 3
    for vec in vectors.values():
        assert len(vec) == 64
        assert math.sqrt(sum(v * v for v in vec)) == pytest.approx(1.0, abs=1e-12)


def test_empty_corpus_empty_map():
    assert embed_characters(AnnotationCorpus(), HashEmbeddingBackend()) == {}


def test_identical_profiles_identical_vectors():
    corpus_a = AnnotationCorpus.from_records(
        [Annotation("Twin", "runs fast", "quick", 1, 1)]
    )
    corpus_b = AnnotationCorpus.from_records(
        [Annotation("Twin", "runs fast", "quick", 1, 1)]
    )
    backend = HashEmbeddingBackend()
    va = embed_characters(corpus_a, backend)["Twin"]
    vb = embed_characters(corpus_b, backend)["Twin"]
    assert va == vb


def test_write_embeddings_atomic(tmp_path):
    class ExplodingBackend:
        backend_id = "boom"
        dimension = 4

        def __init__(self):
            self.calls = 0

        def embed(self, text):
            self.calls += 1
            if self.calls > 1:
                raise BackendError("service down")
            return [1.0, 0.0, 0.0, 0.0]

    out = tmp_path / "vectors.json"
    with pytest.raises(BackendError):
        vectors = embed_characters(small_corpus(), ExplodingBackend())
        write_embeddings(vectors, out)
    assert not out.exists()


def test_write_embeddings_roundtrip(tmp_path):
    vectors = embed_characters(small_corpus(), HashEmbeddingBackend(dimension=8))
    out = tmp_path / "vectors.json"
    write_embeddings(vectors, out)
    assert json.loads(out.read_text()) == {
        name: list(vec) for name, vec in vectors.items()
    }


# -- cosine -------------------------------------------------------------------------


def test_cosine_identical():
    assert cosine_similarity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_closed_form():
    assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(
        1 / math.sqrt(2), abs=1e-12
    )


def test_cosine_symmetry_and_scale_invariance():
    a = [0.3, -1.2, 2.0]
    b = [1.1, 0.4, -0.2]
    assert cosine_similarity(a, b) == cosine_similarity(b, a)
    scaled = [7.5 * v for v in a]
    assert cosine_similarity(scaled, b) == pytest.approx(
        cosine_similarity(a, b), abs=1e-12
    )


def test_cosine_errors():
    with pytest.raises(ValueError):
        cosine_similarity([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        cosine_similarity([0.0, 0.0], [1.0, 2.0])


# -- http backend ---------------------------------------------------------------------


class _EmbedStub(BaseHTTPRequestHandler):
    requests: list = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        type(self).requests.append((self.path, body))
        raw = json.dumps(
            {"data": [{"embedding": [0.6, 0.8], "index": 0}], "model": body["model"]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)


def test_http_embedding_backend():
    handler = type("H", (_EmbedStub,), {"requests": []})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        base = f"http://127.0.0.1:{server.server_address[1]}/v1"
        backend = HttpEmbeddingBackend(base_url=base, api_key="k", model="embed-test")
        vec = backend.embed("character profile")
        assert vec == [0.6, 0.8]
        assert backend.dimension == 2
        path, body = handler.requests[0]
        assert path == "/v1/embeddings"
        assert body == {"model": "embed-test", "input": "character profile"}
    finally:
        server.shutdown()
        server.server_close()
