"""Zero-shot text-image retrieval over candidate sets.

A referent description is embedded into the same space as the candidate
images and the referent is predicted by the argmax of the candidate
matrix / description vector product. Backends are pluggable; the package
ships a platform-stable hash backend (pipeline tests and baselines), a
planted-vector oracle (controllable accuracy in experiments), and a thin
HTTP client for real embedding services.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .corpus import Corpus, Dialogue, Image, Mention, candidate_set_at
from .text import tokenize

CACHE_FORMAT = "embedding-cache"
CACHE_VERSION = 1


@dataclass(frozen=True)
class TextEmbedding:
    """An encoded description: the text-side query vector."""

    text: str
    vector: np.ndarray
    backend_id: str
    normalized: bool

    def __post_init__(self) -> None:
        if self.vector.ndim != 1:
            raise ValueError("text embedding must be a vector")
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("text embedding has non-finite entries")
        if self.normalized and abs(float(np.linalg.norm(self.vector)) - 1.0) > 1e-6:
            raise ValueError("embedding flagged normalized but norm is not 1")


@dataclass(frozen=True)
class CandidateMatrix:
    """Row-aligned embeddings for a candidate set, canonical order."""

    image_ids: tuple[str, ...]
    matrix: np.ndarray
    backend_id: str
    normalized: bool

    def __post_init__(self) -> None:
        if self.matrix.shape[0] != len(self.image_ids):
            raise ValueError("matrix rows must align with image ids")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("candidate matrix has non-finite entries")


@dataclass(frozen=True)
class RetrievalResult:
    mention_id: str
    description: str
    referent_id: str | None
    candidate_ids: tuple[str, ...]
    scores: tuple[float, ...]
    ranking: tuple[str, ...]
    rank_of_referent: int | None
    resolvable: bool

    @property
    def predicted(self) -> str | None:
        return self.ranking[0] if self.ranking else None

    @property
    def correct(self) -> bool:
        return self.resolvable and self.predicted == self.referent_id


class EmbeddingBackend(Protocol):
    """Maps texts and images into a shared vector space."""

    backend_id: str
    dimension: int
    deterministic: bool

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_image(self, image: Image) -> np.ndarray: ...


def _hash_gaussian(seed: str, dimension: int) -> np.ndarray:
    """Platform-stable standard-normal vector from a string seed.

    Counter-mode sha256 supplies uniforms, Box-Muller turns them into
    normals. No global RNG involved, so results never depend on call
    order, platform, or numpy version.
    """
    out = np.empty(dimension, dtype=np.float64)
    i = 0
    counter = 0
    while i < dimension:
        digest = hashlib.sha256(f"{seed}|{counter}".encode("utf-8")).digest()
        counter += 1
        u1 = (int.from_bytes(digest[:8], "big") + 1) / (2**64 + 1)
        u2 = (int.from_bytes(digest[8:16], "big") + 1) / (2**64 + 1)
        r = math.sqrt(-2.0 * math.log(u1))
        out[i] = r * math.cos(2.0 * math.pi * u2)
        i += 1
        if i < dimension:
            out[i] = r * math.sin(2.0 * math.pi * u2)
            i += 1
    return out


class HashEmbeddingBackend:
    """Deterministic mock embeddings derived from token hashes.

    A text maps to the mean of its tokens' hash vectors, an image to the
    hash vector of its id. Texts sharing tokens land near each other;
    images are near-orthogonal noise. Useful for exercising the retrieval
    pipeline and for random-performance baselines, not for accuracy.
    """

    deterministic = True

    def __init__(self, dimension: int = 64, salt: str = "hash-v1") -> None:
        if dimension < 2:
            raise ValueError("dimension must be at least 2")
        self.dimension = dimension
        self.salt = salt
        self.backend_id = f"hash:{salt}:d{dimension}"

    def _token_vector(self, token: str) -> np.ndarray:
        return _hash_gaussian(f"{self.salt}|token|{token}", self.dimension)

    def embed_text(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError(f"cannot embed text with no tokens: {text!r}")
        return np.mean([self._token_vector(t) for t in tokens], axis=0)

    def embed_image(self, image: Image) -> np.ndarray:
        return _hash_gaussian(f"{self.salt}|image|{image.image_id}", self.dimension)


class PlantedOracleBackend:
    """Backend whose image embeddings are the embeddings of planted texts.

    Each image id maps to a description; the image's vector is the text
    embedding of that description, so retrieving with the planted text (or
    something token-close to it) finds the image. Gives experiments a knob
    for where retrieval succeeds without any model in the loop.
    """

    deterministic = True

    def __init__(self, planted: Mapping[str, str], dimension: int = 64, salt: str = "planted-v1") -> None:
        self.planted = dict(planted)
        self._inner = HashEmbeddingBackend(dimension=dimension, salt=salt)
        self.dimension = dimension
        fingerprint = hashlib.sha256(
            json.dumps(sorted(self.planted.items()), ensure_ascii=False).encode("utf-8")
        ).hexdigest()[:12]
        self.backend_id = f"planted:{salt}:d{dimension}:{fingerprint}"

    def embed_text(self, text: str) -> np.ndarray:
        return self._inner.embed_text(text)

    def embed_image(self, image: Image) -> np.ndarray:
        planted = self.planted.get(image.image_id, image.image_id)
        return self._inner.embed_text(planted)


class HttpEmbeddingBackend:
    """Client for an embedding service speaking a minimal JSON contract.

    POST {base_url}/embeddings with {"kind": "text"|"image", "input": ...};
    the response carries {"embedding": [...]}. Images are sent by uri.
    """

    deterministic = False

    def __init__(
        self,
        base_url: str,
        dimension: int,
        backend_id: str | None = None,
        timeout: float = 30.0,
        api_key_env: str | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.dimension = dimension
        self.backend_id = backend_id or f"http:{self.base_url}:d{dimension}"
        self.timeout = timeout
        # only the env var NAME is configured; the key itself never leaves os.environ
        self.api_key_env = api_key_env

    def _headers(self) -> dict[str, str]:
        if not self.api_key_env:
            return {}
        key = os.environ.get(self.api_key_env)
        if not key:
            raise RuntimeError(f"credentials env var {self.api_key_env!r} is not set")
        return {"Authorization": f"Bearer {key}"}

    def _post(self, kind: str, value: str) -> np.ndarray:
        resp = httpx.post(
            f"{self.base_url}/embeddings",
            json={"kind": kind, "input": value},
            headers=self._headers(),
            timeout=self.timeout,
        )
        resp.raise_for_status()
        vec = np.asarray(resp.json()["embedding"], dtype=np.float64)
        if vec.shape != (self.dimension,):
            raise ValueError(f"embedding service returned shape {vec.shape}, expected ({self.dimension},)")
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        return self._post("text", text)

    def embed_image(self, image: Image) -> np.ndarray:
        return self._post("image", image.uri or image.image_id)


class EmbeddingCache:
    """Persistent store of raw backend vectors keyed (backend_id, key).

    Keys are prefixed "text:" or "image:" so the two spaces cannot
    collide. The file format is JSONL behind a versioned header; stale
    formats fail loudly instead of feeding old vectors into new runs.
    """

    def __init__(self) -> None:
        self._store: dict[tuple[str, str], np.ndarray] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def get_or_compute(self, backend_id: str, key: str, compute) -> np.ndarray:
        k = (backend_id, key)
        if k in self._store:
            self.hits += 1
            return self._store[k]
        self.misses += 1
        vec = np.asarray(compute(), dtype=np.float64)
        self._store[k] = vec
        return vec

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": CACHE_FORMAT, "version": CACHE_VERSION}) + "\n")
            for (backend_id, key), vec in sorted(self._store.items()):
                record = {
                    "backend_id": backend_id,
                    "key": key,
                    "vector": [float(x) for x in vec],
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingCache":
        cache = cls()
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
            header = json.loads(first) if first else {}
            if header.get("format") != CACHE_FORMAT:
                raise ValueError(f"{path}: not an embedding cache file")
            if header.get("version") != CACHE_VERSION:
                raise ValueError(
                    f"{path}: cache version {header.get('version')!r}, expected {CACHE_VERSION}"
                )
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                cache._store[(obj["backend_id"], obj["key"])] = np.asarray(
                    obj["vector"], dtype=np.float64
                )
        return cache


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return vec / norm


def encode_text(
    backend: EmbeddingBackend,
    text: str,
    *,
    normalize: bool = True,
    cache: EmbeddingCache | None = None,
) -> TextEmbedding:
    if not text:
        raise ValueError("cannot encode an empty description")
    if cache is not None:
        vec = cache.get_or_compute(backend.backend_id, f"text:{text}", lambda: backend.embed_text(text))
    else:
        vec = np.asarray(backend.embed_text(text), dtype=np.float64)
    vec = _unit(vec) if normalize else np.asarray(vec, dtype=np.float64)
    return TextEmbedding(text=text, vector=vec, backend_id=backend.backend_id, normalized=normalize)


def encode_candidates(
    backend: EmbeddingBackend,
    images: Sequence[Image],
    *,
    normalize: bool = True,
    cache: EmbeddingCache | None = None,
) -> CandidateMatrix:
    if not images:
        raise ValueError("candidate set is empty")
    rows = []
    for img in images:
        if cache is not None:
            vec = cache.get_or_compute(
                backend.backend_id, f"image:{img.image_id}", lambda img=img: backend.embed_image(img)
            )
        else:
            vec = np.asarray(backend.embed_image(img), dtype=np.float64)
        rows.append(_unit(vec) if normalize else np.asarray(vec, dtype=np.float64))
    return CandidateMatrix(
        image_ids=tuple(img.image_id for img in images),
        matrix=np.stack(rows),
        backend_id=backend.backend_id,
        normalized=normalize,
    )


def score_and_rank(
    candidates: CandidateMatrix,
    embedding: TextEmbedding,
    *,
    mention_id: str = "",
    referent_id: str | None = None,
) -> RetrievalResult:
    """Dot-product scores plus the best-first candidate ordering.

    Ties break toward the earlier candidate in canonical order, so the
    ranking is a deterministic function of its inputs. ``referent_id``
    (when known) yields rank_of_referent; absent from the candidates it
    stays None and the result is marked unresolvable.
    """
    if candidates.backend_id != embedding.backend_id:
        raise ValueError(
            f"backend mismatch: candidates from {candidates.backend_id!r}, "
            f"description from {embedding.backend_id!r}"
        )
    if candidates.normalized != embedding.normalized:
        raise ValueError("normalization flags of candidates and description differ")
    if candidates.matrix.shape[1] != embedding.vector.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {candidates.matrix.shape}, "
            f"vector has {embedding.vector.shape[0]} entries"
        )
    scores = candidates.matrix @ embedding.vector
    order = np.argsort(-scores, kind="stable")
    ranking = tuple(candidates.image_ids[int(i)] for i in order)
    resolvable = referent_id is not None and referent_id in candidates.image_ids
    rank = (ranking.index(referent_id) + 1) if resolvable else None
    return RetrievalResult(
        mention_id=mention_id,
        description=embedding.text,
        referent_id=referent_id,
        candidate_ids=candidates.image_ids,
        scores=tuple(float(s) for s in scores),
        ranking=ranking,
        rank_of_referent=rank,
        resolvable=resolvable,
    )


def identify(
    corpus: Corpus,
    dialogue: Dialogue,
    mention: Mention,
    description: str,
    backend: EmbeddingBackend,
    *,
    reduced: bool,
    normalize: bool = True,
    cache: EmbeddingCache | None = None,
) -> RetrievalResult:
    """Resolve a mention against its candidate set.

    The candidate set honors game-state reduction when asked; a mention
    whose referent was ranked away comes back unresolvable (rank None) and
    is scored as a failure downstream. Multi-image mentions get the full
    ranking but no referent rank, which is only defined for single images.
    """
    images = candidate_set_at(corpus, dialogue, mention, reduced=reduced)
    candidates = encode_candidates(backend, images, normalize=normalize, cache=cache)
    embedding = encode_text(backend, description, normalize=normalize, cache=cache)
    referent = mention.referent if mention.is_single_image else None
    return score_and_rank(candidates, embedding, mention_id=mention.mention_id, referent_id=referent)
