"""Primitives for signing, key agreement, and keyed transport.

Everything here is deterministic given its seed arguments, which keeps whole
simulation runs reproducible down to the byte.  The constructions are
simulation-grade: textbook RSA with fixed padding, classic finite-field
Diffie-Hellman, and a hash-counter stream cipher with a keyed-hash tag.  None
of this should guard real traffic; it exists so the protocol layer has honest
cryptographic behaviour (forgeries fail, tampering is detected) without
nondeterministic key material.

Byte conventions are big-endian throughout.  `canonical_encode` defines the
injective byte layout that both digests and signatures commit to.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CryptoError",
    "IntegrityError",
    "UnsupportedSchemeError",
    "RSA_SCHEME",
    "sha256",
    "canonical_encode",
    "canonical_decode",
    "encode_param_values",
    "RsaPublicKey",
    "RsaPrivateKey",
    "SignatureKeyPair",
    "keygen_signature",
    "sign",
    "verify",
    "DhParams",
    "TOY_DH_GROUP",
    "MODP_2048",
    "dh_keygen",
    "dh_public",
    "dh_shared",
    "kdf",
    "derive_nonce",
    "derive_seed",
    "CipherEnvelope",
    "encrypt",
    "decrypt",
]


class CryptoError(Exception):
    """Base class for failures in this module."""


class IntegrityError(CryptoError):
    """Authentication tag did not match; ciphertext rejected before decryption."""


class UnsupportedSchemeError(CryptoError, ValueError):
    """Requested signature scheme is not provided."""


DIGEST_LEN = 32
NONCE_LEN = 16
KEY_LEN = 32

RSA_SCHEME = "rsa-pkcs1v15-sha256"


# --------------------------------------------------------------------------- #
# hashing and deterministic byte streams
# --------------------------------------------------------------------------- #


def sha256(data: bytes) -> bytes:
    """SHA-256 digest of `data` (32 bytes)."""
    return hashlib.sha256(data).digest()


def _drbg_blocks(seed_material: bytes) -> Iterable[bytes]:
    """Infinite deterministic byte stream: SHA-256 over seed material and a counter."""
    counter = 0
    while True:
        yield sha256(seed_material + counter.to_bytes(8, "big"))
        counter += 1


class _Drbg:
    """Minimal deterministic random byte generator used for key generation.

    Not a certified DRBG; it only needs to be deterministic, uniform enough
    for prime search, and independent of interpreter RNG state.
    """

    def __init__(self, label: bytes, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self._blocks = _drbg_blocks(label + seed.to_bytes(16, "big"))
        self._buf = b""

    def take(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += next(self._blocks)
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def take_int(self, bits: int) -> int:
        nbytes = (bits + 7) // 8
        value = int.from_bytes(self.take(nbytes), "big")
        return value >> (nbytes * 8 - bits)


# --------------------------------------------------------------------------- #
# canonical message encoding
# --------------------------------------------------------------------------- #

_ENC_VERSION = b"\x01"


def encode_param_values(values: Sequence[float] | np.ndarray) -> bytes:
    """Length-prefixed parameter block: count as u64, then each value as f64."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size >= 1 << 64:
        raise ValueError("too many parameters to encode")
    return arr.size.to_bytes(8, "big") + arr.astype(">f8").tobytes()


def canonical_encode(values: Sequence[float] | np.ndarray, round_no: int, client_id: str, data_size: int) -> bytes:
    """Injective byte encoding of an update and its context.

    Layout, all big-endian:
      version byte 0x01
      round as u32
      client id as u16 length prefix plus UTF-8 bytes
      data size as u64
      parameter count as u64, then each parameter as IEEE-754 f64
    """
    if not 0 <= round_no < 1 << 32:
        raise ValueError(f"round {round_no} out of u32 range")
    if not 0 <= data_size < 1 << 64:
        raise ValueError(f"data size {data_size} out of u64 range")
    ident = client_id.encode("utf-8")
    if len(ident) > 0xFFFF:
        raise ValueError("client id longer than 65535 bytes")
    return (
        _ENC_VERSION
        + round_no.to_bytes(4, "big")
        + len(ident).to_bytes(2, "big")
        + ident
        + data_size.to_bytes(8, "big")
        + encode_param_values(values)
    )


def canonical_decode(blob: bytes) -> tuple[np.ndarray, int, str, int]:
    """Strict inverse of `canonical_encode`.

    Returns (values, round, client_id, data_size).  Raises ValueError on any
    structural problem, including trailing bytes.
    """
    if len(blob) < 1 or blob[0:1] != _ENC_VERSION:
        raise ValueError("bad encoding version")
    pos = 1
    if len(blob) < pos + 6:
        raise ValueError("truncated header")
    round_no = int.from_bytes(blob[pos : pos + 4], "big")
    pos += 4
    id_len = int.from_bytes(blob[pos : pos + 2], "big")
    pos += 2
    if len(blob) < pos + id_len + 16:
        raise ValueError("truncated identity or sizes")
    client_id = blob[pos : pos + id_len].decode("utf-8")
    pos += id_len
    data_size = int.from_bytes(blob[pos : pos + 8], "big")
    pos += 8
    count = int.from_bytes(blob[pos : pos + 8], "big")
    pos += 8
    if len(blob) != pos + count * 8:
        raise ValueError("parameter block length mismatch")
    values = np.frombuffer(blob[pos:], dtype=">f8").astype(np.float64)
    return values, round_no, client_id, data_size


# --------------------------------------------------------------------------- #
# RSA signatures (deterministic keygen, PKCS#1 v1.5 style padding)
# --------------------------------------------------------------------------- #

_E = 65537

# DER DigestInfo prefix for SHA-256, fixed so padding is deterministic.
_SHA256_PREFIX = bytes.fromhex("3031300d060960864801650304020105000420")

_SMALL_PRIMES = [
    p
    for p in range(3, 2000)
    if all(p % q for q in range(2, int(math.isqrt(p)) + 1))
]


def _is_probable_prime(n: int, rng: _Drbg, rounds: int = 40) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = 2 + rng.take_int(n.bit_length() + 16) % (n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _gen_prime(bits: int, rng: _Drbg) -> int:
    while True:
        cand = rng.take_int(bits)
        cand |= (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        if math.gcd(cand - 1, _E) != 1:
            continue
        if _is_probable_prime(cand, rng):
            return cand


@dataclass(frozen=True)
class RsaPublicKey:
    n: int
    e: int
    scheme: str = RSA_SCHEME

    def to_bytes(self) -> bytes:
        """Serialize as scheme id and big-endian (modulus, exponent) octets."""
        ident = self.scheme.encode("utf-8")
        n_oct = self.n.to_bytes((self.n.bit_length() + 7) // 8, "big")
        e_oct = self.e.to_bytes((self.e.bit_length() + 7) // 8, "big")
        return (
            len(ident).to_bytes(2, "big")
            + ident
            + len(n_oct).to_bytes(4, "big")
            + n_oct
            + len(e_oct).to_bytes(4, "big")
            + e_oct
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RsaPublicKey":
        pos = 2
        ident_len = int.from_bytes(blob[:2], "big")
        scheme = blob[pos : pos + ident_len].decode("utf-8")
        pos += ident_len
        n_len = int.from_bytes(blob[pos : pos + 4], "big")
        pos += 4
        n = int.from_bytes(blob[pos : pos + n_len], "big")
        pos += n_len
        e_len = int.from_bytes(blob[pos : pos + 4], "big")
        pos += 4
        e = int.from_bytes(blob[pos : pos + e_len], "big")
        pos += e_len
        if pos != len(blob):
            raise ValueError("trailing bytes in public key")
        if scheme != RSA_SCHEME:
            raise UnsupportedSchemeError(f"unknown scheme {scheme!r}")
        return cls(n=n, e=e, scheme=scheme)


@dataclass(frozen=True)
class RsaPrivateKey:
    n: int
    d: int
    scheme: str = RSA_SCHEME


@dataclass(frozen=True)
class SignatureKeyPair:
    private: RsaPrivateKey
    public: RsaPublicKey
    scheme: str = RSA_SCHEME


def keygen_signature(scheme: str = RSA_SCHEME, key_bits: int = 2048, seed: int = 0) -> SignatureKeyPair:
    """Generate a deterministic signing keypair from `seed`.

    key_bits must be 1024 (test-sized) or 2048 (default).  The same scheme,
    size, and seed always produce the same keypair.
    """
    if scheme != RSA_SCHEME:
        raise UnsupportedSchemeError(f"unknown scheme {scheme!r}")
    if key_bits not in (1024, 2048):
        raise ValueError("key_bits must be 1024 or 2048")
    rng = _Drbg(b"rsa-keygen:" + key_bits.to_bytes(4, "big"), seed)
    half = key_bits // 2
    p = _gen_prime(half, rng)
    q = _gen_prime(half, rng)
    while q == p:
        q = _gen_prime(half, rng)
    n = p * q
    lam = (p - 1) * (q - 1) // math.gcd(p - 1, q - 1)
    d = pow(_E, -1, lam)
    return SignatureKeyPair(
        private=RsaPrivateKey(n=n, d=d),
        public=RsaPublicKey(n=n, e=_E),
    )


def _emsa_encode(digest: bytes, length: int) -> bytes:
    # 0x00 0x01 <0xff padding> 0x00 <DigestInfo> <digest>
    payload = _SHA256_PREFIX + digest
    pad_len = length - len(payload) - 3
    if pad_len < 8:
        raise CryptoError("modulus too small for padding")
    return b"\x00\x01" + b"\xff" * pad_len + b"\x00" + payload


def sign(digest: bytes, private: RsaPrivateKey) -> bytes:
    """Deterministic signature over a 32-byte digest."""
    if private.scheme != RSA_SCHEME:
        raise UnsupportedSchemeError(f"unknown scheme {private.scheme!r}")
    if len(digest) != DIGEST_LEN:
        raise ValueError("digest must be 32 bytes")
    k = (private.n.bit_length() + 7) // 8
    em = int.from_bytes(_emsa_encode(digest, k), "big")
    return pow(em, private.d, private.n).to_bytes(k, "big")


def verify(digest: bytes, signature: bytes, public: RsaPublicKey) -> bool:
    """True iff `signature` is a valid signature over `digest` for `public`.

    Malformed signatures return False rather than raising.
    """
    if public.scheme != RSA_SCHEME:
        raise UnsupportedSchemeError(f"unknown scheme {public.scheme!r}")
    if len(digest) != DIGEST_LEN:
        raise ValueError("digest must be 32 bytes")
    k = (public.n.bit_length() + 7) // 8
    if len(signature) != k:
        return False
    s = int.from_bytes(signature, "big")
    if s >= public.n:
        return False
    em = pow(s, public.e, public.n).to_bytes(k, "big")
    try:
        return em == _emsa_encode(digest, k)
    except CryptoError:
        return False


# --------------------------------------------------------------------------- #
# Diffie-Hellman key agreement
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class DhParams:
    """Finite-field group: safe prime modulus and generator."""

    p: int
    g: int

    def __post_init__(self) -> None:
        if self.p < 5 or not 1 < self.g < self.p:
            raise ValueError("degenerate group parameters")


# Tiny textbook group, unit-test sized.  Secrets in it are toys by design.
TOY_DH_GROUP = DhParams(p=23, g=5)

# RFC 3526 group 14: 2048-bit MODP safe prime, generator 2.
MODP_2048 = DhParams(
    p=int(
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
        "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
        "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
        "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
        "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
        "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
        "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
        16,
    ),
    g=2,
)


def dh_public(params: DhParams, private: int) -> int:
    """Public value for a private exponent: g to the private, mod p."""
    if not 1 <= private <= params.p - 2:
        raise ValueError("private exponent out of range")
    return pow(params.g, private, params.p)


def dh_keygen(params: DhParams, seed: int) -> tuple[int, int]:
    """Deterministic (private, public) pair for the given group and seed.

    Redraws until the public value lands in [2, p-2], the range dh_shared
    accepts; in tiny test groups the generator can hit p-1 legitimately.
    """
    rng = _Drbg(b"dh-keygen", seed)
    span = params.p - 3  # private in [2, p-2]
    while True:
        private = 2 + rng.take_int(max(256, params.p.bit_length()) + 64) % span
        public = dh_public(params, private)
        if 2 <= public <= params.p - 2:
            return private, public


def dh_shared(private: int, peer_public: int, params: DhParams) -> int:
    """Shared secret from our private exponent and the peer's public value.

    The peer value must lie in [2, p-2]; 0, 1, and p-1 are rejected because
    they force degenerate secrets.
    """
    if not 2 <= peer_public <= params.p - 2:
        raise ValueError("peer public value out of range")
    if not 1 <= private <= params.p - 2:
        raise ValueError("private exponent out of range")
    return pow(peer_public, private, params.p)


def kdf(secret: int) -> bytes:
    """Derive a 32-byte symmetric key: hash of the minimal big-endian secret."""
    if secret < 0:
        raise ValueError("secret must be non-negative")
    width = max(1, (secret.bit_length() + 7) // 8)
    return sha256(secret.to_bytes(width, "big"))


def derive_nonce(client_id: str, round_no: int) -> bytes:
    """Per-sender, per-round nonce: first 16 bytes of hash(id, round as u32)."""
    if not 0 <= round_no < 1 << 32:
        raise ValueError(f"round {round_no} out of u32 range")
    return sha256(client_id.encode("utf-8") + round_no.to_bytes(4, "big"))[:NONCE_LEN]


def derive_seed(*parts: int | str) -> int:
    """Collapse a mixed label/index path into a stable 64-bit RNG seed.

    Parts are length-framed and type-tagged before hashing, so ("ab", 1)
    and ("a", "b1") land on different seeds.
    """
    if not parts:
        raise ValueError("need at least one part")
    hasher = hashlib.sha256(b"seed-derivation/v1")
    for part in parts:
        if isinstance(part, bool) or not isinstance(part, (int, str)):
            raise TypeError(f"seed part must be int or str, got {type(part).__name__}")
        if isinstance(part, int):
            hasher.update(b"i" + part.to_bytes(16, "big", signed=True))
        else:
            raw = part.encode("utf-8")
            hasher.update(b"s" + len(raw).to_bytes(4, "big") + raw)
    return int.from_bytes(hasher.digest()[:8], "big")


# --------------------------------------------------------------------------- #
# authenticated stream cipher (hash-counter keystream, keyed-hash tag)
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class CipherEnvelope:
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def __post_init__(self) -> None:
        if len(self.nonce) != NONCE_LEN:
            raise ValueError("nonce must be 16 bytes")
        if len(self.tag) != DIGEST_LEN:
            raise ValueError("tag must be 32 bytes")


def _keystream(key: bytes, nonce: bytes, length: int) -> bytes:
    blocks = []
    for i in range((length + DIGEST_LEN - 1) // DIGEST_LEN):
        blocks.append(sha256(key + nonce + i.to_bytes(8, "big")))
    return b"".join(blocks)[:length]


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def _check_key_nonce(key: bytes, nonce: bytes) -> None:
    if len(key) != KEY_LEN:
        raise ValueError("key must be 32 bytes")
    if len(nonce) != NONCE_LEN:
        raise ValueError("nonce must be 16 bytes")


def encrypt(key: bytes, nonce: bytes, plaintext: bytes) -> CipherEnvelope:
    """Encrypt and authenticate.  Keystream block i is hash(key, nonce, i)."""
    _check_key_nonce(key, nonce)
    if len(plaintext) == 0:
        ciphertext = b""
    else:
        ciphertext = _xor(plaintext, _keystream(key, nonce, len(plaintext)))
    tag = sha256(key + nonce + ciphertext)
    return CipherEnvelope(nonce=nonce, ciphertext=ciphertext, tag=tag)


def decrypt(key: bytes, envelope: CipherEnvelope) -> bytes:
    """Verify the tag, then decrypt.  Raises IntegrityError before touching
    the plaintext if the tag does not match."""
    _check_key_nonce(key, envelope.nonce)
    expected = sha256(key + envelope.nonce + envelope.ciphertext)
    if expected != envelope.tag:
        raise IntegrityError("authentication tag mismatch")
    if len(envelope.ciphertext) == 0:
        return b""
    return _xor(envelope.ciphertext, _keystream(key, envelope.nonce, len(envelope.ciphertext)))
