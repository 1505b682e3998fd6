"""Encrypted, per-user persistence of samples, keystroke profiles, and face models.

File layout (bit-exact, so independent implementations interoperate):

    magic "KBFP" | version 0x01 | 16-byte salt | 12-byte nonce | AES-256-GCM
    ciphertext+tag of the payload

The key is derived with scrypt (N=2^15, r=8, p=1, 32 bytes) from a
deployment passphrase. GCM authentication makes any single-bit ciphertext
corruption (and a wrong passphrase, indistinguishably) fail closed.

Payloads are opaque bytes at this layer; :func:`pack_sections` /
:func:`unpack_sections` give them internal structure as length-prefixed
tagged sections so individual parts can evolve under the version byte.
"""

from __future__ import annotations

import functools
import hashlib
import os
import struct
import threading
import urllib.parse
from pathlib import Path
from typing import Mapping

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

__all__ = [
    "MAGIC",
    "VERSION",
    "ProfileFormatError",
    "ProfileAuthError",
    "SECTION_KEYSTROKE_SAMPLES",
    "SECTION_HMM_PROFILE",
    "SECTION_FACE_MODEL",
    "SECTION_CALIBRATION",
    "SECTION_FACE_IMAGES",
    "encrypt_profile",
    "decrypt_profile",
    "pack_sections",
    "unpack_sections",
    "ProfileStore",
]

MAGIC = b"KBFP"
VERSION = 0x01
_SALT_LEN = 16
_NONCE_LEN = 12
_SCRYPT_N = 2**15
_SCRYPT_R = 8
_SCRYPT_P = 1
_KEY_LEN = 32
_HEADER_LEN = len(MAGIC) + 1 + _SALT_LEN + _NONCE_LEN

SECTION_KEYSTROKE_SAMPLES = 0x01
SECTION_HMM_PROFILE = 0x02
SECTION_FACE_MODEL = 0x03
SECTION_CALIBRATION = 0x04
SECTION_FACE_IMAGES = 0x05


class ProfileFormatError(ValueError):
    """File bytes do not follow the profile container format."""


class ProfileAuthError(ValueError):
    """Authentication failed: tampered file or wrong passphrase (by design
    the two are indistinguishable)."""


@functools.lru_cache(maxsize=64)
def _derive_key(passphrase: str, salt: bytes) -> bytes:
    # scrypt is deliberately slow; cache per (passphrase, salt) so routine
    # loads of the same files do not pay the derivation cost repeatedly.
    return hashlib.scrypt(
        passphrase.encode("utf-8"),
        salt=salt,
        n=_SCRYPT_N,
        r=_SCRYPT_R,
        p=_SCRYPT_P,
        dklen=_KEY_LEN,
        maxmem=2**26,
    )


def encrypt_profile(payload: bytes, passphrase: str) -> bytes:
    """Seal payload bytes into the encrypted container format."""
    if not passphrase:
        raise ValueError("passphrase must be non-empty")
    salt = os.urandom(_SALT_LEN)
    nonce = os.urandom(_NONCE_LEN)
    key = _derive_key(passphrase, salt)
    ciphertext = AESGCM(key).encrypt(nonce, payload, None)
    return MAGIC + bytes([VERSION]) + salt + nonce + ciphertext


def decrypt_profile(blob: bytes, passphrase: str) -> bytes:
    """Open a container produced by :func:`encrypt_profile`."""
    if not passphrase:
        raise ValueError("passphrase must be non-empty")
    if len(blob) < _HEADER_LEN:
        raise ProfileFormatError(f"truncated file ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise ProfileFormatError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    version = blob[len(MAGIC)]
    if version != VERSION:
        raise ProfileFormatError(f"unsupported version {version:#04x}")
    offset = len(MAGIC) + 1
    salt = blob[offset : offset + _SALT_LEN]
    nonce = blob[offset + _SALT_LEN : offset + _SALT_LEN + _NONCE_LEN]
    ciphertext = blob[_HEADER_LEN:]
    key = _derive_key(passphrase, salt)
    try:
        return AESGCM(key).decrypt(nonce, ciphertext, None)
    except InvalidTag:
        raise ProfileAuthError(
            "authentication failed: file tampered with or wrong passphrase"
        ) from None


def pack_sections(sections: Mapping[int, bytes]) -> bytes:
    """Concatenate sections as [length:4 big-endian][tag:1][body:length]."""
    parts = []
    for tag in sorted(sections):
        body = sections[tag]
        if not 0 <= tag <= 0xFF:
            raise ValueError(f"section tag {tag} does not fit one byte")
        parts.append(struct.pack(">IB", len(body), tag) + body)
    return b"".join(parts)


def unpack_sections(data: bytes) -> dict[int, bytes]:
    """Inverse of :func:`pack_sections`."""
    sections: dict[int, bytes] = {}
    pos = 0
    while pos < len(data):
        if pos + 5 > len(data):
            raise ProfileFormatError("truncated section header")
        length, tag = struct.unpack_from(">IB", data, pos)
        pos += 5
        if pos + length > len(data):
            raise ProfileFormatError(f"section {tag:#04x} truncated")
        sections[tag] = data[pos : pos + length]
        pos += length
    return sections


class ProfileStore:
    """Directory of encrypted per-user files, one per artifact kind.

    Writes are atomic (temp file + rename) and serialized per user;
    concurrent reads need no coordination.
    """

    KINDS = ("samples", "hmm", "faces", "face-model")

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    def user_lock(self, user_id: str) -> threading.RLock:
        """Reentrant per-user lock; hold it across read-modify-write cycles."""
        with self._locks_guard:
            return self._locks.setdefault(user_id, threading.RLock())

    def path_for(self, user_id: str, kind: str) -> Path:
        if kind not in self.KINDS:
            raise ValueError(f"unknown artifact kind {kind!r}, expected one of {self.KINDS}")
        safe = urllib.parse.quote(user_id, safe="")
        return self.root / f"{safe}.{kind}.kbfp"

    def exists(self, user_id: str, kind: str) -> bool:
        return self.path_for(user_id, kind).exists()

    def save_profile(
        self, user_id: str, kind: str, payload: bytes, passphrase: str
    ) -> Path:
        """Encrypt and atomically persist one artifact for one user."""
        target = self.path_for(user_id, kind)
        blob = encrypt_profile(payload, passphrase)
        with self.user_lock(user_id):
            tmp = target.with_suffix(target.suffix + ".tmp")
            tmp.write_bytes(blob)
            os.replace(tmp, target)
        return target

    def load_profile(self, user_id: str, kind: str, passphrase: str) -> bytes:
        """Read and decrypt one artifact; FileNotFoundError if absent."""
        blob = self.path_for(user_id, kind).read_bytes()
        return decrypt_profile(blob, passphrase)

    def delete(self, user_id: str, kind: str) -> None:
        with self.user_lock(user_id):
            self.path_for(user_id, kind).unlink(missing_ok=True)
