"""Encrypted per-user profile storage.

Every artifact (raw samples, trained HMM, face images) lives in its own
encrypted file: scrypt-derived key, AES-256-GCM, fresh salt and nonce per
save. Tampering with a single bit, or using the wrong passphrase, fails
closed with no partial plaintext.
"""

import tempfile
from pathlib import Path

from keyface import ProfileStore, decrypt_profile, encrypt_profile
from keyface.profile_store import ProfileAuthError

payload = b"50,30;60,-10;70\n48,35;58,-8;72\n"
passphrase = "a deployment passphrase"

blob = encrypt_profile(payload, passphrase)
print(f"payload: {len(payload)} bytes -> container: {len(blob)} bytes")
print(f"header: magic={blob[:4]!r} version={blob[4]} "
      f"salt={blob[5:21].hex()[:16]}... nonce={blob[21:33].hex()}")

print("round trip ok:", decrypt_profile(blob, passphrase) == payload)

# Same payload, new save: fresh salt and nonce, different ciphertext.
again = encrypt_profile(payload, passphrase)
print("two saves identical?", blob == again)

# Flip one bit anywhere past the header: authentication fails.
corrupted = bytearray(blob)
corrupted[40] ^= 0x01
try:
    decrypt_profile(bytes(corrupted), passphrase)
except ProfileAuthError as exc:
    print("1-bit corruption detected:", exc)

try:
    decrypt_profile(blob, "wrong passphrase")
except ProfileAuthError:
    print("wrong passphrase: indistinguishable from tampering, as designed")

# The store keeps one file per user per artifact kind.
with tempfile.TemporaryDirectory() as tmp:
    store = ProfileStore(Path(tmp) / "profiles")
    store.save_profile("alice", "samples", payload, passphrase)
    store.save_profile("alice", "hmm", b'{"model": "..."}', passphrase)
    files = sorted(p.name for p in store.root.iterdir())
    print("\nfiles on disk:", files)
    print("plaintext on disk?",
          any(payload in p.read_bytes() for p in store.root.iterdir()))
