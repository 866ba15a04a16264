"""Smart-meter data pipeline: encode, encrypt, wrap into transactions.

Readings are serialised to canonical text fields, each field is encrypted
with AES-256-CTR under the account's 32-byte symmetric key, and the three
ciphertexts are wrapped into a record-append transaction for the chain.

Counter layout: every record draws a fresh 16-byte base counter whose last
four bytes are zero; byte 12 carries the field index (0=id, 1=time, 2=value)
and bytes 13..15 count keystream blocks big-endian, so the three fields of a
record never share keystream and each field can span 2**24 blocks.

The deployment being modelled reuses an account's private key as its AES
key. That conflation is kept here (one 32-byte secret doubles as the address
seed) for fidelity; it is not a recommendation.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .chain import Address, Transaction
from .contract import CallKind, ContractCall

KEY_LEN = 32
COUNTER_LEN = 16
NONCE_RANDOM_LEN = 12
FIELD_ID, FIELD_TIME, FIELD_VALUE = 0, 1, 2

# Default wire size of a record transaction (payload plus envelope), in kB.
DEFAULT_RECORD_TX_KB = 0.759808
DEFAULT_RECORD_TX_GAS = 45_000


class MeterError(Exception):
    pass


class BadKeyLength(MeterError):
    pass


class MalformedPlaintext(MeterError):
    """Decryption produced bytes that do not decode; wrong key or corruption."""


@dataclass(frozen=True, slots=True)
class SymmetricKey:
    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != KEY_LEN:
            raise BadKeyLength(f"key must be {KEY_LEN} bytes, got {len(self.bytes)}")


@dataclass(frozen=True, slots=True)
class MeterAccount:
    """An account whose 32-byte secret doubles as AES key and address seed."""

    name: str
    key: SymmetricKey

    @property
    def address(self) -> Address:
        return Address.from_seed(self.key.bytes)

    @classmethod
    def generate(cls, name: str, rng: random.Random) -> "MeterAccount":
        return cls(name=name, key=SymmetricKey(rng.randbytes(KEY_LEN)))


@dataclass(frozen=True, slots=True)
class MeterRecord:
    """One reading: device id, collection time, cumulative energy in kWh.

    Energy is a non-negative decimal with exactly three fractional digits.
    """

    device_id: str
    collected_at: int
    energy_kwh: Decimal

    def __post_init__(self) -> None:
        if self.collected_at < 0:
            raise ValueError("collection time must be non-negative")
        quantised = Decimal(self.energy_kwh).quantize(Decimal("0.001"))
        if quantised < 0:
            raise ValueError("energy must be non-negative")
        object.__setattr__(self, "energy_kwh", quantised)


@dataclass(frozen=True, slots=True)
class EncryptedRecord:
    """Ciphertexts of the three record fields plus the base counter block."""

    id_ct: bytes
    time_ct: bytes
    value_ct: bytes
    nonce: bytes

    def __post_init__(self) -> None:
        if len(self.nonce) != COUNTER_LEN:
            raise ValueError(f"nonce must be {COUNTER_LEN} bytes")


def encode_record(rec: MeterRecord) -> tuple[bytes, bytes, bytes]:
    """Canonical text encodings: id as-is, time as a decimal integer string,
    value as a fixed-point string with three decimals."""
    return (
        rec.device_id.encode("utf-8"),
        str(rec.collected_at).encode("ascii"),
        f"{rec.energy_kwh:.3f}".encode("ascii"),
    )


def decode_record(id_bytes: bytes, time_bytes: bytes, value_bytes: bytes) -> MeterRecord:
    """Inverse of encode_record; raises MalformedPlaintext on any mismatch."""
    try:
        device_id = id_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPlaintext("device id is not valid UTF-8") from exc
    time_s = time_bytes.decode("ascii", errors="replace")
    if not time_s.isdigit():
        raise MalformedPlaintext("collection time is not a decimal integer")
    value_s = value_bytes.decode("ascii", errors="replace")
    whole, dot, frac = value_s.partition(".")
    if dot != "." or len(frac) != 3 or not whole.isdigit() or not frac.isdigit():
        raise MalformedPlaintext("energy value is not a fixed-point decimal")
    try:
        energy = Decimal(value_s)
    except InvalidOperation as exc:  # pragma: no cover - guarded above
        raise MalformedPlaintext("energy value does not parse") from exc
    return MeterRecord(device_id=device_id, collected_at=int(time_s), energy_kwh=energy)


def _keystream_xor(data: bytes, key: SymmetricKey, counter0: bytes) -> bytes:
    cipher = Cipher(algorithms.AES(key.bytes), modes.CTR(counter0))
    enc = cipher.encryptor()
    return enc.update(data) + enc.finalize()


def encrypt_field(plaintext: bytes, key: SymmetricKey, counter0: bytes) -> bytes:
    """AES-256 counter mode with big-endian counter increment.

    Ciphertext length equals plaintext length; empty input yields empty
    output. Decryption is the same operation.
    """
    if len(counter0) != COUNTER_LEN:
        raise ValueError(f"counter block must be {COUNTER_LEN} bytes")
    if not plaintext:
        return b""
    return _keystream_xor(plaintext, key, counter0)


decrypt_field = encrypt_field  # CTR is its own inverse


def field_counter(nonce: bytes, field_index: int) -> bytes:
    """Per-field initial counter: record nonce with the field index mixed in."""
    return nonce[:NONCE_RANDOM_LEN] + bytes([field_index]) + b"\x00\x00\x00"


def fresh_nonce(rng: random.Random) -> bytes:
    return rng.randbytes(NONCE_RANDOM_LEN) + b"\x00" * (COUNTER_LEN - NONCE_RANDOM_LEN)


def encrypt_record(rec: MeterRecord, key: SymmetricKey, rng: random.Random) -> EncryptedRecord:
    """Encode then encrypt a reading under a fresh per-record nonce."""
    id_b, time_b, value_b = encode_record(rec)
    nonce = fresh_nonce(rng)
    return EncryptedRecord(
        id_ct=encrypt_field(id_b, key, field_counter(nonce, FIELD_ID)),
        time_ct=encrypt_field(time_b, key, field_counter(nonce, FIELD_TIME)),
        value_ct=encrypt_field(value_b, key, field_counter(nonce, FIELD_VALUE)),
        nonce=nonce,
    )


def decrypt_record(enc: EncryptedRecord, key: SymmetricKey) -> MeterRecord:
    """Exact inverse of encrypt_record; MalformedPlaintext signals a wrong
    key or a corrupted/truncated ciphertext."""
    id_b = decrypt_field(enc.id_ct, key, field_counter(enc.nonce, FIELD_ID))
    time_b = decrypt_field(enc.time_ct, key, field_counter(enc.nonce, FIELD_TIME))
    value_b = decrypt_field(enc.value_ct, key, field_counter(enc.nonce, FIELD_VALUE))
    return decode_record(id_b, time_b, value_b)


def pack_record_fields(enc: EncryptedRecord) -> tuple[bytes, bytes, bytes]:
    """Wire form of the three record fields for the on-chain call.

    The nonce is carried in front of the id ciphertext so the stored record
    alone suffices to decrypt; the registry treats all three as opaque.
    """
    return (enc.nonce + enc.id_ct, enc.time_ct, enc.value_ct)


def unpack_record_fields(id_field: bytes, time_field: bytes, value_field: bytes) -> EncryptedRecord:
    if len(id_field) < COUNTER_LEN:
        raise MalformedPlaintext("stored id field shorter than the counter block")
    return EncryptedRecord(
        id_ct=id_field[COUNTER_LEN:],
        time_ct=time_field,
        value_ct=value_field,
        nonce=id_field[:COUNTER_LEN],
    )


def build_record_tx(
    enc: EncryptedRecord,
    sender: Address,
    tx_id: int = 0,
    gas: int = DEFAULT_RECORD_TX_GAS,
    target_size_kb: float = DEFAULT_RECORD_TX_KB,
) -> Transaction:
    """Wrap an encrypted record into a record-append transaction.

    The transaction size is the payload plus a fixed envelope, padded up to
    ``target_size_kb`` so typical records land exactly on the configured
    average wire size; oversized fields grow the transaction past it.
    """
    id_field, time_field, value_field = pack_record_fields(enc)
    payload_kb = (len(id_field) + len(time_field) + len(value_field)) / 1000.0
    call = ContractCall(
        kind=CallKind.NEW_RECO,
        record_id=id_field,
        record_time=time_field,
        record_value=value_field,
    )
    return Transaction(
        tx_id=tx_id,
        sender=sender,
        gas=gas,
        size_kb=max(target_size_kb, payload_kb),
        payload=call,
    )


def simulate_meter_stream(
    device_id: str,
    interval_s: int,
    duration_s: int,
    rng: random.Random,
    start_time: int = 0,
    max_step_kwh: float = 0.5,
) -> list[MeterRecord]:
    """Readings at a fixed cadence with a non-decreasing cumulative energy."""
    if interval_s <= 0:
        raise ValueError("interval must be positive")
    count = duration_s // interval_s
    records = []
    energy = Decimal("0.000")
    for k in range(count):
        energy += Decimal(f"{rng.uniform(0.0, max_step_kwh):.3f}")
        records.append(
            MeterRecord(
                device_id=device_id,
                collected_at=start_time + k * interval_s,
                energy_kwh=energy,
            )
        )
    return records


def save_meter_stream(records: list[MeterRecord], path) -> None:
    """Write one ``device_id,unix_time,kwh`` line per record."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f"{rec.device_id},{rec.collected_at},{rec.energy_kwh:.3f}\n")


def load_meter_stream(path) -> list[MeterRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected device_id,unix_time,kwh")
            device, time_s, kwh = parts
            records.append(
                MeterRecord(
                    device_id=device,
                    collected_at=int(time_s),
                    energy_kwh=Decimal(kwh),
                )
            )
    return records
