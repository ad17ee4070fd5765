"""Parameter sets for the leveled encryption scheme."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from ..errors import InvalidParams
from . import modmath


@dataclass(frozen=True)
class HeParams:
    """Ring dimension, ordered modulus chain, encoding scale.

    The chain starts with one wide base prime that anchors decryption
    precision; each rescale consumes the chain from the end. The extra
    special modulus exists only inside key-switching (the key material
    is generated over chain + special, ciphertexts never carry it).
    """

    ring_dimension: int
    modulus_chain: tuple[int, ...]
    scale: float
    special_modulus: int

    @property
    def slot_count(self) -> int:
        return self.ring_dimension // 2

    @property
    def max_level(self) -> int:
        return len(self.modulus_chain) - 1

    def validate(self) -> None:
        n = self.ring_dimension
        if not isinstance(n, int) or n < 2048 or n & (n - 1):
            raise InvalidParams(f"ring_dimension {n} must be a power of two >= 2048")
        chain = self.modulus_chain
        if len(chain) < 2:
            raise InvalidParams("modulus chain needs a base prime plus >= 1 scale prime")
        two_n = 2 * n
        everything = list(chain) + [self.special_modulus]
        if len(set(everything)) != len(everything):
            raise InvalidParams("chain and special moduli must be distinct")
        for p in everything:
            if not isinstance(p, int) or p.bit_length() > modmath.MAX_MODULUS_BITS:
                raise InvalidParams(f"modulus {p} wider than {modmath.MAX_MODULUS_BITS} bits")
            if p % two_n != 1:
                raise InvalidParams(f"modulus {p} is not 1 mod 2N")
            if not modmath.is_prime(p):
                raise InvalidParams(f"modulus {p} is not prime")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidParams("scale must be positive and finite")
        if not math.log2(self.scale).is_integer():
            raise InvalidParams("scale must be a power of two")
        log_scale = int(math.log2(self.scale))
        for p in chain[1:]:
            if log_scale > p.bit_length():
                raise InvalidParams(
                    f"log2(scale)={log_scale} exceeds {p.bit_length()}-bit chain prime"
                )
        top = max(p.bit_length() for p in chain)
        if self.special_modulus.bit_length() < top:
            raise InvalidParams("special modulus must be at least as wide as the chain primes")

    def fingerprint(self) -> str:
        blob = ",".join(
            [str(self.ring_dimension)]
            + [str(p) for p in self.modulus_chain]
            + [repr(self.scale), str(self.special_modulus)]
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def create(
        cls,
        ring_dimension: int = 8192,
        base_prime_bits: int = 60,
        scale_prime_bits: int = 40,
        scale_primes: int = 4,
        scale_bits: int = 40,
    ) -> "HeParams":
        if ring_dimension < 2048 or ring_dimension & (ring_dimension - 1):
            raise InvalidParams(
                f"ring_dimension {ring_dimension} must be a power of two >= 2048"
            )
        two_n = 2 * ring_dimension
        wide = modmath.find_ntt_primes(base_prime_bits, 2, two_n)
        base, special = wide[0], wide[1]
        narrow = modmath.find_ntt_primes(
            scale_prime_bits, scale_primes, two_n, exclude=wide
        )
        params = cls(
            ring_dimension=ring_dimension,
            modulus_chain=(base, *narrow),
            scale=float(2**scale_bits),
            special_modulus=special,
        )
        params.validate()
        return params
