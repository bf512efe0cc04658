#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "waypost/field.hpp"

namespace waypost {

// One key per contact edge, symmetric between the two endpoints.
struct SharedKey {
    std::array<uint8_t, 16> bytes{};

    static SharedKey from_hex(const std::string& hex);
    std::string to_hex() const;

    friend bool operator==(const SharedKey& a, const SharedKey& b) { return a.bytes == b.bytes; }
};

// Everything one checkin/retrieval round needs, recomputable by both
// endpoints from (key, direction, ctr).
struct Keystream {
    FieldElement t;            // rotation parameter
    Vector2 s;                 // masking vector
    uint64_t k1 = 0;           // 64-bit payload mask
    FieldElement k2;           // second masking element
    int padbit0 = 0;           // pad for the sender's protocol bit
    int padbit1 = 0;           // pad for the believed peer bit
};

// Keyed PRF expansion: block j is the AES-128 image of
//   byte0 = direction, bytes1-8 = ctr big-endian, bytes9-14 = zero, byte15 = j
// Assignment: t <- blk0 mod p, s <- (blk1 mod p, blk2 mod p),
// k1 <- first 8 bytes of blk3, k2 <- blk4 mod p, padbits <- low bits of blk5.
Keystream derive_keystream(const SharedKey& key, int direction, uint64_t ctr);

// Bitwise XOR; involutive. The result always embeds into the field without
// reduction since 2^64 < p.
inline uint64_t mask64(uint64_t x, uint64_t k1) { return x ^ k1; }

// X25519 key agreement; both directions derive the same 16-byte key
// (SHA-256 of the raw shared secret, truncated). Callers that provision keys
// out of band construct SharedKey directly instead.
struct KeyPair {
    std::array<uint8_t, 32> priv{};
    std::array<uint8_t, 32> pub{};
};

KeyPair generate_keypair();
SharedKey key_agree(const std::array<uint8_t, 32>& own_private,
                    const std::array<uint8_t, 32>& peer_public);

std::string bytes_to_hex(const uint8_t* data, size_t n);
void hex_to_bytes(const std::string& hex, uint8_t* out, size_t n);

} // namespace waypost
