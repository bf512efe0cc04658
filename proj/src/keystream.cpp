#include "waypost/keystream.hpp"

#include <cstring>

#include <openssl/evp.h>
#include <openssl/sha.h>

namespace waypost {

namespace {

constexpr int kBlocks = 6;

u128 load_be128(const uint8_t* b) {
    u128 v = 0;
    for (int i = 0; i < 16; ++i) v = (v << 8) | b[i];
    return v;
}

uint64_t load_be64(const uint8_t* b) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | b[i];
    return v;
}

} // namespace

std::string bytes_to_hex(const uint8_t* data, size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(n * 2);
    for (size_t i = 0; i < n; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

void hex_to_bytes(const std::string& hex, uint8_t* out, size_t n) {
    if (hex.size() != n * 2) fail(Err::BadRequest, "hex string has wrong length");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    for (size_t i = 0; i < n; ++i) {
        int hi = nib(hex[2 * i]);
        int lo = nib(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) fail(Err::BadRequest, "invalid hex digit");
        out[i] = uint8_t(hi << 4 | lo);
    }
}

SharedKey SharedKey::from_hex(const std::string& hex) {
    SharedKey k;
    hex_to_bytes(hex, k.bytes.data(), k.bytes.size());
    return k;
}

std::string SharedKey::to_hex() const { return bytes_to_hex(bytes.data(), bytes.size()); }

Keystream derive_keystream(const SharedKey& key, int direction, uint64_t ctr) {
    uint8_t in[kBlocks * 16];
    std::memset(in, 0, sizeof(in));
    for (int j = 0; j < kBlocks; ++j) {
        uint8_t* blk = in + j * 16;
        blk[0] = uint8_t(direction & 1);
        for (int i = 0; i < 8; ++i) blk[1 + i] = uint8_t(ctr >> (56 - 8 * i));
        blk[15] = uint8_t(j);
    }

    uint8_t out[kBlocks * 16];
    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    if (!ctx) fail(Err::IoError, "EVP_CIPHER_CTX_new failed");
    int outl = 0;
    int ok = EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), nullptr, key.bytes.data(), nullptr) &&
             EVP_CIPHER_CTX_set_padding(ctx, 0) &&
             EVP_EncryptUpdate(ctx, out, &outl, in, sizeof(in));
    EVP_CIPHER_CTX_free(ctx);
    if (!ok || outl != int(sizeof(in))) fail(Err::IoError, "AES keystream derivation failed");

    Keystream ks;
    ks.t = FieldElement(load_be128(out));
    ks.s = Vector2{FieldElement(load_be128(out + 16)), FieldElement(load_be128(out + 32))};
    ks.k1 = load_be64(out + 48);
    ks.k2 = FieldElement(load_be128(out + 64));
    ks.padbit0 = out[80] & 1;
    ks.padbit1 = (out[80] >> 1) & 1;
    return ks;
}

KeyPair generate_keypair() {
    EVP_PKEY* pkey = nullptr;
    EVP_PKEY_CTX* ctx = EVP_PKEY_CTX_new_id(EVP_PKEY_X25519, nullptr);
    if (!ctx || EVP_PKEY_keygen_init(ctx) <= 0 || EVP_PKEY_keygen(ctx, &pkey) <= 0) {
        if (ctx) EVP_PKEY_CTX_free(ctx);
        fail(Err::KeyAgreementFailure, "X25519 keygen failed");
    }
    EVP_PKEY_CTX_free(ctx);

    KeyPair kp;
    size_t len = 32;
    if (EVP_PKEY_get_raw_private_key(pkey, kp.priv.data(), &len) <= 0 || len != 32 ||
        (len = 32, EVP_PKEY_get_raw_public_key(pkey, kp.pub.data(), &len) <= 0) || len != 32) {
        EVP_PKEY_free(pkey);
        fail(Err::KeyAgreementFailure, "X25519 key export failed");
    }
    EVP_PKEY_free(pkey);
    return kp;
}

SharedKey key_agree(const std::array<uint8_t, 32>& own_private,
                    const std::array<uint8_t, 32>& peer_public) {
    EVP_PKEY* priv =
        EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, own_private.data(), 32);
    EVP_PKEY* pub = EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer_public.data(), 32);
    EVP_PKEY_CTX* ctx = priv ? EVP_PKEY_CTX_new(priv, nullptr) : nullptr;

    uint8_t secret[32];
    size_t secret_len = sizeof(secret);
    bool ok = priv && pub && ctx && EVP_PKEY_derive_init(ctx) > 0 &&
              EVP_PKEY_derive_set_peer(ctx, pub) > 0 &&
              EVP_PKEY_derive(ctx, secret, &secret_len) > 0 && secret_len == 32;

    if (ctx) EVP_PKEY_CTX_free(ctx);
    if (priv) EVP_PKEY_free(priv);
    if (pub) EVP_PKEY_free(pub);
    if (!ok) fail(Err::KeyAgreementFailure, "X25519 derive failed (malformed public value?)");

    uint8_t digest[SHA256_DIGEST_LENGTH];
    SHA256(secret, sizeof(secret), digest);
    SharedKey key;
    std::memcpy(key.bytes.data(), digest, key.bytes.size());
    return key;
}

} // namespace waypost
