#pragma once

#include <cstdint>
#include <string>

#include "waypost/errors.hpp"

namespace waypost {

using u128 = unsigned __int128;

// Arithmetic modulo the Mersenne prime p = 2^127 - 1. Every blinded value the
// relay ever sees lives in this field, so equality tests are exact and the
// masked-payload decode never suffers rounding.
class FieldElement {
public:
    static constexpr u128 P = (u128(1) << 127) - 1;

    constexpr FieldElement() : v_(0) {}
    explicit constexpr FieldElement(u128 v) : v_(v % P) {}

    static FieldElement from_u64(uint64_t v) { return FieldElement(u128(v)); }

    // Wire form: exactly 32 lowercase hex chars, big-endian, zero-padded.
    // Rejects non-canonical encodings (value >= p).
    static FieldElement from_hex(const std::string& hex);
    std::string to_hex() const;

    u128 raw() const { return v_; }
    uint64_t lo64() const { return uint64_t(v_); }
    bool is_zero() const { return v_ == 0; }

    friend bool operator==(const FieldElement& a, const FieldElement& b) { return a.v_ == b.v_; }
    friend bool operator!=(const FieldElement& a, const FieldElement& b) { return a.v_ != b.v_; }

private:
    u128 v_; // canonical representative, always < P
};

FieldElement field_add(FieldElement a, FieldElement b);
FieldElement field_sub(FieldElement a, FieldElement b);
FieldElement field_mul(FieldElement a, FieldElement b);
FieldElement field_neg(FieldElement a);
// Multiplicative inverse via Fermat exponentiation. Throws DivisionByZero on 0.
FieldElement field_inv(FieldElement a);

struct Vector2 {
    FieldElement x0;
    FieldElement x1;

    friend bool operator==(const Vector2& a, const Vector2& b) {
        return a.x0 == b.x0 && a.x1 == b.x1;
    }
};

// Orthogonal matrix [[c, -d], [d, c]] with c^2 + d^2 = 1, so it preserves
// inner products exactly.
struct RotationMatrix {
    FieldElement c;
    FieldElement d;
};

// Rational circle parametrization c = (1 - t^2)/(1 + t^2), d = 2t/(1 + t^2).
// 1 + t^2 never vanishes: -1 is a non-residue mod p since p = 3 (mod 4).
RotationMatrix sample_rotation(FieldElement t);

Vector2 rotate(const RotationMatrix& r, const Vector2& v);
Vector2 scale(FieldElement k, const Vector2& v);
Vector2 vec_add(const Vector2& a, const Vector2& b);
FieldElement inner_product(const Vector2& a, const Vector2& b);

} // namespace waypost
