#include "waypost/field.hpp"

namespace waypost {

namespace {

// Reduce a value < 2^128 into [0, P).
inline u128 fold(u128 x) {
    x = (x >> 127) + (x & FieldElement::P);
    if (x >= FieldElement::P) x -= FieldElement::P;
    return x;
}

inline int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

} // namespace

FieldElement FieldElement::from_hex(const std::string& hex) {
    if (hex.size() != 32) fail(Err::BadRequest, "field element must be 32 hex chars");
    u128 v = 0;
    for (char c : hex) {
        int d = hex_digit(c);
        if (d < 0) fail(Err::BadRequest, "field element: invalid hex digit");
        v = (v << 4) | u128(d);
    }
    if (v >= P) fail(Err::BadRequest, "field element: non-canonical value");
    FieldElement f;
    f.v_ = v;
    return f;
}

std::string FieldElement::to_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(32, '0');
    u128 v = v_;
    for (int i = 31; i >= 0; --i) {
        out[size_t(i)] = digits[size_t(v & 0xf)];
        v >>= 4;
    }
    return out;
}

FieldElement field_add(FieldElement a, FieldElement b) {
    u128 s = a.raw() + b.raw(); // both < 2^127, no overflow
    if (s >= FieldElement::P) s -= FieldElement::P;
    return FieldElement(s);
}

FieldElement field_sub(FieldElement a, FieldElement b) {
    u128 s = a.raw() + FieldElement::P - b.raw();
    if (s >= FieldElement::P) s -= FieldElement::P;
    return FieldElement(s);
}

FieldElement field_neg(FieldElement a) {
    return a.is_zero() ? a : FieldElement(FieldElement::P - a.raw());
}

FieldElement field_mul(FieldElement a, FieldElement b) {
    const uint64_t a0 = uint64_t(a.raw());
    const uint64_t a1 = uint64_t(a.raw() >> 64);
    const uint64_t b0 = uint64_t(b.raw());
    const uint64_t b1 = uint64_t(b.raw() >> 64);

    const u128 p00 = u128(a0) * b0;
    const u128 mid = u128(a0) * b1 + u128(a1) * b0; // each term < 2^127, sum fits
    const u128 p11 = u128(a1) * b1;

    u128 lo = p00 + (mid << 64);
    const u128 carry = lo < p00 ? 1 : 0;
    const u128 hi = p11 + (mid >> 64) + carry;

    // value = hi*2^128 + lo = 2^127*(2*hi + (lo >> 127)) + (lo & P)
    const u128 t = (hi << 1) | (lo >> 127);
    return FieldElement(fold(t + (lo & FieldElement::P)));
}

FieldElement field_inv(FieldElement a) {
    if (a.is_zero()) fail(Err::DivisionByZero, "field_inv(0)");
    // a^(p-2) mod p
    u128 e = FieldElement::P - 2;
    FieldElement result(1);
    FieldElement base = a;
    while (e != 0) {
        if (e & 1) result = field_mul(result, base);
        base = field_mul(base, base);
        e >>= 1;
    }
    return result;
}

RotationMatrix sample_rotation(FieldElement t) {
    const FieldElement t2 = field_mul(t, t);
    const FieldElement one(1);
    const FieldElement denom_inv = field_inv(field_add(one, t2));
    RotationMatrix r;
    r.c = field_mul(field_sub(one, t2), denom_inv);
    r.d = field_mul(field_add(t, t), denom_inv);
    return r;
}

Vector2 rotate(const RotationMatrix& r, const Vector2& v) {
    return Vector2{field_sub(field_mul(r.c, v.x0), field_mul(r.d, v.x1)),
                   field_add(field_mul(r.d, v.x0), field_mul(r.c, v.x1))};
}

Vector2 scale(FieldElement k, const Vector2& v) {
    return Vector2{field_mul(k, v.x0), field_mul(k, v.x1)};
}

Vector2 vec_add(const Vector2& a, const Vector2& b) {
    return Vector2{field_add(a.x0, b.x0), field_add(a.x1, b.x1)};
}

FieldElement inner_product(const Vector2& a, const Vector2& b) {
    return field_add(field_mul(a.x0, b.x0), field_mul(a.x1, b.x1));
}

} // namespace waypost
