#pragma once

#include <stdexcept>
#include <string>

namespace waypost {

// Error taxonomy shared by the protocol engine, the relay and the CLI.
// Wire-level errors map onto the short codes in err_code().
enum class Err {
    DivisionByZero,
    KeyAgreementFailure,
    InvalidCoordinate,
    SentinelNotMappable,
    ConfigError,
    StaleCounter,
    DecodeError,
    DuplicateUser,
    UnknownUser,
    InvalidPeer,
    NoSuchEdge,
    NonMonotonicCounter,
    UnknownCounter,
    AlreadyConsumed,
    AuthFailure,
    BadRequest,
    IoError,
};

class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Err code() const { return code_; }

private:
    Err code_;
};

// Short code used in wire responses: {"ok":false,"err":"<code>"}.
inline const char* err_code(Err e) {
    switch (e) {
    case Err::DuplicateUser: return "DUP_USER";
    case Err::UnknownUser: return "NO_EDGE";
    case Err::InvalidPeer: return "NO_EDGE";
    case Err::NoSuchEdge: return "NO_EDGE";
    case Err::NonMonotonicCounter: return "BAD_CTR";
    case Err::UnknownCounter: return "UNKNOWN_CTR";
    case Err::AlreadyConsumed: return "CONSUMED";
    case Err::AuthFailure: return "AUTH";
    default: return "BAD_REQUEST";
    }
}

[[noreturn]] inline void fail(Err code, const std::string& what) { throw Error(code, what); }

} // namespace waypost
