#pragma once

#include <stdexcept>
#include <string>

namespace faithmate {

// Error categories line up with the contracts each module enforces.
enum class ErrorKind {
    parse,       // malformed input file / line
    validation,  // record violates a type invariant
    schema,      // on-disk schema version mismatch
    contract,    // precondition violated by the caller
    backend,     // backend refused or failed an operation
    numeric,     // non-finite loss, divergence
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline Error parse_error(const std::string& what) { return Error(ErrorKind::parse, what); }
inline Error validation_error(const std::string& what) { return Error(ErrorKind::validation, what); }
inline Error schema_error(const std::string& what) { return Error(ErrorKind::schema, what); }
inline Error contract_error(const std::string& what) { return Error(ErrorKind::contract, what); }
inline Error backend_error(const std::string& what) { return Error(ErrorKind::backend, what); }
inline Error numeric_error(const std::string& what) { return Error(ErrorKind::numeric, what); }

} // namespace faithmate
