#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "faithmate/backend.hpp"

namespace faithmate {

// Newline-delimited JSON protocol for out-of-process model backends.
// Request:  {"op", "request_id", "protocol_version", "payload"}
// Response: {"request_id", "ok", "payload" | "error"}
// Ops mirror the backend surface: fingerprint, capabilities, generate,
// choice_scores, token_logprobs, apply_delta, snapshot, restore.

inline constexpr int kWireProtocolVersion = 1;

json make_wire_request(const std::string& op, uint64_t request_id, json payload);
json make_wire_response(uint64_t request_id, json payload);
json make_wire_error(uint64_t request_id, const std::string& message);

// Serves `backend` over an NDJSON stream until EOF or an "exit" op.
void serve_backend(Backend& backend, std::istream& in, std::ostream& out);

// Handles one decoded request against `backend`; returns the response object.
json handle_wire_request(Backend& backend, const json& request);

// Backend speaking the wire protocol to a spawned subprocess (argv form).
class WireClientBackend : public Backend {
public:
    explicit WireClientBackend(const std::vector<std::string>& argv);
    ~WireClientBackend() override;

    std::string fingerprint() const override;
    std::set<Capability> capabilities() const override;
    GenerateResult generate(const std::string& prompt, const DecodingConfig& decoding,
                            uint64_t seed) override;
    ChoiceDistribution choice_scores(const std::string& prompt,
                                     const std::vector<std::string>& labels) override;
    std::vector<double> token_logprobs(const std::string& prompt,
                                       const std::string& target) override;
    std::shared_ptr<Backend> apply_delta(const ParamDelta& delta) override;
    SnapshotToken snapshot() override;
    void restore(SnapshotToken token) override;
    void apply_delta_inplace(const ParamDelta& delta) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    json call(const std::string& op, json payload) const;
};

// JSON encodings shared by client and server.
json param_delta_to_json(const ParamDelta& delta);
ParamDelta param_delta_from_json(const json& j);

} // namespace faithmate
