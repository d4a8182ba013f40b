#include "faithmate/wire.hpp"

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "faithmate/error.hpp"

namespace faithmate {

namespace {

const char* capability_name(Capability c) {
    switch (c) {
        case Capability::generate: return "generate";
        case Capability::choice_scores: return "choice_scores";
        case Capability::token_logprobs: return "token_logprobs";
        case Capability::apply_delta: return "apply_delta";
        case Capability::trainable: return "trainable";
    }
    return "unknown";
}

Capability capability_from_name(const std::string& name) {
    for (Capability c : {Capability::generate, Capability::choice_scores,
                         Capability::token_logprobs, Capability::apply_delta,
                         Capability::trainable}) {
        if (name == capability_name(c)) return c;
    }
    throw validation_error("unknown capability: " + name);
}

} // namespace

json make_wire_request(const std::string& op, uint64_t request_id, json payload) {
    return json{{"op", op},
                {"request_id", request_id},
                {"protocol_version", kWireProtocolVersion},
                {"payload", std::move(payload)}};
}

json make_wire_response(uint64_t request_id, json payload) {
    return json{{"request_id", request_id}, {"ok", true}, {"payload", std::move(payload)}};
}

json make_wire_error(uint64_t request_id, const std::string& message) {
    return json{{"request_id", request_id}, {"ok", false}, {"error", message}};
}

json param_delta_to_json(const ParamDelta& delta) {
    json entries = json::object();
    for (const auto& [name, m] : delta.entries)
        entries[name] = json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
    return json{{"base_fingerprint", delta.base_fingerprint}, {"entries", entries}};
}

ParamDelta param_delta_from_json(const json& j) {
    ParamDelta delta;
    delta.base_fingerprint = j.at("base_fingerprint").get<std::string>();
    for (const auto& [name, e] : j.at("entries").items()) {
        Matrix m(e.at("rows").get<size_t>(), e.at("cols").get<size_t>());
        auto data = e.at("data").get<std::vector<double>>();
        if (data.size() != m.size())
            throw parse_error("delta entry " + name + ": data length mismatch");
        m.data = std::move(data);
        delta.entries[name] = std::move(m);
    }
    return delta;
}

json handle_wire_request(Backend& backend, const json& request) {
    uint64_t id = request.value("request_id", 0ull);
    try {
        int version = request.at("protocol_version").get<int>();
        if (version > kWireProtocolVersion)
            throw schema_error("protocol version " + std::to_string(version) +
                               " is newer than supported " +
                               std::to_string(kWireProtocolVersion));
        std::string op = request.at("op").get<std::string>();
        const json payload = request.value("payload", json::object());

        if (op == "fingerprint") {
            return make_wire_response(id, json{{"fingerprint", backend.fingerprint()}});
        }
        if (op == "capabilities") {
            json caps = json::array();
            for (Capability c : backend.capabilities()) caps.push_back(capability_name(c));
            return make_wire_response(id, json{{"capabilities", caps}});
        }
        if (op == "generate") {
            DecodingConfig d = decoding_from_json(payload.at("decoding"));
            auto r = backend.generate(payload.at("prompt").get<std::string>(), d,
                                      payload.at("seed").get<uint64_t>());
            return make_wire_response(id, json{{"text", r.text}});
        }
        if (op == "choice_scores") {
            auto dist = backend.choice_scores(payload.at("prompt").get<std::string>(),
                                              payload.at("labels").get<std::vector<std::string>>());
            return make_wire_response(id, json{{"probs", dist.probs}});
        }
        if (op == "token_logprobs") {
            auto lps = backend.token_logprobs(payload.at("prompt").get<std::string>(),
                                              payload.at("target").get<std::string>());
            return make_wire_response(id, json{{"logprobs", lps}});
        }
        if (op == "apply_delta") {
            backend.apply_delta_inplace(param_delta_from_json(payload.at("delta")));
            return make_wire_response(id, json::object());
        }
        if (op == "snapshot") {
            return make_wire_response(id, json{{"token", backend.snapshot()}});
        }
        if (op == "restore") {
            backend.restore(payload.at("token").get<SnapshotToken>());
            return make_wire_response(id, json::object());
        }
        if (op == "exit") {
            return make_wire_response(id, json::object());
        }
        throw validation_error("unknown op: " + op);
    } catch (const std::exception& e) {
        return make_wire_error(id, e.what());
    }
}

void serve_backend(Backend& backend, std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json request;
        try {
            request = json::parse(line);
        } catch (const json::parse_error& e) {
            out << make_wire_error(0, std::string("bad request: ") + e.what()).dump() << "\n";
            out.flush();
            continue;
        }
        json response = handle_wire_request(backend, request);
        out << response.dump() << "\n";
        out.flush();
        if (request.value("op", "") == "exit") break;
    }
}

struct WireClientBackend::Impl {
    pid_t pid = -1;
    int to_child = -1;   // write end
    int from_child = -1; // read end
    std::string read_buf;
    uint64_t next_id = 1;

    void write_line(const std::string& line) {
        std::string msg = line + "\n";
        size_t off = 0;
        while (off < msg.size()) {
            ssize_t n = ::write(to_child, msg.data() + off, msg.size() - off);
            if (n < 0) throw backend_error("wire: write to subprocess failed");
            off += static_cast<size_t>(n);
        }
    }

    std::string read_line() {
        for (;;) {
            auto pos = read_buf.find('\n');
            if (pos != std::string::npos) {
                std::string line = read_buf.substr(0, pos);
                read_buf.erase(0, pos + 1);
                return line;
            }
            char chunk[4096];
            ssize_t n = ::read(from_child, chunk, sizeof(chunk));
            if (n <= 0) throw backend_error("wire: subprocess closed the connection");
            read_buf.append(chunk, static_cast<size_t>(n));
        }
    }

    void shutdown() {
        if (to_child >= 0) {
            try {
                write_line(make_wire_request("exit", next_id++, json::object()).dump());
            } catch (...) {
            }
            ::close(to_child);
            to_child = -1;
        }
        if (from_child >= 0) {
            ::close(from_child);
            from_child = -1;
        }
        if (pid > 0) {
            int status = 0;
            ::waitpid(pid, &status, 0);
            pid = -1;
        }
    }
};

WireClientBackend::WireClientBackend(const std::vector<std::string>& argv)
    : impl_(std::make_unique<Impl>()) {
    if (argv.empty()) throw contract_error("wire backend: empty argv");
    int in_pipe[2];  // parent -> child
    int out_pipe[2]; // child -> parent
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
        throw backend_error("wire: pipe() failed");
    pid_t pid = ::fork();
    if (pid < 0) throw backend_error("wire: fork() failed");
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    impl_->pid = pid;
    impl_->to_child = in_pipe[1];
    impl_->from_child = out_pipe[0];
}

WireClientBackend::~WireClientBackend() {
    if (impl_) impl_->shutdown();
}

json WireClientBackend::call(const std::string& op, json payload) const {
    uint64_t id = impl_->next_id++;
    impl_->write_line(make_wire_request(op, id, std::move(payload)).dump());
    json response = json::parse(impl_->read_line());
    if (response.value("request_id", 0ull) != id)
        throw backend_error("wire: response id mismatch for op " + op);
    if (!response.value("ok", false))
        throw backend_error("wire: " + response.value("error", std::string("unknown error")));
    return response.value("payload", json::object());
}

std::string WireClientBackend::fingerprint() const {
    return call("fingerprint", json::object()).at("fingerprint").get<std::string>();
}

std::set<Capability> WireClientBackend::capabilities() const {
    std::set<Capability> caps;
    for (const auto& name :
         call("capabilities", json::object()).at("capabilities").get<std::vector<std::string>>())
        caps.insert(capability_from_name(name));
    // out-of-place application is not representable over a single-model session
    caps.erase(Capability::apply_delta);
    caps.erase(Capability::trainable);
    return caps;
}

GenerateResult WireClientBackend::generate(const std::string& prompt,
                                           const DecodingConfig& decoding, uint64_t seed) {
    json payload{{"prompt", prompt}, {"decoding", to_json(decoding)}, {"seed", seed}};
    return GenerateResult{call("generate", std::move(payload)).at("text").get<std::string>()};
}

ChoiceDistribution WireClientBackend::choice_scores(const std::string& prompt,
                                                    const std::vector<std::string>& labels) {
    json payload{{"prompt", prompt}, {"labels", labels}};
    ChoiceDistribution dist;
    dist.probs = call("choice_scores", std::move(payload))
                     .at("probs")
                     .get<std::map<std::string, double>>();
    dist.validate();
    return dist;
}

std::vector<double> WireClientBackend::token_logprobs(const std::string& prompt,
                                                      const std::string& target) {
    json payload{{"prompt", prompt}, {"target", target}};
    return call("token_logprobs", std::move(payload)).at("logprobs").get<std::vector<double>>();
}

std::shared_ptr<Backend> WireClientBackend::apply_delta(const ParamDelta&) {
    throw backend_error(
        "wire backend holds one remote model; use snapshot/apply_delta_inplace/restore");
}

SnapshotToken WireClientBackend::snapshot() {
    return call("snapshot", json::object()).at("token").get<SnapshotToken>();
}

void WireClientBackend::restore(SnapshotToken token) {
    call("restore", json{{"token", token}});
}

void WireClientBackend::apply_delta_inplace(const ParamDelta& delta) {
    call("apply_delta", json{{"delta", param_delta_to_json(delta)}});
}

} // namespace faithmate
