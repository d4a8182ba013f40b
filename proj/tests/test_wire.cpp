#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "faithmate/error.hpp"
#include "faithmate/toy_backend.hpp"
#include "faithmate/wire.hpp"

using namespace faithmate;

namespace {

std::shared_ptr<ToyBackend> small_toy(uint64_t seed = 5) {
    ToyConfig c;
    c.init_seed = seed;
    return std::make_shared<ToyBackend>(c);
}

} // namespace

TEST_CASE("request and response envelopes") {
    json req = make_wire_request("generate", 7, json{{"prompt", "x"}});
    CHECK(req.at("op") == "generate");
    CHECK(req.at("request_id") == 7);
    CHECK(req.at("protocol_version") == kWireProtocolVersion);

    json ok = make_wire_response(7, json{{"text", "y"}});
    CHECK(ok.at("ok") == true);
    CHECK(ok.at("payload").at("text") == "y");

    json err = make_wire_error(7, "boom");
    CHECK(err.at("ok") == false);
    CHECK(err.at("error") == "boom");
}

TEST_CASE("handled operations mirror the direct backend") {
    auto backend = small_toy();

    json fp = handle_wire_request(*backend,
                                  make_wire_request("fingerprint", 1, json::object()));
    REQUIRE(fp.at("ok") == true);
    CHECK(fp.at("payload").at("fingerprint") == backend->fingerprint());

    DecodingConfig d;
    d.greedy = true;
    d.max_new_tokens = 8;
    json gen = handle_wire_request(
        *backend, make_wire_request("generate", 2,
                                    json{{"prompt", "hello"},
                                         {"decoding", to_json(d)},
                                         {"seed", 0}}));
    REQUIRE(gen.at("ok") == true);
    CHECK(gen.at("payload").at("text") == backend->generate("hello", d, 0).text);

    json lp = handle_wire_request(
        *backend,
        make_wire_request("token_logprobs", 3, json{{"prompt", "ab"}, {"target", "cd"}}));
    REQUIRE(lp.at("ok") == true);
    auto direct = backend->token_logprobs("ab", "cd");
    auto via = lp.at("payload").at("logprobs").get<std::vector<double>>();
    REQUIRE(via.size() == direct.size());
    for (size_t i = 0; i < via.size(); ++i) CHECK(via[i] == doctest::Approx(direct[i]));

    json cs = handle_wire_request(
        *backend, make_wire_request("choice_scores", 4,
                                    json{{"prompt", "q\nAnswer: "},
                                         {"labels", std::vector<std::string>{"A", "B"}}}));
    REQUIRE(cs.at("ok") == true);
    CHECK(cs.at("payload").at("probs").size() == 2);
}

TEST_CASE("errors come back as error responses, not exceptions") {
    auto backend = small_toy();

    json unknown = handle_wire_request(*backend,
                                       make_wire_request("frobnicate", 5, json::object()));
    CHECK(unknown.at("ok") == false);

    json req = make_wire_request("fingerprint", 6, json::object());
    req["protocol_version"] = kWireProtocolVersion + 1;
    json newer = handle_wire_request(*backend, req);
    CHECK(newer.at("ok") == false);

    // empty target violates the backend contract
    json bad = handle_wire_request(
        *backend, make_wire_request("token_logprobs", 7, json{{"prompt", "x"}, {"target", ""}}));
    CHECK(bad.at("ok") == false);
}

TEST_CASE("server applies deltas in place and restores snapshots") {
    auto backend = small_toy();
    std::string before = backend->fingerprint();

    json snap = handle_wire_request(*backend, make_wire_request("snapshot", 1, json::object()));
    REQUIRE(snap.at("ok") == true);
    uint64_t token = snap.at("payload").at("token").get<uint64_t>();

    ParamDelta d;
    d.base_fingerprint = before;
    d.entries["l0.attn.wq"] = Matrix(16, 16, 0.01);
    json applied = handle_wire_request(
        *backend,
        make_wire_request("apply_delta", 2, json{{"delta", param_delta_to_json(d)}}));
    REQUIRE(applied.at("ok") == true);
    CHECK(backend->fingerprint() != before);

    json restored = handle_wire_request(*backend,
                                        make_wire_request("restore", 3, json{{"token", token}}));
    REQUIRE(restored.at("ok") == true);
    CHECK(backend->fingerprint() == before);
}

TEST_CASE("serve loop answers until exit") {
    auto backend = small_toy();
    std::stringstream in, out;
    in << make_wire_request("fingerprint", 1, json::object()).dump() << "\n";
    in << make_wire_request("capabilities", 2, json::object()).dump() << "\n";
    in << make_wire_request("exit", 3, json::object()).dump() << "\n";
    in << make_wire_request("fingerprint", 4, json::object()).dump() << "\n"; // after exit

    serve_backend(*backend, in, out);

    std::vector<json> lines;
    std::string line;
    while (std::getline(out, line))
        if (!line.empty()) lines.push_back(json::parse(line));
    REQUIRE(lines.size() == 3); // exit acknowledged, nothing served afterwards
    CHECK(lines[0].at("request_id") == 1);
    CHECK(lines[1].at("payload").at("capabilities").is_array());
    CHECK(lines[2].at("request_id") == 3);
}

TEST_CASE("param delta json round trip") {
    ParamDelta d;
    d.base_fingerprint = "toy:1234";
    Matrix m(2, 2);
    m.data = {1.5, -2.5, 0.0, 1e-9};
    d.entries["w"] = m;
    ParamDelta back = param_delta_from_json(param_delta_to_json(d));
    CHECK(back.base_fingerprint == d.base_fingerprint);
    REQUIRE(back.entries.count("w") == 1);
    const Matrix& bm = back.entries["w"];
    REQUIRE(bm.rows == 2);
    REQUIRE(bm.cols == 2);
    for (size_t i = 0; i < 4; ++i) CHECK(bm.data[i] == m.data[i]);
}

TEST_CASE("wire client talks to a spawned server") {
    // ctest runs from the build directory where the cli binary lives
    if (!std::filesystem::exists("faithmate")) {
        MESSAGE("cli binary not found in cwd; skipping subprocess test");
        return;
    }
    WireClientBackend client({"./faithmate", "serve", "--backend", "toy:random:5"});
    auto direct = small_toy(5);
    CHECK(client.fingerprint() == direct->fingerprint());

    DecodingConfig d;
    d.greedy = true;
    d.max_new_tokens = 8;
    CHECK(client.generate("hello there", d, 0).text == direct->generate("hello there", d, 0).text);

    auto lps = client.token_logprobs("ab", "cd");
    auto dlps = direct->token_logprobs("ab", "cd");
    REQUIRE(lps.size() == dlps.size());
    for (size_t i = 0; i < lps.size(); ++i) CHECK(lps[i] == doctest::Approx(dlps[i]));

    auto caps = client.capabilities();
    CHECK(caps.count(Capability::generate) == 1);
    CHECK(caps.count(Capability::apply_delta) == 0); // out-of-place updates unsupported

    ParamDelta delta;
    delta.base_fingerprint = client.fingerprint();
    CHECK_THROWS_AS(client.apply_delta(delta), Error);

    // transient in-place mutation round-trips through snapshot/restore
    std::string before = client.fingerprint();
    SnapshotToken token = client.snapshot();
    ParamDelta bump;
    bump.base_fingerprint = before;
    bump.entries["l0.attn.wq"] = Matrix(16, 16, 0.01);
    client.apply_delta_inplace(bump);
    CHECK(client.fingerprint() != before);
    client.restore(token);
    CHECK(client.fingerprint() == before);
}
