#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "posetlab/client.hpp"
#include "posetlab/rng.hpp"

using namespace posetlab;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("posetlab_test_" + std::to_string(splitmix64(
                                       std::chrono::steady_clock::now().time_since_epoch().count())));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

double score_mock(PosetKind kind, int k, int c, int count, double error_rate, uint64_t seed) {
    const Prompt p = make_prompt(kind, k, c, count, seed);
    const std::string response = mock_complete(p, error_rate, derive_seed(seed, 1));
    const RunRecord r = make_run_record(p, parse_response(response, kind, p.tasks));
    return accuracy(r);
}

// Serves a canned chat-completions endpoint on a background thread.
struct TestServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> hits{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> peak_in_flight{0};

    explicit TestServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server.Post("/v1/chat/completions", [this, handler](const httplib::Request& req,
                                                            httplib::Response& res) {
            const int now = ++in_flight;
            int prev = peak_in_flight.load();
            while (now > prev && !peak_in_flight.compare_exchange_weak(prev, now)) {
            }
            ++hits;
            handler(req, res);
            --in_flight;
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this]() { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

void respond_with(httplib::Response& res, const std::string& text) {
    json body;
    body["choices"] = json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}});
    body["usage"] = {{"prompt_tokens", 12}, {"completion_tokens", 5}};
    res.set_content(body.dump(), "application/json");
}

} // namespace

TEST_CASE("mock model accuracy tracks the error rate") {
    CHECK(score_mock(PosetKind::LO, 20, 10, 50, 0.0, 3) == 1.0);
    CHECK(score_mock(PosetKind::LO, 20, 10, 50, 1.0, 3) == 0.0);

    long long correct = 0, total = 0;
    for (uint64_t s = 0; s < 200; ++s) {
        const Prompt p = make_prompt(PosetKind::LO, 30, 20, 50, s);
        const std::string response = mock_complete(p, 0.25, derive_seed(s, 2));
        const RunRecord r = make_run_record(p, parse_response(response, p.kind, p.tasks));
        correct += r.correct;
        total += r.total;
    }
    REQUIRE(total == 10000);
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    CHECK(acc == doctest::Approx(0.75).epsilon(0.0267)); // 0.75 +- 0.02 absolute
    CHECK(std::abs(acc - 0.75) <= 0.02);
}

TEST_CASE("response cache round-trips and survives reopening") {
    TempDir tmp;
    const std::string path = tmp.file("cache.jsonl");
    const std::string key = ResponseCache::make_key("model-x", "some prompt\nwith lines");
    {
        ResponseCache cache(path);
        CHECK_FALSE(cache.get(key).has_value());
        cache.put({key, "response bytes \xF0\x9F\x8C\x8D with unicode", "", 3, 4});
        REQUIRE(cache.get(key).has_value());
        CHECK(*cache.get(key) == "response bytes \xF0\x9F\x8C\x8D with unicode");
    }
    ResponseCache reopened(path);
    CHECK(reopened.size() == 1);
    REQUIRE(reopened.get(key).has_value());
    CHECK(*reopened.get(key) == "response bytes \xF0\x9F\x8C\x8D with unicode");

    CHECK(ResponseCache::make_key("model-x", "p") != ResponseCache::make_key("model-y", "p"));
    CHECK(ResponseCache::make_key("m", "p1") != ResponseCache::make_key("m", "p2"));
}

TEST_CASE("http client: happy path, caching, and request shape") {
    std::string seen_body, seen_auth;
    TestServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        seen_auth = req.get_header_value("Authorization");
        respond_with(res, "42 < 43 : true");
    });

    TempDir tmp;
    ResponseCache cache(tmp.file("cache.jsonl"));
    EndpointConfig cfg;
    cfg.base_url = server.url();
    cfg.model_name = "test-model";
    cfg.api_key_env = "POSETLAB_TEST_KEY";
    setenv("POSETLAB_TEST_KEY", "sk-fake", 1);
    HttpClient client(cfg, &cache);

    const std::string out = client.complete_text("is 42 < 43?");
    CHECK(out == "42 < 43 : true");
    CHECK(server.hits == 1);
    CHECK(seen_auth == "Bearer sk-fake");
    const json body = json::parse(seen_body);
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "is 42 < 43?");

    // Cache hit: identical bytes, no network traffic.
    CHECK(client.complete_text("is 42 < 43?") == out);
    CHECK(server.hits == 1);
    CHECK(client.completions_requested() == 1);

    // A fresh client over the same cache file also short-circuits.
    HttpClient client2(cfg, &cache);
    CHECK(client2.complete_text("is 42 < 43?") == out);
    CHECK(server.hits == 1);
}

TEST_CASE("http client error handling") {
    EndpointConfig cfg;
    cfg.model_name = "m";
    cfg.max_attempts = 3;
    cfg.backoff_base_seconds = 0.01;
    cfg.timeout_seconds = 2.0;

    SUBCASE("4xx is a configuration error and is not retried") {
        TestServer server([&](const httplib::Request&, httplib::Response& res) {
            res.status = 404;
            res.set_content("no such model", "text/plain");
        });
        cfg.base_url = server.url();
        HttpClient client(cfg);
        CHECK_THROWS_AS(client.complete_text("hello"), ConfigError);
        CHECK(server.hits == 1);
    }

    SUBCASE("5xx retries then succeeds") {
        std::atomic<int> failures{2};
        TestServer server([&](const httplib::Request&, httplib::Response& res) {
            if (failures-- > 0) {
                res.status = 503;
                res.set_content("overloaded", "text/plain");
            } else {
                respond_with(res, "ok");
            }
        });
        cfg.base_url = server.url();
        HttpClient client(cfg);
        CHECK(client.complete_text("hello") == "ok");
        CHECK(server.hits == 3);
    }

    SUBCASE("persistent 5xx exhausts the retry budget") {
        TestServer server([&](const httplib::Request&, httplib::Response& res) {
            res.status = 500;
            res.set_content("boom", "text/plain");
        });
        cfg.base_url = server.url();
        HttpClient client(cfg);
        CHECK_THROWS_AS(client.complete_text("hello"), TransportError);
        CHECK(server.hits == cfg.max_attempts);
    }

    SUBCASE("unreachable endpoint raises a transport error") {
        cfg.base_url = "http://127.0.0.1:1";
        cfg.max_attempts = 2;
        HttpClient client(cfg);
        CHECK_THROWS_AS(client.complete_text("hello"), TransportError);
    }

    SUBCASE("context-length rejections are surfaced distinctly") {
        TestServer server([&](const httplib::Request&, httplib::Response& res) {
            res.status = 400;
            res.set_content("{\"error\": \"maximum context length exceeded\"}", "application/json");
        });
        cfg.base_url = server.url();
        HttpClient client(cfg);
        CHECK_THROWS_AS(client.complete_text("hello"), ContextLengthError);

        // The client-side budget rejects before any network call.
        cfg.context_char_budget = 8;
        HttpClient guarded(cfg);
        const int before = server.hits;
        CHECK_THROWS_AS(guarded.complete_text("definitely more than eight chars"),
                        ContextLengthError);
        CHECK(server.hits == before);
    }
}

TEST_CASE("mock sweep: grid, determinism, and resume accounting") {
    TempDir tmp;
    SweepOptions opts;
    opts.kind = PosetKind::LO;
    opts.k_hi = 5;
    opts.c_hi = 5;
    opts.count = 10;
    opts.seed = 9;
    opts.max_in_flight = 4;

    const std::string out1 = tmp.file("sweep1.jsonl");
    MockClient client1(0.0, opts.seed);
    const auto records = run_sweep(opts, client1, out1);
    REQUIRE(records.size() == 25);
    CHECK(client1.completions_requested() == 25);
    for (const auto& r : records) {
        CHECK(r.error.empty());
        CHECK(accuracy(r) == 1.0);
    }

    // Deterministic bytes for a fixed seed, including record order.
    const std::string out2 = tmp.file("sweep2.jsonl");
    MockClient client2(0.0, opts.seed);
    run_sweep(opts, client2, out2);
    std::ifstream f1(out1), f2(out2);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());

    // Deleting three records and re-running requests exactly three completions.
    std::vector<std::string> lines;
    {
        std::istringstream in(s1.str());
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
    }
    REQUIRE(lines.size() == 25);
    std::ofstream trimmed(out1, std::ios::trunc);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i == 3 || i == 11 || i == 24) continue;
        trimmed << lines[i] << "\n";
    }
    trimmed.close();
    MockClient client3(0.0, opts.seed);
    const auto resumed = run_sweep(opts, client3, out1);
    CHECK(resumed.size() == 25);
    CHECK(client3.completions_requested() == 3);
}

TEST_CASE("sweep records cell failures and keeps going") {
    struct FailingClient : CompletionClient {
        std::string complete(const Prompt& prompt, const std::string& rendered) override {
            ++requests_;
            if (prompt.k == 2) throw TransportError("synthetic outage");
            return mock_complete(prompt, 0.0, 1);
        }
    };
    TempDir tmp;
    SweepOptions opts;
    opts.kind = PosetKind::DIV;
    opts.k_hi = 3;
    opts.c_hi = 2;
    opts.count = 5;
    opts.max_in_flight = 1;
    FailingClient client;
    const auto records = run_sweep(opts, client, tmp.file("sweep.jsonl"));
    REQUIRE(records.size() == 6);
    int failed = 0;
    for (const auto& r : records) {
        if (!r.error.empty()) {
            ++failed;
            CHECK(r.k == 2);
            CHECK(r.error.find("synthetic outage") != std::string::npos);
        }
    }
    CHECK(failed == 2);
}

TEST_CASE("sweeps never exceed the in-flight budget") {
    TestServer server([&](const httplib::Request& req, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(25));
        const json body = json::parse(req.body);
        // Echo well-formed answers so parsing succeeds downstream.
        respond_with(res, "1 < 2 : true");
    });
    TempDir tmp;
    EndpointConfig cfg;
    cfg.base_url = server.url();
    cfg.model_name = "m";
    cfg.max_in_flight = 3;
    HttpClient client(cfg);
    SweepOptions opts;
    opts.kind = PosetKind::LO;
    opts.k_hi = 4;
    opts.c_hi = 3;
    opts.count = 3;
    opts.max_in_flight = cfg.max_in_flight;
    run_sweep(opts, client, tmp.file("sweep.jsonl"));
    CHECK(server.hits == 12);
    CHECK(server.peak_in_flight.load() <= 3);
}
