#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "posetlab/metrics.hpp"
#include "posetlab/prompt.hpp"

namespace posetlab {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// HTTP 4xx and other caller mistakes; never retried.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Prompt does not fit the model's context window; sweeps mark the cell as
// truncated rather than wrong.
struct ContextLengthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EndpointConfig {
    std::string base_url;
    std::string model_name;
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0.0;
    int max_output_tokens = 1024;
    double timeout_seconds = 60.0;
    int max_in_flight = 4;
    int max_attempts = 3;
    double backoff_base_seconds = 0.5;
    long context_char_budget = 16000; // client-side overflow guard

    void validate() const;
};

struct CacheEntry {
    std::string key;
    std::string response;
    std::string timestamp;
    long long prompt_tokens = -1;
    long long completion_tokens = -1;
};

// Append-only JSON Lines cache with an in-memory index. Writes are serialized
// through a single mutex; entries are immutable once written.
class ResponseCache {
  public:
    explicit ResponseCache(std::string path);

    static std::string make_key(const std::string& model_name, const std::string& prompt_text);

    std::optional<std::string> get(const std::string& key) const;
    void put(const CacheEntry& entry);
    size_t size() const;

  private:
    std::string path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::string> index_;
};

class CompletionClient {
  public:
    virtual ~CompletionClient() = default;
    virtual std::string complete(const Prompt& prompt, const std::string& rendered) = 0;
    // Number of backend completions actually produced (cache hits excluded).
    long long completions_requested() const { return requests_.load(); }

  protected:
    std::atomic<long long> requests_{0};
};

// Deterministic offline model: answers every task from ground truth, flipping
// each line independently with probability error_rate.
std::string mock_complete(const Prompt& prompt, double error_rate, uint64_t seed);

class MockClient : public CompletionClient {
  public:
    MockClient(double error_rate, uint64_t seed) : error_rate_(error_rate), seed_(seed) {}
    std::string complete(const Prompt& prompt, const std::string& rendered) override;

  private:
    double error_rate_;
    uint64_t seed_;
};

class HttpClient : public CompletionClient {
  public:
    explicit HttpClient(EndpointConfig cfg, ResponseCache* cache = nullptr);
    std::string complete(const Prompt& prompt, const std::string& rendered) override;
    std::string complete_text(const std::string& prompt_text);

  private:
    EndpointConfig cfg_;
    std::string api_key_;
    ResponseCache* cache_;
};

struct SweepOptions {
    PosetKind kind = PosetKind::LO;
    int k_lo = 1, k_hi = 1;
    int c_lo = 1, c_hi = 1;
    int count = 0; // 0 means the kind's default evaluation-set size
    uint64_t seed = 0;
    int max_in_flight = 4;
};

// Runs the (k, c) grid, appending one RunRecord JSON line per cell to
// output_path in grid order. Cells already present in the file are skipped;
// per-cell failures are recorded with an error marker and the sweep continues.
// Returns all records in the file (previous and new).
std::vector<RunRecord> run_sweep(const SweepOptions& opts, CompletionClient& client,
                                 const std::string& output_path);

// Cooperative Ctrl-C support: the CLI's signal handler sets the flag and the
// sweep finishes the in-flight cells, flushes, and stops.
void request_interrupt();
bool interrupted();
void clear_interrupt();

} // namespace posetlab
