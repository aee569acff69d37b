#include <httplib.h>

#include "posetlab/client.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "posetlab/rng.hpp"

namespace posetlab {

using json = nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

} // namespace

void request_interrupt() { g_interrupted.store(true); }
bool interrupted() { return g_interrupted.load(); }
void clear_interrupt() { g_interrupted.store(false); }

void EndpointConfig::validate() const {
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (timeout_seconds <= 0) throw ConfigError("timeout must be positive");
    if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

ResponseCache::ResponseCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            index_[j.at("key").get<std::string>()] = j.at("response").get<std::string>();
        } catch (const std::exception&) {
            // A torn trailing line from a crashed run is ignored; the entry
            // will be re-fetched and re-appended.
        }
    }
}

std::string ResponseCache::make_key(const std::string& model_name, const std::string& prompt_text) {
    return sha256_hex(model_name + "\x1f" + prompt_text);
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put(const CacheEntry& entry) {
    std::lock_guard<std::mutex> lock(mu_);
    if (index_.count(entry.key)) return;
    index_[entry.key] = entry.response;
    json j;
    j["key"] = entry.key;
    j["response"] = entry.response;
    j["timestamp"] = entry.timestamp.empty() ? utc_timestamp() : entry.timestamp;
    if (entry.prompt_tokens >= 0) j["prompt_tokens"] = entry.prompt_tokens;
    if (entry.completion_tokens >= 0) j["completion_tokens"] = entry.completion_tokens;
    std::ofstream out(path_, std::ios::app);
    out << j.dump() << "\n";
    out.flush();
}

size_t ResponseCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return index_.size();
}

std::string mock_complete(const Prompt& prompt, double error_rate, uint64_t seed) {
    if (error_rate < 0.0 || error_rate > 1.0)
        throw std::invalid_argument("mock_complete: error_rate must be in [0,1]");
    std::mt19937_64 rng = make_rng(seed);
    std::bernoulli_distribution flip(error_rate);
    const char rel = relation_symbol(prompt.kind);
    std::ostringstream os;
    for (const EvalPoint& t : prompt.tasks) {
        bool answer = t.truth;
        if (error_rate > 0.0 && flip(rng)) answer = !answer;
        os << t.a << ' ' << rel << ' ' << t.b << " : " << (answer ? "true" : "false") << "\n";
    }
    return os.str();
}

std::string MockClient::complete(const Prompt& prompt, const std::string&) {
    ++requests_;
    return mock_complete(prompt, error_rate_, derive_seed(seed_, std::hash<std::string>{}(prompt.id)));
}

HttpClient::HttpClient(EndpointConfig cfg, ResponseCache* cache)
    : cfg_(std::move(cfg)), cache_(cache) {
    cfg_.validate();
    if (!cfg_.api_key_env.empty()) {
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (key) api_key_ = key;
    }
}

std::string HttpClient::complete(const Prompt&, const std::string& rendered) {
    return complete_text(rendered);
}

std::string HttpClient::complete_text(const std::string& prompt_text) {
    if (cfg_.context_char_budget > 0 &&
        static_cast<long>(prompt_text.size()) > cfg_.context_char_budget) {
        throw ContextLengthError("prompt exceeds context budget (" +
                                 std::to_string(prompt_text.size()) + " > " +
                                 std::to_string(cfg_.context_char_budget) + " chars)");
    }

    const std::string key = ResponseCache::make_key(cfg_.model_name, prompt_text);
    if (cache_) {
        if (auto hit = cache_->get(key)) return *hit;
    }

    json body;
    body["model"] = cfg_.model_name;
    body["messages"] = json::array({{{"role", "user"}, {"content", prompt_text}}});
    body["temperature"] = cfg_.temperature;
    body["max_tokens"] = cfg_.max_output_tokens;
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
        if (attempt > 0) {
            const double delay = cfg_.backoff_base_seconds * static_cast<double>(1 << (attempt - 1));
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        httplib::Client http(cfg_.base_url);
        http.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_seconds));
        http.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_seconds));
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = http.Post("/v1/chat/completions", headers, payload, "application/json");
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            try {
                const json j = json::parse(res->body);
                std::string text;
                const json& choice = j.at("choices").at(0);
                if (choice.contains("message"))
                    text = choice.at("message").at("content").get<std::string>();
                else
                    text = choice.at("text").get<std::string>();
                ++requests_;
                if (cache_) {
                    CacheEntry entry;
                    entry.key = key;
                    entry.response = text;
                    if (j.contains("usage")) {
                        entry.prompt_tokens = j["usage"].value("prompt_tokens", -1);
                        entry.completion_tokens = j["usage"].value("completion_tokens", -1);
                    }
                    cache_->put(entry);
                }
                return text;
            } catch (const std::exception& e) {
                last_error = std::string("malformed completion payload: ") + e.what();
                continue;
            }
        }
        if (res->status >= 400 && res->status < 500) {
            if (res->body.find("context length") != std::string::npos ||
                res->body.find("context_length") != std::string::npos ||
                res->body.find("maximum context") != std::string::npos) {
                throw ContextLengthError("endpoint rejected prompt for length: " + res->body);
            }
            throw ConfigError("HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        last_error = "HTTP " + std::to_string(res->status);
    }
    throw TransportError("exhausted " + std::to_string(cfg_.max_attempts) + " attempts: " + last_error);
}

namespace {

struct SweepCell {
    size_t index;
    int k, c;
};

} // namespace

std::vector<RunRecord> run_sweep(const SweepOptions& opts, CompletionClient& client,
                                 const std::string& output_path) {
    if (opts.k_lo < 1 || opts.c_lo < 1 || opts.k_hi < opts.k_lo || opts.c_hi < opts.c_lo)
        throw std::invalid_argument("run_sweep: empty grid");

    std::unordered_map<std::string, RunRecord> existing;
    {
        std::ifstream in(output_path);
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            RunRecord r = run_record_from_json_line(line);
            existing.emplace(r.prompt_id, std::move(r));
        }
    }

    std::vector<SweepCell> todo;
    std::vector<std::string> cell_ids;
    size_t index = 0;
    for (int k = opts.k_lo; k <= opts.k_hi; ++k) {
        for (int c = opts.c_lo; c <= opts.c_hi; ++c) {
            std::ostringstream id;
            id << to_string(opts.kind) << "_k" << k << "_c" << c << "_s"
               << derive_seed(opts.seed, static_cast<uint64_t>(k), static_cast<uint64_t>(c));
            cell_ids.push_back(id.str());
            if (!existing.count(cell_ids.back())) todo.push_back({index, k, c});
            ++index;
        }
    }

    std::ofstream out(output_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open sweep output: " + output_path);

    const int count = opts.count > 0 ? opts.count : default_eval_count(opts.kind);

    std::mutex write_mu;
    std::map<size_t, RunRecord> done;
    size_t write_next = 0;
    std::vector<size_t> todo_indices;
    for (const SweepCell& cell : todo) todo_indices.push_back(cell.index);

    auto flush_ready = [&]() {
        // called with write_mu held
        while (!done.empty() && done.begin()->first == write_next) {
            out << run_record_to_json_line(done.begin()->second) << "\n";
            out.flush();
            done.erase(done.begin());
            // advance to the next pending cell index
            auto it = std::upper_bound(todo_indices.begin(), todo_indices.end(), write_next);
            write_next = it == todo_indices.end() ? static_cast<size_t>(-1) : *it;
        }
    };
    write_next = todo_indices.empty() ? static_cast<size_t>(-1) : todo_indices.front();

    auto process_cell = [&](const SweepCell& cell) {
        RunRecord record;
        record.prompt_id = cell_ids[cell.index];
        record.kind = opts.kind;
        record.k = cell.k;
        record.c = cell.c;
        try {
            const uint64_t cell_seed =
                derive_seed(opts.seed, static_cast<uint64_t>(cell.k), static_cast<uint64_t>(cell.c));
            Prompt prompt = make_prompt(opts.kind, cell.k, cell.c, count, cell_seed);
            const std::string rendered = render_prompt(prompt);
            const std::string response = client.complete(prompt, rendered);
            record = make_run_record(prompt, parse_response(response, prompt.kind, prompt.tasks));
        } catch (const std::exception& e) {
            record.error = e.what();
        }
        std::lock_guard<std::mutex> lock(write_mu);
        done.emplace(cell.index, std::move(record));
        flush_ready();
    };

    const int workers = std::max(1, std::min<int>(opts.max_in_flight, static_cast<int>(todo.size())));
    if (workers <= 1) {
        for (const SweepCell& cell : todo) {
            if (interrupted()) break;
            process_cell(cell);
        }
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                while (!interrupted()) {
                    const size_t i = next.fetch_add(1);
                    if (i >= todo.size()) return;
                    process_cell(todo[i]);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }
    out.flush();

    return load_run_records(output_path);
}

} // namespace posetlab
