#include "posetlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

namespace posetlab {

using json = nlohmann::json;

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::True: return "true";
        case Verdict::False: return "false";
        case Verdict::Unknown: return "unknown";
        case Verdict::Unparseable: return "unparseable";
    }
    return "?";
}

Verdict verdict_from_string(const std::string& s) {
    if (s == "true") return Verdict::True;
    if (s == "false") return Verdict::False;
    if (s == "unknown") return Verdict::Unknown;
    if (s == "unparseable") return Verdict::Unparseable;
    throw std::invalid_argument("unknown verdict: " + s);
}

const char* to_string(Axis a) { return a == Axis::complexity ? "complexity" : "shots"; }

Axis axis_from_string(const std::string& s) {
    if (s == "complexity") return Axis::complexity;
    if (s == "shots") return Axis::shots;
    throw std::invalid_argument("unknown axis: " + s);
}

namespace {

// Answer-line shape: optional quotes, flexible spacing, optional colon,
// case-insensitive verdict, arbitrary trailing text.
const std::regex kAnswerLine(
    R"(^\s*["']?\s*([01]+|[0-9]+)\s*(<|\|)\s*([01]+|[0-9]+)\s*["']?\s*:?\s*["']?\s*(true|false|unknown)\b)",
    std::regex::icase);

std::string normalize_relation_glyphs(const std::string& text) {
    // U+2223 DIVIDES as it appears in published response transcripts.
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < text.size();) {
        if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
            static_cast<unsigned char>(text[i + 1]) == 0x88 &&
            static_cast<unsigned char>(text[i + 2]) == 0xA3) {
            out.push_back('|');
            i += 3;
        } else {
            out.push_back(text[i]);
            ++i;
        }
    }
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return s;
}

} // namespace

std::vector<Verdict> parse_response(const std::string& text, PosetKind kind,
                                    const std::vector<EvalPoint>& tasks) {
    if (tasks.empty()) throw std::invalid_argument("parse_response: tasks must be non-empty");
    const char rel = relation_symbol(kind);
    const std::string normalized = normalize_relation_glyphs(text);

    std::map<std::pair<std::string, std::string>, Verdict> found;
    std::istringstream in(normalized);
    std::string line;
    while (std::getline(in, line)) {
        std::smatch m;
        if (!std::regex_search(line, m, kAnswerLine)) continue;
        if (m[2].str()[0] != rel) continue;
        const std::pair<std::string, std::string> key(m[1].str(), m[3].str());
        if (found.count(key)) continue; // first match wins
        const std::string v = lower(m[4].str());
        found.emplace(key, v == "true" ? Verdict::True : v == "false" ? Verdict::False : Verdict::Unknown);
    }

    std::vector<Verdict> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks) {
        auto it = found.find({t.a, t.b});
        out.push_back(it == found.end() ? Verdict::Unparseable : it->second);
    }
    return out;
}

RunRecord make_run_record(const Prompt& p, const std::vector<Verdict>& verdicts) {
    if (verdicts.size() != p.tasks.size())
        throw std::invalid_argument("make_run_record: verdicts/tasks length mismatch");
    RunRecord r;
    r.prompt_id = p.id;
    r.kind = p.kind;
    r.k = p.k;
    r.c = p.c;
    r.verdicts = verdicts;
    r.total = static_cast<int>(p.tasks.size());
    for (size_t i = 0; i < p.tasks.size(); ++i) {
        const bool truth = p.tasks[i].truth;
        r.truths.push_back(truth);
        const Verdict v = verdicts[i];
        if ((v == Verdict::True && truth) || (v == Verdict::False && !truth)) ++r.correct;
        if (v == Verdict::Unknown) ++r.unknown_count;
        if (v == Verdict::Unparseable) ++r.unparseable_count;
    }
    return r;
}

double accuracy(const RunRecord& r) {
    if (r.total < 1) throw MetricError("accuracy undefined for a record with no evaluation points");
    return static_cast<double>(r.correct) / static_cast<double>(r.total);
}

std::vector<McaPoint> mean_cumulative_accuracy(const std::vector<RunRecord>& records, Axis axis,
                                               int limit) {
    if (records.empty()) throw MetricError("mean_cumulative_accuracy: no records");
    std::map<int, std::pair<long long, long long>> by_level;
    int max_level = 0;
    for (const RunRecord& r : records) {
        if (!r.error.empty()) continue;
        const int level = axis == Axis::complexity ? r.c : r.k;
        auto& [corr, tot] = by_level[level];
        corr += r.correct;
        tot += r.total;
        max_level = std::max(max_level, level);
    }
    if (limit <= 0) limit = max_level;

    std::vector<McaPoint> out;
    long long corr = 0, tot = 0;
    auto it = by_level.begin();
    for (int level = 1; level <= limit; ++level) {
        while (it != by_level.end() && it->first <= level) {
            corr += it->second.first;
            tot += it->second.second;
            ++it;
        }
        if (tot == 0) continue; // empty level: omitted from the series
        McaPoint pt;
        pt.level = level;
        pt.correct = corr;
        pt.total = tot;
        pt.value = static_cast<double>(corr) / static_cast<double>(tot);
        out.push_back(pt);
    }
    return out;
}

double kendall_w(const RankTable& table, bool weighted) {
    const size_t m = table.ranks.size();
    const size_t n = table.items.size();
    if (n < 2) throw MetricError("kendall_w undefined for fewer than two items");
    if (m < 1) throw MetricError("kendall_w requires at least one judge");

    for (const auto& row : table.ranks) {
        if (row.size() != n) throw std::invalid_argument("kendall_w: ragged rank matrix");
        std::vector<int> sorted(row);
        std::sort(sorted.begin(), sorted.end());
        for (size_t i = 0; i < n; ++i) {
            if (sorted[i] != static_cast<int>(i) + 1)
                throw std::invalid_argument("kendall_w: each row must be a permutation of 1..n (ties unsupported)");
        }
    }

    std::vector<double> weights(m, 1.0);
    if (weighted) {
        if (table.weights.size() != m)
            throw std::invalid_argument("kendall_w: weighted form needs one weight per judge");
        double sum = 0.0;
        for (double w : table.weights) {
            if (w < 0.0) throw std::invalid_argument("kendall_w: weights must be non-negative");
            sum += w;
        }
        if (sum <= 0.0) throw std::invalid_argument("kendall_w: weights sum to zero");
        for (size_t j = 0; j < m; ++j) weights[j] = table.weights[j] / sum;
    }

    std::vector<double> R(n, 0.0);
    for (size_t j = 0; j < m; ++j)
        for (size_t i = 0; i < n; ++i) R[i] += weights[j] * table.ranks[j][i];

    double rbar = 0.0;
    for (double r : R) rbar += r;
    rbar /= static_cast<double>(n);
    double num = 0.0;
    for (double r : R) num += (r - rbar) * (r - rbar);

    const double nn = static_cast<double>(n);
    const double denom = weighted ? nn * (nn * nn - 1.0) / 12.0
                                  : static_cast<double>(m) * static_cast<double>(m) *
                                        (nn * nn * nn - nn) / 12.0;
    return num / denom;
}

RankTable rank_table_from_json(const std::string& text) {
    const json j = json::parse(text);
    RankTable t;
    for (const auto& judge : j.at("judges")) {
        t.judges.push_back(judge.at("name").get<std::string>());
        if (judge.contains("weight")) t.weights.push_back(judge.at("weight").get<double>());
    }
    if (!t.weights.empty() && t.weights.size() != t.judges.size())
        throw std::invalid_argument("rank table: weights must be given for all judges or none");
    for (const auto& item : j.at("items")) t.items.push_back(item.get<std::string>());
    for (const auto& row : j.at("ranks")) t.ranks.push_back(row.get<std::vector<int>>());
    if (t.ranks.size() != t.judges.size())
        throw std::invalid_argument("rank table: one rank row per judge required");
    return t;
}

RankTable load_rank_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open rank table: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return rank_table_from_json(ss.str());
}

std::string run_record_to_json_line(const RunRecord& r) {
    json j;
    j["prompt_id"] = r.prompt_id;
    j["kind"] = to_string(r.kind);
    j["k"] = r.k;
    j["c"] = r.c;
    json vs = json::array();
    for (Verdict v : r.verdicts) vs.push_back(to_string(v));
    j["verdicts"] = vs;
    json ts = json::array();
    for (bool t : r.truths) ts.push_back(t);
    j["truths"] = ts;
    j["correct"] = r.correct;
    j["total"] = r.total;
    j["unknown"] = r.unknown_count;
    j["unparseable"] = r.unparseable_count;
    if (!r.error.empty()) j["error"] = r.error;
    return j.dump();
}

RunRecord run_record_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    RunRecord r;
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.kind = poset_kind_from_string(j.at("kind").get<std::string>());
    r.k = j.at("k").get<int>();
    r.c = j.at("c").get<int>();
    for (const auto& v : j.at("verdicts")) r.verdicts.push_back(verdict_from_string(v.get<std::string>()));
    for (const auto& t : j.at("truths")) r.truths.push_back(t.get<bool>());
    r.correct = j.at("correct").get<int>();
    r.total = j.at("total").get<int>();
    r.unknown_count = j.value("unknown", 0);
    r.unparseable_count = j.value("unparseable", 0);
    r.error = j.value("error", std::string());
    return r;
}

std::vector<RunRecord> load_run_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open run records: " + path);
    std::vector<RunRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(run_record_from_json_line(line));
    }
    return out;
}

void write_mca_csv(const std::vector<McaPoint>& series, Axis axis, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "axis,level,correct,total,value\n";
    char buf[64];
    for (const McaPoint& p : series) {
        std::snprintf(buf, sizeof buf, "%.17g", p.value);
        out << to_string(axis) << ',' << p.level << ',' << p.correct << ',' << p.total << ',' << buf
            << "\n";
    }
}

void write_score_csv(const std::vector<RunRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "prompt_id,kind,k,c,correct,total,accuracy,unknown,unparseable,error\n";
    char buf[64];
    for (const RunRecord& r : records) {
        const double acc = (r.total > 0 && r.error.empty()) ? accuracy(r) : 0.0;
        std::snprintf(buf, sizeof buf, "%.17g", acc);
        out << r.prompt_id << ',' << to_string(r.kind) << ',' << r.k << ',' << r.c << ','
            << r.correct << ',' << r.total << ',' << buf << ',' << r.unknown_count << ','
            << r.unparseable_count << ',' << r.error << "\n";
    }
}

} // namespace posetlab
