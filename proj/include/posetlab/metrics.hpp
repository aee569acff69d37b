#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "posetlab/prompt.hpp"

namespace posetlab {

// Raised when a metric is requested over an empty or otherwise degenerate
// input (zero evaluation points, fewer than two ranked items, ...).
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Verdict { True, False, Unknown, Unparseable };

const char* to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

// One prompt's parsed verdicts joined with ground truth; the unit of all
// metric aggregation.
struct RunRecord {
    std::string prompt_id;
    PosetKind kind = PosetKind::LO;
    int k = 1;
    int c = 1;
    std::vector<Verdict> verdicts;
    std::vector<bool> truths;
    int correct = 0;
    int total = 0;
    int unknown_count = 0;
    int unparseable_count = 0;
    std::string error; // non-empty marks a failed sweep cell
};

RunRecord make_run_record(const Prompt& p, const std::vector<Verdict>& verdicts);

// Scans the response for one answer line per task; tasks are matched by their
// (a, b) pair anywhere in the text, first match wins. Total: off-format tasks
// come back Unparseable.
std::vector<Verdict> parse_response(const std::string& text, PosetKind kind,
                                    const std::vector<EvalPoint>& tasks);

double accuracy(const RunRecord& r);

enum class Axis { complexity, shots };
const char* to_string(Axis a);
Axis axis_from_string(const std::string& s);

struct McaPoint {
    int level = 0;
    long long correct = 0;
    long long total = 0;
    double value = 0.0;
};

// Micro-averaged cumulative accuracy: at level L, all evaluation points of all
// records whose axis parameter is <= L, pooled. Levels with zero total are
// omitted. limit <= 0 means "up to the largest level present".
std::vector<McaPoint> mean_cumulative_accuracy(const std::vector<RunRecord>& records, Axis axis,
                                               int limit = 0);

struct RankTable {
    std::vector<std::string> judges;
    std::vector<double> weights; // may be empty for the unweighted statistic
    std::vector<std::string> items;
    std::vector<std::vector<int>> ranks; // ranks[judge][item], each row a permutation of 1..n
};

double kendall_w(const RankTable& table, bool weighted);

RankTable rank_table_from_json(const std::string& text);
RankTable load_rank_table(const std::string& path);

std::string run_record_to_json_line(const RunRecord& r);
RunRecord run_record_from_json_line(const std::string& line);
std::vector<RunRecord> load_run_records(const std::string& path);

void write_mca_csv(const std::vector<McaPoint>& series, Axis axis, const std::string& path);
void write_score_csv(const std::vector<RunRecord>& records, const std::string& path);

} // namespace posetlab
