#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "posetlab/metrics.hpp"
#include "posetlab/rng.hpp"

using namespace posetlab;

namespace {

std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(POSETLAB_FIXTURE_DIR) + "/" + name);
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<EvalPoint> points(std::initializer_list<std::tuple<const char*, const char*, bool>> xs) {
    std::vector<EvalPoint> out;
    for (const auto& [a, b, truth] : xs) out.push_back({a, b, truth});
    return out;
}

RunRecord synthetic_record(int k, int c, int correct, int total) {
    RunRecord r;
    r.prompt_id = "synthetic_k" + std::to_string(k) + "_c" + std::to_string(c);
    r.kind = PosetKind::LO;
    r.k = k;
    r.c = c;
    r.correct = correct;
    r.total = total;
    for (int i = 0; i < total; ++i) {
        r.truths.push_back(true);
        r.verdicts.push_back(i < correct ? Verdict::True : Verdict::False);
    }
    return r;
}

} // namespace

TEST_CASE("published response transcripts parse to the published verdicts") {
    const auto div_tasks = points({{"1", "5", true}, {"2", "6", true}, {"5", "6", false}});
    const auto gemma = parse_response(read_fixture("gemma2_div_response.txt"), PosetKind::DIV, div_tasks);
    CHECK(gemma == std::vector<Verdict>{Verdict::True, Verdict::True, Verdict::True});

    const auto lo_tasks = points(
        {{"121", "16", false}, {"22", "85", true}, {"73", "15", false}, {"122", "18", false}});
    const auto llama = parse_response(read_fixture("llama3_lo_response.txt"), PosetKind::LO, lo_tasks);
    CHECK(llama ==
          std::vector<Verdict>{Verdict::True, Verdict::True, Verdict::False, Verdict::False});

    const auto phi = parse_response(read_fixture("phi3_lo_response.txt"), PosetKind::LO, lo_tasks);
    CHECK(phi == std::vector<Verdict>(4, Verdict::Unparseable));

    const auto lobin_tasks = points({{"1010001", "111111", false},
                                     {"100010", "1000011", true},
                                     {"1001011", "110010", false}});
    const auto qwen =
        parse_response(read_fixture("qwen2math_lobin_response.txt"), PosetKind::LOBIN, lobin_tasks);
    CHECK(qwen == std::vector<Verdict>{Verdict::False, Verdict::False, Verdict::False});
}

TEST_CASE("parsing tolerates reordering, quotes and case; rejects the wrong relation") {
    const auto tasks = points({{"3", "9", true}, {"2", "9", false}});
    const auto out = parse_response("\"2 | 9\": FALSE\nnoise line\n  3|9 : True\n", PosetKind::DIV, tasks);
    CHECK(out == std::vector<Verdict>{Verdict::True, Verdict::False});

    // '<' lines must not satisfy a divisibility task.
    const auto wrong = parse_response("3 < 9 : true\n", PosetKind::DIV, tasks);
    CHECK(wrong == std::vector<Verdict>{Verdict::Unparseable, Verdict::Unparseable});

    const auto empty = parse_response("", PosetKind::DIV, tasks);
    CHECK(empty == std::vector<Verdict>{Verdict::Unparseable, Verdict::Unparseable});

    CHECK_THROWS_AS(parse_response("x", PosetKind::DIV, {}), std::invalid_argument);
}

TEST_CASE("parsing is insensitive to response line order") {
    const auto tasks = points({{"1", "21", true}, {"21", "2", false}, {"3", "21", true},
                               {"21", "4", false}, {"5", "21", true}});
    std::vector<std::string> lines{"1 < 21 : true", "21 < 2 : false", "3 < 21 : unknown",
                                   "21 < 4 : true", "5 < 21 : false"};
    const auto reference = parse_response("1 < 21 : true\n21 < 2 : false\n3 < 21 : unknown\n"
                                          "21 < 4 : true\n5 < 21 : false\n",
                                          PosetKind::LO, tasks);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(lines.begin(), lines.end(), rng);
        std::string text;
        for (const auto& l : lines) text += l + "\n";
        CHECK(parse_response(text, PosetKind::LO, tasks) == reference);
    }
}

TEST_CASE("first match wins over later duplicates") {
    const auto tasks = points({{"1", "9", true}});
    const auto out = parse_response("1 < 9 : false\n1 < 9 : true\n", PosetKind::LO, tasks);
    CHECK(out == std::vector<Verdict>{Verdict::False});
}

TEST_CASE("accuracy scores exact agreement only") {
    Prompt p;
    p.id = "t";
    p.kind = PosetKind::DIV;
    p.tasks = points({{"1", "5", true}, {"2", "6", true}, {"5", "6", false}});
    const RunRecord gemma =
        make_run_record(p, {Verdict::True, Verdict::True, Verdict::True});
    CHECK(accuracy(gemma) == doctest::Approx(2.0 / 3.0));
    CHECK(gemma.correct == 2);

    RunRecord all_unknown = make_run_record(p, {Verdict::Unknown, Verdict::Unknown, Verdict::Unknown});
    CHECK(accuracy(all_unknown) == 0.0);
    CHECK(all_unknown.unknown_count == 3);

    RunRecord empty;
    CHECK_THROWS_AS(accuracy(empty), MetricError);
}

TEST_CASE("adding a correct point never lowers accuracy; an incorrect one never raises it") {
    RunRecord r = synthetic_record(1, 1, 3, 5);
    const double base = accuracy(r);
    RunRecord more_correct = synthetic_record(1, 1, 4, 6);
    RunRecord more_wrong = synthetic_record(1, 1, 3, 6);
    CHECK(accuracy(more_correct) >= base);
    CHECK(accuracy(more_wrong) <= base);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
}

TEST_CASE("mean cumulative accuracy pools evaluation points micro-style") {
    {
        const std::vector<RunRecord> records{synthetic_record(1, 1, 3, 5)};
        const auto series = mean_cumulative_accuracy(records, Axis::complexity);
        REQUIRE(series.size() == 1);
        CHECK(series[0].level == 1);
        CHECK(series[0].value == doctest::Approx(0.6));
    }
    {
        const std::vector<RunRecord> records{synthetic_record(3, 1, 10, 10),
                                             synthetic_record(5, 2, 0, 10)};
        const auto series = mean_cumulative_accuracy(records, Axis::complexity);
        REQUIRE(series.size() == 2);
        CHECK(series[0].level == 1);
        CHECK(series[0].value == doctest::Approx(1.0));
        CHECK(series[1].level == 2);
        CHECK(series[1].value == doctest::Approx(0.5));
    }
}

TEST_CASE("mean cumulative accuracy is order-independent and ends at corpus accuracy") {
    std::mt19937_64 rng(11);
    std::vector<RunRecord> records;
    long long correct = 0, total = 0;
    for (int i = 0; i < 60; ++i) {
        const int k = static_cast<int>(rng() % 9) + 1;
        const int c = static_cast<int>(rng() % 9) + 1;
        const int tot = static_cast<int>(rng() % 40) + 1;
        const int corr = static_cast<int>(rng() % (static_cast<unsigned>(tot) + 1));
        records.push_back(synthetic_record(k, c, corr, tot));
        correct += corr;
        total += tot;
    }
    const auto series = mean_cumulative_accuracy(records, Axis::shots);
    std::vector<RunRecord> shuffled = records;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto series2 = mean_cumulative_accuracy(shuffled, Axis::shots);
    REQUIRE(series.size() == series2.size());
    for (size_t i = 0; i < series.size(); ++i) {
        CHECK(series[i].level == series2[i].level);
        CHECK(series[i].value == series2[i].value);
    }
    CHECK(series.back().value ==
          doctest::Approx(static_cast<double>(correct) / static_cast<double>(total)).epsilon(1e-12));
}

TEST_CASE("mean cumulative accuracy omits empty levels") {
    const std::vector<RunRecord> records{synthetic_record(1, 3, 5, 10)};
    const auto series = mean_cumulative_accuracy(records, Axis::complexity, 4);
    REQUIRE(series.size() == 2); // levels 1 and 2 are empty, 3 and 4 present
    CHECK(series[0].level == 3);
    CHECK(series[1].level == 4);
    CHECK(series[1].value == series[0].value);
}

TEST_CASE("mean cumulative accuracy matches a literal double-sum oracle") {
    std::mt19937_64 rng(23);
    std::vector<RunRecord> records;
    for (int i = 0; i < 100; ++i) {
        const int k = static_cast<int>(rng() % 12) + 1;
        const int c = static_cast<int>(rng() % 12) + 1;
        const int tot = static_cast<int>(rng() % 50) + 1;
        const int corr = static_cast<int>(rng() % (static_cast<unsigned>(tot) + 1));
        records.push_back(synthetic_record(k, c, corr, tot));
    }
    const auto series = mean_cumulative_accuracy(records, Axis::complexity, 12);
    for (const McaPoint& pt : series) {
        // The double sum, written exactly as stated: over all records with
        // complexity <= level (any k), indicator sums over their points.
        long long num = 0, den = 0;
        for (const RunRecord& r : records) {
            if (r.c > pt.level) continue;
            for (size_t i = 0; i < r.truths.size(); ++i) {
                const bool match = (r.verdicts[i] == Verdict::True && r.truths[i]) ||
                                   (r.verdicts[i] == Verdict::False && !r.truths[i]);
                num += match ? 1 : 0;
                den += 1;
            }
        }
        REQUIRE(den > 0);
        CHECK(pt.value ==
              doctest::Approx(static_cast<double>(num) / static_cast<double>(den)).epsilon(1e-12));
    }
}

TEST_CASE("kendall's W: concordance extremes") {
    RankTable identical;
    identical.items = {"a", "b", "c"};
    identical.judges = {"j1", "j2", "j3", "j4", "j5"};
    identical.ranks.assign(5, {1, 2, 3});
    CHECK(kendall_w(identical, false) == doctest::Approx(1.0).epsilon(1e-12));

    RankTable opposite;
    opposite.items = {"a", "b"};
    opposite.judges = {"j1", "j2"};
    opposite.ranks = {{1, 2}, {2, 1}};
    CHECK(kendall_w(opposite, false) == doctest::Approx(0.0));
}

TEST_CASE("kendall's W: weighted judge table reproduces the reference value") {
    const RankTable table =
        load_rank_table(std::string(POSETLAB_FIXTURE_DIR) + "/model_rank_table.json");
    CHECK(kendall_w(table, true) == doctest::Approx(0.7506).epsilon(0.0007));
    CHECK(std::abs(kendall_w(table, true) - 0.7506) <= 0.0005);
}

TEST_CASE("kendall's W input validation") {
    RankTable one_item;
    one_item.items = {"a"};
    one_item.judges = {"j"};
    one_item.ranks = {{1}};
    CHECK_THROWS_AS(kendall_w(one_item, false), MetricError);

    RankTable tied;
    tied.items = {"a", "b", "c"};
    tied.judges = {"j"};
    tied.ranks = {{1, 1, 2}};
    CHECK_THROWS_AS(kendall_w(tied, false), std::invalid_argument);

    RankTable unweighted_request;
    unweighted_request.items = {"a", "b"};
    unweighted_request.judges = {"j"};
    unweighted_request.ranks = {{1, 2}};
    CHECK_THROWS_AS(kendall_w(unweighted_request, true), std::invalid_argument);
}

TEST_CASE("kendall's W with a single judge: weighted equals unweighted") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 6;
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i + 1;
        std::shuffle(perm.begin(), perm.end(), rng);
        RankTable t;
        t.items.assign(static_cast<size_t>(n), "x");
        t.judges = {"solo"};
        t.weights = {3.7};
        t.ranks = {perm};
        CHECK(kendall_w(t, true) == doctest::Approx(kendall_w(t, false)).epsilon(1e-12));
        CHECK(kendall_w(t, false) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("kendall's W is invariant under item relabeling") {
    RankTable t;
    t.items = {"a", "b", "c", "d"};
    t.judges = {"j1", "j2", "j3"};
    t.weights = {1.0, 2.0, 3.0};
    t.ranks = {{1, 2, 3, 4}, {2, 1, 4, 3}, {1, 3, 2, 4}};
    const double w0 = kendall_w(t, true);
    const std::vector<size_t> perm{2, 0, 3, 1};
    RankTable relabeled = t;
    for (size_t j = 0; j < t.ranks.size(); ++j)
        for (size_t i = 0; i < perm.size(); ++i)
            relabeled.ranks[j][i] = t.ranks[j][perm[i]];
    CHECK(kendall_w(relabeled, true) == doctest::Approx(w0).epsilon(1e-12));
}

TEST_CASE("run records round-trip through JSON lines") {
    Prompt p;
    p.id = "roundtrip";
    p.kind = PosetKind::LOBIN;
    p.k = 3;
    p.c = 2;
    p.tasks = points({{"101", "11", false}, {"10", "101", true}});
    const RunRecord r = make_run_record(p, {Verdict::Unparseable, Verdict::Unknown});
    const RunRecord q = run_record_from_json_line(run_record_to_json_line(r));
    CHECK(q.prompt_id == r.prompt_id);
    CHECK(q.kind == r.kind);
    CHECK(q.k == r.k);
    CHECK(q.c == r.c);
    CHECK(q.verdicts == r.verdicts);
    CHECK(q.truths == r.truths);
    CHECK(q.correct == r.correct);
    CHECK(q.total == r.total);
    CHECK(q.unknown_count == 1);
    CHECK(q.unparseable_count == 1);
}
