#include "posetlab/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "posetlab/rng.hpp"

namespace posetlab {

using json = nlohmann::json;

const char* to_string(PromptStyle s) {
    return s == PromptStyle::standard ? "standard" : "labeled";
}

PromptStyle prompt_style_from_string(const std::string& s) {
    if (s == "standard") return PromptStyle::standard;
    if (s == "labeled") return PromptStyle::labeled;
    throw std::invalid_argument("unknown prompt style: " + s);
}

int default_eval_count(PosetKind kind) { return kind == PosetKind::DIV ? 30 : 50; }

std::vector<std::pair<int, int>> minimal_examples(PosetKind kind, int k) {
    if (k < 1) throw std::invalid_argument("minimal_examples: k must be >= 1");
    const HasseDiagram h = build_hasse(kind, k);
    std::vector<std::pair<int, int>> out;
    size_t next = 0;
    for (int m = 1; m <= k; ++m) {
        while (next < h.edges.size() && h.edges[next].second == m) {
            out.push_back(h.edges[next]);
            ++next;
        }
        if (h.reflexive) out.emplace_back(m, m);
    }
    return out;
}

namespace {

uint64_t pair_key(int a, int b) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

struct PairSampler {
    PosetKind kind;
    int k, c, n;
    HasseDiagram extended;
    std::set<uint64_t> demo_pairs; // both orientations

    PairSampler(PosetKind kind_, int k_, int c_)
        : kind(kind_), k(k_), c(c_), n(k_ + c_), extended(build_hasse(kind_, k_ + c_)) {
        for (const auto& [a, b] : minimal_examples(kind_, k_)) {
            demo_pairs.insert(pair_key(a, b));
            demo_pairs.insert(pair_key(b, a));
        }
    }

    bool admissible(int a, int b) const {
        if (a == b) return false;
        if (std::max(a, b) <= k) return false;
        if (extended.has_edge(a, b)) return false;
        if (demo_pairs.count(pair_key(a, b))) return false;
        return true;
    }
};

} // namespace

std::vector<EvalPoint> sample_eval_points(PosetKind kind, int k, int c, int count, uint64_t seed) {
    if (k < 1 || c < 1) throw std::invalid_argument("sample_eval_points: k, c must be >= 1");
    if (count < 1) throw std::invalid_argument("sample_eval_points: count must be >= 1");
    const PairSampler sampler(kind, k, c);
    const int n = sampler.n;

    auto make_point = [&](int a, int b) {
        EvalPoint pt;
        pt.a = to_word(kind, a);
        pt.b = to_word(kind, b);
        pt.truth = holds_value(kind, a, b);
        return pt;
    };

    // Enumerate the feasible set; degenerate grids return everything they have.
    std::vector<std::pair<int, int>> feasible;
    for (int a = 1; a <= n; ++a)
        for (int b = 1; b <= n; ++b)
            if (sampler.admissible(a, b)) feasible.emplace_back(a, b);

    std::vector<EvalPoint> out;
    if (static_cast<int>(feasible.size()) <= count) {
        out.reserve(feasible.size());
        for (const auto& [a, b] : feasible) out.push_back(make_point(a, b));
        return out;
    }

    std::mt19937_64 rng = make_rng(seed);
    std::uniform_int_distribution<int> any(1, n);
    std::uniform_int_distribution<int> upper(k + 1, n);
    std::uniform_int_distribution<int> coin(0, 1);
    std::set<uint64_t> chosen;
    out.reserve(static_cast<size_t>(count));
    while (static_cast<int>(out.size()) < count) {
        int a = any(rng);
        int b = upper(rng);
        if (coin(rng)) std::swap(a, b);
        if (!sampler.admissible(a, b)) continue;
        if (!chosen.insert(pair_key(a, b)).second) continue;
        out.push_back(make_point(a, b));
    }
    return out;
}

std::string instruction_text(PosetKind kind) {
    std::ostringstream os;
    switch (kind) {
        case PosetKind::DIV:
            os << "Relation Description: There is a relation divides '|' between integers "
                  "composed of digits \"0\", \"1\", \"2\", \"3\", \"4\", \"5\", \"6\", \"7\", "
                  "\"8\" and \"9\".\n";
            break;
        case PosetKind::LO:
            os << "Relation Description: There is a relation less than \"<\" between strings "
                  "made of decimal digits \"0\", \"1\", \"2\", \"3\", \"4\", \"5\", \"6\", "
                  "\"7\", \"8\" and \"9\".\n";
            break;
        case PosetKind::LOBIN:
            os << "Relation Description: There is a relation less than \"<\" between binary "
                  "strings made of characters \"0\" and \"1\".\n";
            break;
    }
    const char rel = relation_symbol(kind);
    const char* noun = kind == PosetKind::LOBIN ? "strings" : "integers";
    os << "Given such " << noun << " x, y, and z, the relation has the following properties:\n";
    os << "    (a) if x" << rel << "y is true, then y" << rel << "x is false,\n";
    os << "    (b) if both x" << rel << "y and y" << rel << "z are true, then x" << rel
       << "z is true, and\n";
    os << "    (c) x" << rel << "x is always " << (is_reflexive(kind) ? "true" : "false")
       << ", for any x.\n";
    return os.str();
}

std::string render_prompt(const Prompt& p) {
    std::ostringstream os;
    const char rel = relation_symbol(p.kind);

    if (p.style == PromptStyle::labeled) {
        if (p.include_instruction) os << p.instruction;
        for (const auto& [a, b] : p.examples)
            os << "(" << a << " " << rel << " " << b << ") -> True\n";
        for (const auto& t : p.tasks) os << "(" << t.a << " " << rel << " " << t.b << ") ->\n";
        return os.str();
    }

    os << p.instruction;
    os << "Examples:";
    for (size_t i = 0; i < p.examples.size(); ++i) {
        os << (i == 0 ? " " : ", ") << '"' << p.examples[i].first << ' ' << rel << ' '
           << p.examples[i].second << '"';
    }
    os << "\n";
    const char* ph = p.kind == PosetKind::LOBIN ? "string" : "integer";
    os << "Task Description: Given the above information, determine if {" << ph << " 1} " << rel
       << " {" << ph << " 2} is true.\n";
    os << "    If it is true, your answer must be \"{" << ph << " 1} " << rel << " {" << ph
       << " 2}: true\".\n";
    os << "    If it is false, your answer must be \"{" << ph << " 1} " << rel << " {" << ph
       << " 2}: false\".\n";
    os << "    If you do not know if it is true or false, you answer must be \"{" << ph << " 1} "
       << rel << " {" << ph << " 2} : unknown\".\n";
    os << "Follow the specified format for answering:\n";
    for (const auto& t : p.tasks) os << t.a << ' ' << rel << ' ' << t.b << "\n";
    return os.str();
}

Prompt make_prompt(PosetKind kind, int k, int c, int count, uint64_t seed, PromptStyle style,
                   bool include_instruction) {
    Prompt p;
    p.kind = kind;
    p.k = k;
    p.c = c;
    p.style = style;
    p.include_instruction = style == PromptStyle::standard ? true : include_instruction;
    p.seed = seed;
    {
        std::ostringstream id;
        id << to_string(kind) << "_k" << k << "_c" << c << "_s" << seed;
        if (style == PromptStyle::labeled) id << "_labeled";
        p.id = id.str();
    }
    p.instruction = instruction_text(kind);
    for (const auto& [a, b] : minimal_examples(kind, k))
        p.examples.emplace_back(to_word(kind, a), to_word(kind, b));
    p.tasks = sample_eval_points(kind, k, c, count, seed);
    for (const auto& t : p.tasks) {
        if (t.truth)
            ++p.true_count;
        else
            ++p.false_count;
        if (word_value(kind, t.b) > k)
            ++p.forward_count; // second endpoint sits in the extension window
        else
            ++p.reversed_count;
    }
    return p;
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

std::string strip(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Parses one quoted or bare pair "a REL b"; returns false on mismatch.
bool parse_pair(const std::string& raw, char rel, std::string& a, std::string& b) {
    std::string s = strip(raw);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = strip(s.substr(1, s.size() - 2));
    const size_t pos = s.find(rel);
    if (pos == std::string::npos) return false;
    a = strip(s.substr(0, pos));
    b = strip(s.substr(pos + 1));
    return !a.empty() && !b.empty();
}

} // namespace

ParsedPrompt parse_prompt(const std::string& text) {
    const std::vector<std::string> lines = split_lines(text);
    size_t i = 0;
    auto fail = [](const std::string& why) -> ParsedPrompt {
        throw std::invalid_argument("parse_prompt: " + why);
    };
    if (lines.empty()) return fail("empty prompt");

    PosetKind kind;
    const std::string& head = lines[0];
    if (head.find("relation divides") != std::string::npos)
        kind = PosetKind::DIV;
    else if (head.find("binary strings") != std::string::npos)
        kind = PosetKind::LOBIN;
    else if (head.find("relation less than") != std::string::npos)
        kind = PosetKind::LO;
    else
        return fail("missing Relation Description");
    const char rel = relation_symbol(kind);

    const std::string expected_instruction = instruction_text(kind);
    const std::vector<std::string> inst_lines = split_lines(expected_instruction);
    if (lines.size() < inst_lines.size()) return fail("truncated instruction");
    for (; i < inst_lines.size(); ++i) {
        if (lines[i] != inst_lines[i]) return fail("instruction deviates at line " + std::to_string(i + 1));
    }

    if (i >= lines.size() || lines[i].rfind("Examples:", 0) != 0) return fail("missing Examples line");
    ParsedPrompt out;
    out.kind = kind;
    {
        std::string rest = strip(lines[i].substr(9));
        ++i;
        if (!rest.empty()) {
            // Quoted pairs separated by commas.
            std::vector<std::string> items;
            std::string cur;
            bool quoted = false;
            for (char ch : rest) {
                if (ch == '"') quoted = !quoted;
                if (ch == ',' && !quoted) {
                    items.push_back(cur);
                    cur.clear();
                } else {
                    cur.push_back(ch);
                }
            }
            items.push_back(cur);
            for (const std::string& item : items) {
                std::string a, b;
                if (!parse_pair(item, rel, a, b)) return fail("bad example item: " + item);
                out.examples.emplace_back(a, b);
            }
        }
    }

    long long kmax = 1;
    for (const auto& [a, b] : out.examples) {
        kmax = std::max({kmax, word_value(kind, a), word_value(kind, b)});
    }
    out.k = static_cast<int>(kmax);
    // Minimality: the example list must be exactly the covering relation of
    // the recovered prefix.
    std::vector<std::pair<std::string, std::string>> expected;
    for (const auto& [a, b] : minimal_examples(kind, out.k))
        expected.emplace_back(to_word(kind, a), to_word(kind, b));
    if (expected != out.examples) return fail("examples are not the minimal covering set");

    if (i >= lines.size() || lines[i].rfind("Task Description:", 0) != 0)
        return fail("missing Task Description");
    i += 4; // Task Description line plus the three answer-format clauses
    if (i >= lines.size() || lines[i] != "Follow the specified format for answering:")
        return fail("missing answer-format line");
    ++i;

    for (; i < lines.size(); ++i) {
        if (strip(lines[i]).empty()) continue;
        std::string a, b;
        if (!parse_pair(lines[i], rel, a, b)) return fail("bad task line: " + lines[i]);
        if (!valid_word(kind, a) || !valid_word(kind, b)) return fail("task word outside alphabet: " + lines[i]);
        out.tasks.emplace_back(a, b);
        const long long va = word_value(kind, a);
        const long long vb = word_value(kind, b);
        const long long hi = std::max(va, vb);
        if (hi <= out.k) return fail("task lacks a complexity witness: " + lines[i]);
        if (va > out.k) out.complexity_witnesses.push_back(va);
        if (vb > out.k && vb != va) out.complexity_witnesses.push_back(vb);
    }
    if (out.tasks.empty()) return fail("no task lines");
    return out;
}

std::string prompt_to_json_line(const Prompt& p) {
    json j;
    j["id"] = p.id;
    j["kind"] = to_string(p.kind);
    j["k"] = p.k;
    j["c"] = p.c;
    j["style"] = to_string(p.style);
    j["instruction"] = p.instruction;
    json ex = json::array();
    for (const auto& [a, b] : p.examples) ex.push_back(json::array({a, b}));
    j["examples"] = ex;
    json tasks = json::array();
    for (const auto& t : p.tasks) tasks.push_back({{"a", t.a}, {"b", t.b}, {"truth", t.truth}});
    j["tasks"] = tasks;
    j["seed"] = p.seed;
    j["meta"] = {{"true_count", p.true_count},
                 {"false_count", p.false_count},
                 {"forward_count", p.forward_count},
                 {"reversed_count", p.reversed_count},
                 {"include_instruction", p.include_instruction}};
    return j.dump();
}

Prompt prompt_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    Prompt p;
    p.id = j.at("id").get<std::string>();
    p.kind = poset_kind_from_string(j.at("kind").get<std::string>());
    p.k = j.at("k").get<int>();
    p.c = j.at("c").get<int>();
    p.style = prompt_style_from_string(j.at("style").get<std::string>());
    p.instruction = j.at("instruction").get<std::string>();
    for (const auto& e : j.at("examples"))
        p.examples.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    for (const auto& t : j.at("tasks")) {
        EvalPoint pt;
        pt.a = t.at("a").get<std::string>();
        pt.b = t.at("b").get<std::string>();
        pt.truth = t.at("truth").get<bool>();
        p.tasks.push_back(pt);
    }
    p.seed = j.at("seed").get<uint64_t>();
    if (j.contains("meta")) {
        const json& m = j["meta"];
        p.true_count = m.value("true_count", 0);
        p.false_count = m.value("false_count", 0);
        p.forward_count = m.value("forward_count", 0);
        p.reversed_count = m.value("reversed_count", 0);
        p.include_instruction = m.value("include_instruction", true);
    }
    return p;
}

std::vector<Prompt> load_prompt_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prompt corpus: " + path);
    std::vector<Prompt> out;
    std::string line;
    while (std::getline(in, line)) {
        if (strip(line).empty()) continue;
        out.push_back(prompt_from_json_line(line));
    }
    return out;
}

} // namespace posetlab
