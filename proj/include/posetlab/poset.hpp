#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace posetlab {

// The three relations under study. LO is (N, <) on decimal numerals, LOBIN is
// ({0,1}*, <) under length-dependent lexicographic order, DIV is (N, |).
// LO and LOBIN are irreflexive; DIV is reflexive.
enum class PosetKind { LO, LOBIN, DIV };

const char* to_string(PosetKind kind);
PosetKind poset_kind_from_string(const std::string& s);

// Relation symbol used in rendered text: "<" for LO/LOBIN, "|" for DIV.
char relation_symbol(PosetKind kind);
bool is_reflexive(PosetKind kind);

// Covering-relation DAG of the poset prefix {1..n}. Non-loop edges only;
// `reflexive` marks the implicit self-loop on every node (DIV).
struct HasseDiagram {
    PosetKind kind;
    int n = 0;
    bool reflexive = false;
    std::vector<std::pair<int, int>> edges; // sorted by (target, source)

    bool has_edge(int a, int b) const;
    const std::vector<int>& successors(int a) const;

  private:
    friend HasseDiagram build_hasse(PosetKind, int);
    std::vector<std::vector<int>> adj_;
    std::unordered_set<uint64_t> edge_keys_;
};

HasseDiagram build_hasse(PosetKind kind, int n);

// Directed path of length >= 1 from a to b (self-loops count when reflexive).
bool reachable(const HasseDiagram& h, int a, int b);

// Word-level ground truth, computed arithmetically without any diagram.
bool holds(PosetKind kind, const std::string& a, const std::string& b);

// Integer-level ground truth for 1-based ground-set members.
bool holds_value(PosetKind kind, long long a, long long b);

// Decimal rendering for LO/DIV, binary for LOBIN.
std::string to_word(PosetKind kind, long long v);
long long word_value(PosetKind kind, const std::string& word);
bool valid_word(PosetKind kind, const std::string& word);

} // namespace posetlab
