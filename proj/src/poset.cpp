#include "posetlab/poset.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace posetlab {

namespace {

uint64_t edge_key(int a, int b) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
}

// Length-dependent lexicographic comparison: shorter word precedes longer,
// equal lengths compared left to right. On leading-zero-free numerals this is
// exactly numeric <.
bool length_lex_less(const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
}

} // namespace

const char* to_string(PosetKind kind) {
    switch (kind) {
        case PosetKind::LO: return "LO";
        case PosetKind::LOBIN: return "LOBIN";
        case PosetKind::DIV: return "DIV";
    }
    return "?";
}

PosetKind poset_kind_from_string(const std::string& s) {
    if (s == "LO") return PosetKind::LO;
    if (s == "LOBIN") return PosetKind::LOBIN;
    if (s == "DIV") return PosetKind::DIV;
    throw std::invalid_argument("unknown poset kind: " + s);
}

char relation_symbol(PosetKind kind) { return kind == PosetKind::DIV ? '|' : '<'; }

bool is_reflexive(PosetKind kind) { return kind == PosetKind::DIV; }

bool HasseDiagram::has_edge(int a, int b) const {
    return edge_keys_.count(edge_key(a, b)) != 0;
}

const std::vector<int>& HasseDiagram::successors(int a) const {
    return adj_[static_cast<size_t>(a)];
}

HasseDiagram build_hasse(PosetKind kind, int n) {
    if (n < 1) throw std::invalid_argument("build_hasse: n must be >= 1");
    HasseDiagram h;
    h.kind = kind;
    h.n = n;
    h.reflexive = is_reflexive(kind);
    h.adj_.assign(static_cast<size_t>(n) + 1, {});

    if (kind == PosetKind::DIV) {
        // Smallest-prime-factor sieve; covering edges of divisibility are
        // exactly (m/p, m) for primes p | m.
        std::vector<int> spf(static_cast<size_t>(n) + 1, 0);
        for (int i = 2; i <= n; ++i) {
            if (spf[static_cast<size_t>(i)] == 0) {
                for (long long j = i; j <= n; j += i) {
                    if (spf[static_cast<size_t>(j)] == 0) spf[static_cast<size_t>(j)] = i;
                }
            }
        }
        for (int m = 2; m <= n; ++m) {
            std::vector<int> sources;
            int v = m;
            while (v > 1) {
                int p = spf[static_cast<size_t>(v)];
                sources.push_back(m / p);
                while (v % p == 0) v /= p;
            }
            std::sort(sources.begin(), sources.end());
            for (int s : sources) h.edges.emplace_back(s, m);
        }
    } else {
        // Linear order: the Hasse diagram is the directed path 1 -> 2 -> ... -> n.
        for (int m = 2; m <= n; ++m) h.edges.emplace_back(m - 1, m);
    }

    for (const auto& [a, b] : h.edges) {
        h.adj_[static_cast<size_t>(a)].push_back(b);
        h.edge_keys_.insert(edge_key(a, b));
    }
    return h;
}

bool reachable(const HasseDiagram& h, int a, int b) {
    if (a < 1 || a > h.n || b < 1 || b > h.n)
        throw std::invalid_argument("reachable: node out of range");
    if (a == b) return h.reflexive;
    // Iterative DFS; path length >= 1 required, so start from a's successors.
    std::vector<char> seen(static_cast<size_t>(h.n) + 1, 0);
    std::vector<int> stack{a};
    seen[static_cast<size_t>(a)] = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : h.successors(u)) {
            if (v == b) return true;
            if (!seen[static_cast<size_t>(v)]) {
                seen[static_cast<size_t>(v)] = 1;
                stack.push_back(v);
            }
        }
    }
    return false;
}

bool valid_word(PosetKind kind, const std::string& word) {
    if (word.empty()) return false;
    const bool binary = kind == PosetKind::LOBIN;
    for (char ch : word) {
        if (binary ? (ch != '0' && ch != '1') : (ch < '0' || ch > '9')) return false;
    }
    if (word.size() > 1 && word[0] == '0') return false;
    return true;
}

long long word_value(PosetKind kind, const std::string& word) {
    if (!valid_word(kind, word))
        throw std::invalid_argument("invalid word for " + std::string(to_string(kind)) + ": \"" + word + "\"");
    const int base = kind == PosetKind::LOBIN ? 2 : 10;
    long long v = 0;
    for (char ch : word) {
        if (v > (std::numeric_limits<long long>::max() - 9) / base)
            throw std::invalid_argument("word value out of range: \"" + word + "\"");
        v = v * base + (ch - '0');
    }
    return v;
}

std::string to_word(PosetKind kind, long long v) {
    if (v < 0) throw std::invalid_argument("to_word: negative value");
    if (kind != PosetKind::LOBIN) return std::to_string(v);
    if (v == 0) return "0";
    std::string out;
    for (long long x = v; x > 0; x >>= 1) out.push_back(static_cast<char>('0' + (x & 1)));
    std::reverse(out.begin(), out.end());
    return out;
}

bool holds_value(PosetKind kind, long long a, long long b) {
    switch (kind) {
        case PosetKind::LO:
        case PosetKind::LOBIN: return a < b;
        case PosetKind::DIV: return a >= 1 && b % a == 0;
    }
    return false;
}

bool holds(PosetKind kind, const std::string& a, const std::string& b) {
    if (!valid_word(kind, a))
        throw std::invalid_argument("holds: invalid word \"" + a + "\"");
    if (!valid_word(kind, b))
        throw std::invalid_argument("holds: invalid word \"" + b + "\"");
    switch (kind) {
        case PosetKind::LO:
        case PosetKind::LOBIN:
            return length_lex_less(a, b);
        case PosetKind::DIV:
            return holds_value(PosetKind::DIV, word_value(kind, a), word_value(kind, b));
    }
    return false;
}

} // namespace posetlab
