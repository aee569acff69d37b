#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "posetlab/poset.hpp"

namespace posetlab {

enum class PromptStyle { standard, labeled };

const char* to_string(PromptStyle s);
PromptStyle prompt_style_from_string(const std::string& s);

struct EvalPoint {
    std::string a;
    std::string b;
    bool truth = false;
};

struct Prompt {
    std::string id;
    PosetKind kind = PosetKind::LO;
    int k = 1;
    int c = 1;
    PromptStyle style = PromptStyle::standard;
    bool include_instruction = true; // labeled prompts omit it unless requested
    std::string instruction;
    std::vector<std::pair<std::string, std::string>> examples;
    std::vector<EvalPoint> tasks;
    uint64_t seed = 0;
    // Realized sampling metadata: label balance and pair orientation counts.
    int true_count = 0;
    int false_count = 0;
    int forward_count = 0;
    int reversed_count = 0;
};

// Demonstration pairs: the covering edges of the prefix diagram in ascending
// order, interleaved with self-loop pairs (m,m) for DIV.
std::vector<std::pair<int, int>> minimal_examples(PosetKind kind, int k);

// Evaluation points for a k-shot c-complex prompt: distinct ordered pairs over
// {1..k+c} with at least one endpoint above k, excluding pairs that appear as
// covering edges of the extended diagram and pairs that occur (in either
// orientation) among the demonstrations. Returns the whole feasible set when
// it has at most `count` elements.
std::vector<EvalPoint> sample_eval_points(PosetKind kind, int k, int c, int count, uint64_t seed);

std::string instruction_text(PosetKind kind);
std::string render_prompt(const Prompt& p);

Prompt make_prompt(PosetKind kind, int k, int c, int count, uint64_t seed,
                   PromptStyle style = PromptStyle::standard,
                   bool include_instruction = true);

// Paper-protocol evaluation-set sizes: 50 for the linear orders, 30 for DIV.
int default_eval_count(PosetKind kind);

// Validating parser over the prompt grammar; accepts rendered standard
// prompts and recovers the generation parameters.
struct ParsedPrompt {
    PosetKind kind = PosetKind::LO;
    int k = 1;
    std::vector<std::pair<std::string, std::string>> examples;
    std::vector<std::pair<std::string, std::string>> tasks;
    std::vector<long long> complexity_witnesses; // task endpoints above k
};
ParsedPrompt parse_prompt(const std::string& text);

std::string prompt_to_json_line(const Prompt& p);
Prompt prompt_from_json_line(const std::string& line);
std::vector<Prompt> load_prompt_corpus(const std::string& path);

} // namespace posetlab
