#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "posetlab/client.hpp"
#include "posetlab/manifest.hpp"
#include "posetlab/meta.hpp"
#include "posetlab/metrics.hpp"
#include "posetlab/poset.hpp"
#include "posetlab/prompt.hpp"
#include "posetlab/rng.hpp"
#include "posetlab/tsne.hpp"

namespace fs = std::filesystem;
using namespace posetlab;

namespace {

void handle_sigint(int) { request_interrupt(); }

std::vector<std::string> collect_args(int argc, char** argv) {
    std::vector<std::string> out;
    for (int i = 1; i < argc; ++i) out.emplace_back(argv[i]);
    return out;
}

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& args) {
    RunManifest m;
    m.command = command;
    m.arguments = args;
    m.started_at = utc_now();
    return m;
}

void finish_manifest(RunManifest& m, const std::string& anchor_output) {
    m.finished_at = utc_now();
    write_manifest(m, manifest_path_for(anchor_output));
}

bool parse_grid(const std::string& spec, int& k_hi, int& c_hi) {
    const size_t pos = spec.find('x');
    if (pos == std::string::npos) return false;
    try {
        k_hi = std::stoi(spec.substr(0, pos));
        c_hi = std::stoi(spec.substr(pos + 1));
    } catch (const std::exception&) {
        return false;
    }
    return k_hi >= 1 && c_hi >= 1;
}

std::vector<int> k_range(int k_max) {
    std::vector<int> ks;
    for (int k = 1; k <= k_max; ++k) ks.push_back(k);
    return ks;
}

// ---------------------------------------------------------------- gen

int cmd_gen(const std::string& kind_name, int k, int c, const std::string& grid, int count,
            uint64_t seed, const std::string& style_name, bool include_instruction, bool render,
            const std::string& out_path, const std::vector<std::string>& args) {
    const PosetKind kind = poset_kind_from_string(kind_name);
    const PromptStyle style = prompt_style_from_string(style_name);

    int k_hi = k, c_hi = c, k_lo = k, c_lo = c;
    if (!grid.empty()) {
        if (!parse_grid(grid, k_hi, c_hi)) throw std::invalid_argument("bad --grid, expected KxC");
        k_lo = 1;
        c_lo = 1;
    }

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty() && out_path != "-") {
        file.open(out_path);
        if (!file) throw std::runtime_error("cannot write: " + out_path);
        out = &file;
    }

    RunManifest manifest = start_manifest("gen", args);
    manifest.seeds = {seed};
    for (int kk = k_lo; kk <= k_hi; ++kk) {
        for (int cc = c_lo; cc <= c_hi; ++cc) {
            const int n = count > 0 ? count : default_eval_count(kind);
            const uint64_t cell_seed =
                grid.empty() ? seed
                             : derive_seed(seed, static_cast<uint64_t>(kk), static_cast<uint64_t>(cc));
            const Prompt p = make_prompt(kind, kk, cc, n, cell_seed, style, include_instruction);
            if (render)
                *out << render_prompt(p);
            else
                *out << prompt_to_json_line(p) << "\n";
        }
    }
    if (out == &file) {
        manifest.output_paths = {out_path};
        finish_manifest(manifest, out_path);
    }
    return 0;
}

// ---------------------------------------------------------------- run

int cmd_run(const std::string& kind_name, const std::string& grid, int k_lo, int k_hi, int c_lo,
            int c_hi, int count, uint64_t seed, bool mock, double error_rate,
            const EndpointConfig& endpoint, const std::string& cache_path,
            const std::string& out_path, const std::vector<std::string>& args) {
    SweepOptions opts;
    opts.kind = poset_kind_from_string(kind_name);
    opts.count = count;
    opts.seed = seed;
    opts.max_in_flight = endpoint.max_in_flight;
    if (!grid.empty()) {
        if (!parse_grid(grid, opts.k_hi, opts.c_hi)) throw std::invalid_argument("bad --grid, expected KxC");
        opts.k_lo = opts.c_lo = 1;
    } else {
        opts.k_lo = k_lo;
        opts.k_hi = k_hi;
        opts.c_lo = c_lo;
        opts.c_hi = c_hi;
    }

    RunManifest manifest = start_manifest("run", args);
    manifest.seeds = {seed};
    manifest.output_paths = {out_path};

    std::unique_ptr<ResponseCache> cache;
    std::unique_ptr<CompletionClient> client;
    if (mock) {
        client = std::make_unique<MockClient>(error_rate, seed);
    } else {
        if (endpoint.base_url.empty())
            throw ConfigError("--base-url is required unless --mock is given");
        if (!cache_path.empty()) {
            cache = std::make_unique<ResponseCache>(cache_path);
            manifest.input_paths.push_back(cache_path);
        }
        client = std::make_unique<HttpClient>(endpoint, cache.get());
    }

    const std::vector<RunRecord> records = run_sweep(opts, *client, out_path);
    finish_manifest(manifest, out_path);

    size_t failed = 0;
    for (const RunRecord& r : records)
        if (!r.error.empty()) ++failed;
    std::cout << "sweep complete: " << records.size() << " records ("
              << client->completions_requested() << " completions requested, " << failed
              << " failed cells)\n";
    if (interrupted()) {
        std::cerr << "interrupted; partial output flushed to " << out_path << "\n";
        return 1;
    }
    return 0;
}

// ---------------------------------------------------------------- score / mca / kendall

int cmd_score(const std::string& records_path, const std::string& out_path,
              const std::vector<std::string>& args) {
    const std::vector<RunRecord> records = load_run_records(records_path);
    write_score_csv(records, out_path);
    long long correct = 0, total = 0;
    for (const RunRecord& r : records) {
        if (!r.error.empty()) continue;
        correct += r.correct;
        total += r.total;
    }
    RunManifest manifest = start_manifest("score", args);
    manifest.input_paths = {records_path};
    manifest.output_paths = {out_path};
    finish_manifest(manifest, out_path);
    if (total > 0)
        std::printf("records=%zu micro_accuracy=%.6f\n", records.size(),
                    static_cast<double>(correct) / static_cast<double>(total));
    else
        std::printf("records=%zu micro_accuracy=nan\n", records.size());
    return 0;
}

int cmd_mca(const std::string& records_path, const std::string& axis_name, int limit,
            const std::string& out_path, const std::vector<std::string>& args) {
    const Axis axis = axis_from_string(axis_name);
    const std::vector<RunRecord> records = load_run_records(records_path);
    const std::vector<McaPoint> series = mean_cumulative_accuracy(records, axis, limit);
    write_mca_csv(series, axis, out_path);
    RunManifest manifest = start_manifest("mca", args);
    manifest.input_paths = {records_path};
    manifest.output_paths = {out_path};
    finish_manifest(manifest, out_path);
    for (const McaPoint& p : series)
        std::printf("%s=%d value=%.6f (%lld/%lld)\n", to_string(axis), p.level, p.value, p.correct,
                    p.total);
    return 0;
}

int cmd_kendall(const std::string& table_path, bool weighted) {
    const RankTable table = load_rank_table(table_path);
    std::printf("kendall_w=%.6f\n", kendall_w(table, weighted));
    return 0;
}

// ---------------------------------------------------------------- theorem1 / saturate

int cmd_theorem1(int d, int k_max, int trials, uint64_t seed, bool serial,
                 const std::string& out_path, const std::vector<std::string>& args) {
    const std::vector<TheoremPoint> points = verify_theorem1(d, k_max, trials, seed, !serial);
    write_theorem_csv(points, out_path);
    RunManifest manifest = start_manifest("theorem1", args);
    manifest.seeds = {seed};
    manifest.output_paths = {out_path};
    finish_manifest(manifest, out_path);
    bool all_generic = true;
    for (const TheoremPoint& p : points)
        if (p.rank != std::min(p.k, d)) all_generic = false;
    std::printf("theorem1: d=%d kmax=%d trials=%d rank==min(k,d) for all: %s\n", d, k_max, trials,
                all_generic ? "yes" : "no");
    return 0;
}

int cmd_saturate(bool ols, bool train, int d, double sigma, int trials, int n_seeds, int k_max,
                 uint64_t seed, int steps, double lr, int batch, int layers, bool serial,
                 const std::string& out_dir, const std::vector<std::string>& args) {
    if (!ols && !train) throw std::invalid_argument("saturate: choose --ols and/or --train");
    fs::create_directories(out_dir);
    RunManifest manifest = start_manifest("saturate", args);
    manifest.seeds = {seed};
    std::string anchor;

    if (ols) {
        const SaturationCurve curve =
            ols_saturation_curve(d, sigma, k_range(k_max), trials, n_seeds, seed, !serial);
        const std::string path = (fs::path(out_dir) / "ols_curve.csv").string();
        write_curve_csv(curve, path);
        manifest.output_paths.push_back(path);
        anchor = path;
        std::printf("ols: wrote %s (threshold d=%d)\n", path.c_str(), curve.threshold);
    }
    if (train) {
        TrainConfig cfg;
        cfg.d = d;
        cfg.sigma = sigma;
        cfg.steps = steps;
        cfg.lr = lr;
        cfg.batch = batch;
        cfg.layers = layers;
        cfg.seed = seed;
        cfg.k_max = k_max;
        cfg.parallel = !serial;
        const TrainResult result = train_linear_attention(cfg);
        const SaturationCurve curve = evaluate_linear_attention(
            result.model, sigma, k_range(k_max), trials, n_seeds, seed, !serial);
        const std::string path = (fs::path(out_dir) / "train_curve.csv").string();
        write_curve_csv(curve, path);
        manifest.output_paths.push_back(path);
        const std::string loss_path = (fs::path(out_dir) / "train_loss.csv").string();
        std::ofstream loss_out(loss_path);
        loss_out << "step,loss\n";
        char buf[64];
        for (size_t i = 0; i < result.losses.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", result.losses[i]);
            loss_out << i << ',' << buf << "\n";
        }
        manifest.output_paths.push_back(loss_path);
        anchor = path;
        std::printf("train: %d steps, final loss %.4f, wrote %s\n", steps,
                    result.losses.empty() ? 0.0 : result.losses.back(), path.c_str());
    }
    finish_manifest(manifest, anchor);
    return 0;
}

// ---------------------------------------------------------------- tsne

int cmd_tsne(const std::string& input, const std::string& out_dir, double perplexity,
             int iterations, double learning_rate, int n_seeds, uint64_t seed, bool svg,
             bool serial, const std::vector<std::string>& args) {
    const EmbeddingSet all = load_embeddings(input);
    fs::create_directories(out_dir);

    TsneConfig cfg;
    cfg.perplexity = perplexity;
    cfg.iterations = iterations;
    cfg.learning_rate = learning_rate;

    std::vector<uint64_t> seeds;
    for (int i = 0; i < n_seeds; ++i) seeds.push_back(derive_seed(seed, static_cast<uint64_t>(i)));

    std::map<std::string, EmbeddingSet> by_task;
    for (const auto& e : all.entries) {
        EmbeddingSet& set = by_task[e.task];
        set.dim = all.dim;
        set.layer = all.layer;
        set.entries.push_back(e);
    }

    RunManifest manifest = start_manifest("tsne", args);
    manifest.seeds = seeds;
    manifest.input_paths = {input};

    const std::string summary_path = (fs::path(out_dir) / "silhouette.csv").string();
    std::ofstream summary(summary_path);
    summary << "task,level,silhouette,points\n";
    manifest.output_paths.push_back(summary_path);

    for (const auto& [task, set] : by_task) {
        const Eigen::MatrixXd distances = cosine_distance_matrix(set);
        const std::vector<Projection2D> runs = tsne_multi(distances, cfg, seeds, !serial);
        const Projection2D& best = best_projection(runs);

        const std::string proj_path = (fs::path(out_dir) / (task + "_projections.csv")).string();
        write_projection_csv(runs, set, proj_path);
        manifest.output_paths.push_back(proj_path);

        std::vector<int> groups;
        for (const auto& e : set.entries) groups.push_back(e.level());
        std::map<int, int> counts;
        for (int g : groups) ++counts[g];
        if (counts.size() >= 2) {
            char buf[64];
            for (const auto& [level, mean] : silhouette_by_group(best.points, groups)) {
                std::snprintf(buf, sizeof buf, "%.17g", mean);
                summary << task << ',' << level << ',' << buf << ',' << counts[level] << "\n";
            }
        }
        if (svg) {
            const std::string svg_path = (fs::path(out_dir) / (task + "_best.svg")).string();
            write_scatter_svg(best, set, svg_path);
            manifest.output_paths.push_back(svg_path);
        }
        std::printf("tsne: task=%s points=%zu best_kl=%.6f (seed %llu of %zu runs)\n", task.c_str(),
                    set.entries.size(), best.kl, static_cast<unsigned long long>(best.seed),
                    runs.size());
    }
    summary.close();
    finish_manifest(manifest, summary_path);
    return 0;
}

// ---------------------------------------------------------------- report

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path,
               const std::vector<std::string>& args) {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write: " + out_path);
    out << "source,row\n";
    size_t total_rows = 0;
    for (const std::string& input : inputs) {
        std::ifstream in(input);
        if (!in) throw std::runtime_error("cannot open: " + input);
        const std::string base = fs::path(input).filename().string();
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (first) { // keep each file's header, prefixed, for self-description
                out << base << ",\"header: " << line << "\"\n";
                first = false;
                continue;
            }
            out << base << ",\"" << line << "\"\n";
            ++total_rows;
        }
    }
    RunManifest manifest = start_manifest("report", args);
    manifest.input_paths = inputs;
    manifest.output_paths = {out_path};
    finish_manifest(manifest, out_path);
    std::printf("report: merged %zu rows from %zu files into %s\n", total_rows, inputs.size(),
                out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_sigint);
    const std::vector<std::string> args = collect_args(argc, argv);

    CLI::App app{"k-shot c-complex prompt toolkit for partially ordered sets"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "emit a prompt corpus as JSON Lines");
    std::string gen_kind, gen_grid, gen_style = "standard", gen_out = "-";
    int gen_k = 1, gen_c = 1, gen_count = 0;
    uint64_t gen_seed = 0;
    bool gen_include_instruction = false, gen_render = false;
    gen->add_option("--kind", gen_kind, "LO, LOBIN or DIV")->required();
    gen->add_option("--k", gen_k, "shots (ground-set size)");
    gen->add_option("--c", gen_c, "complexity");
    gen->add_option("--grid", gen_grid, "KxC grid instead of a single (k,c)");
    gen->add_option("--count", gen_count, "evaluation points per prompt (0 = kind default)");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--style", gen_style, "standard or labeled");
    gen->add_flag("--include-instruction", gen_include_instruction,
                  "prepend the relation description to labeled prompts");
    gen->add_flag("--render", gen_render, "emit rendered prompt text instead of JSON");
    gen->add_option("--out", gen_out, "output path (- for stdout)");

    // run
    auto* run = app.add_subcommand("run", "sweep a (k,c) grid against a model");
    std::string run_kind, run_grid, run_out, run_cache;
    int run_klo = 1, run_khi = 1, run_clo = 1, run_chi = 1, run_count = 0;
    uint64_t run_seed = 0;
    bool run_mock = false;
    double run_error_rate = 0.0;
    EndpointConfig endpoint;
    run->add_option("--kind", run_kind, "LO, LOBIN or DIV")->required();
    run->add_option("--grid", run_grid, "KxC grid (k,c from 1)");
    run->add_option("--k-lo", run_klo, "lowest k");
    run->add_option("--k-hi", run_khi, "highest k");
    run->add_option("--c-lo", run_clo, "lowest c");
    run->add_option("--c-hi", run_chi, "highest c");
    run->add_option("--count", run_count, "evaluation points per prompt (0 = kind default)");
    run->add_option("--seed", run_seed, "RNG seed");
    run->add_option("--out", run_out, "run-record JSONL output")->required();
    run->add_flag("--mock", run_mock, "use the deterministic offline model");
    run->add_option("--error-rate", run_error_rate, "mock per-line flip probability");
    run->add_option("--base-url", endpoint.base_url, "endpoint base URL");
    run->add_option("--model", endpoint.model_name, "model name");
    run->add_option("--api-key-env", endpoint.api_key_env, "environment variable with the API key");
    run->add_option("--temperature", endpoint.temperature, "sampling temperature");
    run->add_option("--max-tokens", endpoint.max_output_tokens, "completion token cap");
    run->add_option("--timeout", endpoint.timeout_seconds, "per-request timeout (s)");
    run->add_option("--max-in-flight", endpoint.max_in_flight, "concurrent request cap");
    run->add_option("--max-attempts", endpoint.max_attempts, "retry budget per cell");
    run->add_option("--backoff", endpoint.backoff_base_seconds, "base backoff (s)");
    run->add_option("--char-budget", endpoint.context_char_budget,
                    "client-side context overflow guard (chars)");
    run->add_option("--cache", run_cache, "response cache JSONL path");

    // score
    auto* score = app.add_subcommand("score", "turn run records into a per-prompt metrics CSV");
    std::string score_records, score_out = "score.csv";
    score->add_option("--records", score_records, "run-record JSONL")->required();
    score->add_option("--out", score_out, "CSV output");

    // mca
    auto* mca = app.add_subcommand("mca", "mean cumulative accuracy series");
    std::string mca_records, mca_axis = "complexity", mca_out = "mca.csv";
    int mca_limit = 0;
    mca->add_option("--records", mca_records, "run-record JSONL")->required();
    mca->add_option("--axis", mca_axis, "complexity or shots");
    mca->add_option("--limit", mca_limit, "largest level (0 = max present)");
    mca->add_option("--out", mca_out, "CSV output");

    // kendall
    auto* kendall = app.add_subcommand("kendall", "Kendall's W over a rank table");
    std::string kendall_table;
    bool kendall_weighted = false;
    kendall->add_option("--table", kendall_table, "rank-table JSON")->required();
    kendall->add_flag("--weighted", kendall_weighted, "use judge weights");

    // theorem1
    auto* theorem = app.add_subcommand("theorem1", "observed rank of the attention update");
    int th_d = 16, th_kmax = 32, th_trials = 20;
    uint64_t th_seed = 0;
    bool th_serial = false;
    std::string th_out = "theorem1.csv";
    theorem->add_option("--d", th_d, "embedding dimension");
    theorem->add_option("--kmax", th_kmax, "largest shot count");
    theorem->add_option("--trials", th_trials, "trials per k");
    theorem->add_option("--seed", th_seed, "RNG seed");
    theorem->add_flag("--serial", th_serial, "disable the parallel kernel");
    theorem->add_option("--out", th_out, "CSV output");

    // saturate
    auto* saturate = app.add_subcommand("saturate", "regression saturation curves");
    bool sat_ols = false, sat_train = false, sat_serial = false;
    int sat_d = 16, sat_trials = 2000, sat_seeds = 5, sat_kmax = 32;
    int sat_steps = 3000, sat_batch = 128, sat_layers = 48;
    double sat_sigma = 0.05, sat_lr = 1e-3;
    uint64_t sat_seed = 0;
    std::string sat_out_dir = ".";
    saturate->add_flag("--ols", sat_ols, "analytic least-squares learner");
    saturate->add_flag("--train", sat_train, "trained stacked linear-attention learner");
    saturate->add_option("--d", sat_d, "dimension");
    saturate->add_option("--sigma", sat_sigma, "label noise std");
    saturate->add_option("--trials", sat_trials, "trials per k");
    saturate->add_option("--seeds", sat_seeds, "seed replicates");
    saturate->add_option("--kmax", sat_kmax, "largest shot count");
    saturate->add_option("--seed", sat_seed, "root RNG seed");
    saturate->add_option("--steps", sat_steps, "training steps");
    saturate->add_option("--lr", sat_lr, "learning rate");
    saturate->add_option("--batch", sat_batch, "batch size");
    saturate->add_option("--layers", sat_layers, "refinement layers");
    saturate->add_flag("--serial", sat_serial, "disable the parallel kernels");
    saturate->add_option("--out-dir", sat_out_dir, "output directory");

    // tsne
    auto* tsne_cmd = app.add_subcommand("tsne", "project task vectors to 2-D");
    std::string tsne_input, tsne_out_dir = "tsne_out";
    double tsne_perplexity = 10.0, tsne_lr = 200.0;
    int tsne_iters = 1000, tsne_seeds = 41;
    uint64_t tsne_seed = 0;
    bool tsne_svg = false, tsne_serial = false;
    tsne_cmd->add_option("--input", tsne_input, "embeddings JSONL")->required();
    tsne_cmd->add_option("--out-dir", tsne_out_dir, "output directory");
    tsne_cmd->add_option("--perplexity", tsne_perplexity, "target perplexity");
    tsne_cmd->add_option("--iterations", tsne_iters, "descent iterations");
    tsne_cmd->add_option("--lr", tsne_lr, "learning rate");
    tsne_cmd->add_option("--seeds", tsne_seeds, "number of random restarts");
    tsne_cmd->add_option("--seed", tsne_seed, "root RNG seed");
    tsne_cmd->add_flag("--svg", tsne_svg, "emit a scatter SVG per task");
    tsne_cmd->add_flag("--serial", tsne_serial, "run restarts sequentially");

    // report
    auto* report = app.add_subcommand("report", "merge CSV outputs into a summary table");
    std::vector<std::string> report_inputs;
    std::string report_out = "summary.csv";
    report->add_option("--inputs", report_inputs, "CSV files to merge")->required();
    report->add_option("--out", report_out, "merged CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen(gen_kind, gen_k, gen_c, gen_grid, gen_count, gen_seed, gen_style,
                           gen_include_instruction, gen_render, gen_out, args);
        if (run->parsed())
            return cmd_run(run_kind, run_grid, run_klo, run_khi, run_clo, run_chi, run_count,
                           run_seed, run_mock, run_error_rate, endpoint, run_cache, run_out, args);
        if (score->parsed()) return cmd_score(score_records, score_out, args);
        if (mca->parsed()) return cmd_mca(mca_records, mca_axis, mca_limit, mca_out, args);
        if (kendall->parsed()) return cmd_kendall(kendall_table, kendall_weighted);
        if (theorem->parsed())
            return cmd_theorem1(th_d, th_kmax, th_trials, th_seed, th_serial, th_out, args);
        if (saturate->parsed())
            return cmd_saturate(sat_ols, sat_train, sat_d, sat_sigma, sat_trials, sat_seeds,
                                sat_kmax, sat_seed, sat_steps, sat_lr, sat_batch, sat_layers,
                                sat_serial, sat_out_dir, args);
        if (tsne_cmd->parsed())
            return cmd_tsne(tsne_input, tsne_out_dir, tsne_perplexity, tsne_iters, tsne_lr,
                            tsne_seeds, tsne_seed, tsne_svg, tsne_serial, args);
        if (report->parsed()) return cmd_report(report_inputs, report_out, args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
