#include "posetlab/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "posetlab/rng.hpp"

namespace posetlab {

using json = nlohmann::json;

namespace {

constexpr double kMinProb = 1e-12;

bool parse_int_token(const std::string& s, int& out) {
    if (s.empty()) return false;
    for (char ch : s)
        if (!std::isdigit(static_cast<unsigned char>(ch))) return false;
    out = std::stoi(s);
    return true;
}

} // namespace

EmbeddingEntry parse_embedding_label(const std::string& label) {
    EmbeddingEntry e;
    e.label = label;
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : label) {
        if (ch == '_') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    if (parts.size() < 2 || parts.size() > 3 || parts[0].empty())
        throw std::invalid_argument("label must be Task_k or Task_k_c: \"" + label + "\"");
    e.task = parts[0];
    if (!parse_int_token(parts[1], e.k))
        throw std::invalid_argument("label must be Task_k or Task_k_c: \"" + label + "\"");
    if (parts.size() == 3) {
        if (!parse_int_token(parts[2], e.c))
            throw std::invalid_argument("label must be Task_k or Task_k_c: \"" + label + "\"");
    }
    return e;
}

EmbeddingSet load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embeddings: " + path);
    EmbeddingSet set;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                                     ": bad JSON: " + e.what());
        }
        EmbeddingEntry entry;
        try {
            entry = parse_embedding_label(j.at("label").get<std::string>());
        } catch (const std::exception& e) {
            throw std::runtime_error("embeddings line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto values = j.at("vector").get<std::vector<double>>();
        entry.vector = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                         static_cast<Eigen::Index>(values.size()));
        if (set.entries.empty()) {
            set.dim = static_cast<int>(values.size());
        } else if (static_cast<int>(values.size()) != set.dim) {
            throw std::runtime_error("embeddings line " + std::to_string(line_no) +
                                     ": dimension " + std::to_string(values.size()) +
                                     " does not match established dimension " +
                                     std::to_string(set.dim));
        }
        if (j.contains("layer")) set.layer = j["layer"].get<int>();
        set.entries.push_back(std::move(entry));
    }
    if (set.entries.empty()) throw std::runtime_error("embeddings file is empty: " + path);
    return set;
}

void save_embeddings(const EmbeddingSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embeddings: " + path);
    for (const auto& e : set.entries) {
        json j;
        j["label"] = e.label;
        std::vector<double> values(e.vector.data(), e.vector.data() + e.vector.size());
        j["vector"] = values;
        if (set.layer != 0) j["layer"] = set.layer;
        out << j.dump() << "\n";
    }
}

Eigen::MatrixXd cosine_distance_matrix(const EmbeddingSet& set) {
    const int n = static_cast<int>(set.entries.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    std::vector<double> norms(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        norms[static_cast<size_t>(i)] = set.entries[static_cast<size_t>(i)].vector.norm();
        if (norms[static_cast<size_t>(i)] <= 0.0)
            throw std::invalid_argument("cosine_distance_matrix: zero-norm vector at index " +
                                        std::to_string(i));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double cos = set.entries[static_cast<size_t>(i)].vector.dot(
                                   set.entries[static_cast<size_t>(j)].vector) /
                               (norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)]);
            const double dist = 1.0 - cos;
            d(i, j) = dist;
            d(j, i) = dist;
        }
    }
    return d;
}

Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& distances, const TsneConfig& cfg,
                                    std::vector<double>* achieved_perplexity) {
    const int n = static_cast<int>(distances.rows());
    if (distances.cols() != n) throw std::invalid_argument("joint_probabilities: square matrix required");
    if (n < 4) throw std::invalid_argument("joint_probabilities: need at least 4 points");
    if (cfg.perplexity < 1.0 || cfg.perplexity >= static_cast<double>(n - 1))
        throw std::invalid_argument("joint_probabilities: require 1 <= perplexity < n-1");

    if (achieved_perplexity) achieved_perplexity->assign(static_cast<size_t>(n), 0.0);
    const Eigen::MatrixXd d2 = distances.cwiseProduct(distances);
    Eigen::MatrixXd cond = Eigen::MatrixXd::Zero(n, n);

    for (int i = 0; i < n; ++i) {
        double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
        Eigen::VectorXd row(n);
        double perp = 0.0;
        bool converged = false;
        for (int it = 0; it < cfg.max_bisection_steps; ++it) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                row(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
                sum += row(j);
            }
            if (sum <= 0.0) { // all mass collapsed; step back towards beta_lo
                beta_hi = beta;
                beta = std::isinf(beta_hi) ? beta * 0.5 : 0.5 * (beta_lo + beta_hi);
                continue;
            }
            double entropy = 0.0;
            for (int j = 0; j < n; ++j) {
                if (row(j) > 0.0) {
                    const double p = row(j) / sum;
                    entropy -= p * std::log(p);
                }
            }
            perp = std::exp(entropy);
            row /= sum;
            if (std::abs(perp - cfg.perplexity) <= cfg.perplexity_tolerance) {
                converged = true;
                break;
            }
            if (perp > cfg.perplexity) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta_lo + beta_hi);
            } else {
                beta_hi = beta;
                beta = beta_lo == 0.0 ? beta * 0.5 : 0.5 * (beta_lo + beta_hi);
            }
        }
        if (!converged) {
            std::cerr << "[tsne] warning: perplexity bisection did not converge for point " << i
                      << " (achieved " << perp << "); clamping bandwidth\n";
        }
        if (achieved_perplexity) (*achieved_perplexity)[static_cast<size_t>(i)] = perp;
        cond.row(i) = row.transpose();
    }

    Eigen::MatrixXd joint = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
    joint = joint.cwiseMax(kMinProb);
    joint.diagonal().setZero();
    return joint;
}

namespace {

// Student-t numerators and their sum for the current map.
void q_numerators(const Eigen::MatrixXd& y, Eigen::MatrixXd& num, double& z) {
    const int n = static_cast<int>(y.rows());
    num.setZero(n, n);
    z = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            const double v = 1.0 / (1.0 + dx * dx + dy * dy);
            num(i, j) = v;
            num(j, i) = v;
            z += 2.0 * v;
        }
    }
}

} // namespace

double kl_divergence(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y) {
    Eigen::MatrixXd num;
    double z = 0.0;
    q_numerators(Y, num, z);
    const int n = static_cast<int>(Y.rows());
    double kl = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double p = P(i, j);
            if (p <= 0.0) continue;
            const double q = std::max(num(i, j) / z, kMinProb);
            kl += p * std::log(p / q);
        }
    }
    return kl;
}

Eigen::MatrixXd kl_gradient(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y) {
    Eigen::MatrixXd num;
    double z = 0.0;
    q_numerators(Y, num, z);
    const int n = static_cast<int>(Y.rows());
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double q = std::max(num(i, j) / z, kMinProb);
            const double mult = 4.0 * (P(i, j) - q) * num(i, j);
            grad(i, 0) += mult * (Y(i, 0) - Y(j, 0));
            grad(i, 1) += mult * (Y(i, 1) - Y(j, 1));
        }
    }
    return grad;
}

Projection2D tsne(const Eigen::MatrixXd& distances, const TsneConfig& cfg, uint64_t seed) {
    const int n = static_cast<int>(distances.rows());
    std::vector<double> achieved;
    const Eigen::MatrixXd P = joint_probabilities(distances, cfg, &achieved);

    std::mt19937_64 rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1e-4);
    Eigen::MatrixXd y(n, 2);
    for (int i = 0; i < n; ++i) {
        y(i, 0) = normal(rng);
        y(i, 1) = normal(rng);
    }

    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
    Projection2D proj;
    proj.seed = seed;
    proj.achieved_perplexity = achieved;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerate = iter < cfg.exaggeration_iters;
        const Eigen::MatrixXd grad =
            exaggerate ? kl_gradient((cfg.early_exaggeration * P).eval(), y) : kl_gradient(P, y);
        if (!grad.allFinite())
            throw TsneError("non-finite gradient at iteration " + std::to_string(iter));
        const double momentum =
            iter < cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                const bool same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
                gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
                velocity(i, c) =
                    momentum * velocity(i, c) - cfg.learning_rate * gains(i, c) * grad(i, c);
                y(i, c) += velocity(i, c);
            }
        }
        y.rowwise() -= y.colwise().mean();
        if (iter + 1 == cfg.exaggeration_iters) proj.kl_after_exaggeration = kl_divergence(P, y);
    }

    proj.points = y;
    proj.kl = kl_divergence(P, y);
    return proj;
}

Projection2D tsne(const EmbeddingSet& set, const TsneConfig& cfg, uint64_t seed) {
    return tsne(cosine_distance_matrix(set), cfg, seed);
}

std::vector<Projection2D> tsne_multi(const Eigen::MatrixXd& distances, const TsneConfig& cfg,
                                     const std::vector<uint64_t>& seeds, bool parallel) {
    std::vector<Projection2D> runs(seeds.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int i = 0; i < static_cast<int>(seeds.size()); ++i)
        runs[static_cast<size_t>(i)] = tsne(distances, cfg, seeds[static_cast<size_t>(i)]);
    return runs;
}

const Projection2D& best_projection(const std::vector<Projection2D>& runs) {
    if (runs.empty()) throw std::invalid_argument("best_projection: no runs");
    size_t best = 0;
    for (size_t i = 1; i < runs.size(); ++i)
        if (runs[i].kl < runs[best].kl) best = i;
    return runs[best];
}

namespace {

std::vector<std::pair<int, double>> silhouette_impl(const Eigen::MatrixXd& points,
                                                    const std::vector<int>& groups,
                                                    double* overall) {
    const int n = static_cast<int>(points.rows());
    if (static_cast<int>(groups.size()) != n)
        throw std::invalid_argument("silhouette: one group id per point required");
    std::map<int, int> sizes;
    for (int g : groups) ++sizes[g];
    if (sizes.size() < 2) throw MetricError("silhouette undefined for fewer than two groups");

    auto dist = [&](int i, int j) {
        const double dx = points(i, 0) - points(j, 0);
        const double dy = points(i, 1) - points(j, 1);
        return std::sqrt(dx * dx + dy * dy);
    };

    std::map<int, std::pair<double, int>> per_group; // sum, count
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        std::map<int, std::pair<double, int>> acc; // group -> (sum of distances, count)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            auto& slot = acc[groups[static_cast<size_t>(j)]];
            slot.first += dist(i, j);
            slot.second += 1;
        }
        const int gi = groups[static_cast<size_t>(i)];
        double a = 0.0;
        if (auto it = acc.find(gi); it != acc.end() && it->second.second > 0)
            a = it->second.first / it->second.second;
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [g, slot] : acc) {
            if (g == gi) continue;
            b = std::min(b, slot.first / slot.second);
        }
        double s = 0.0;
        if (sizes[gi] > 1) {
            const double denom = std::max(a, b);
            s = denom > 0.0 ? (b - a) / denom : 0.0;
        }
        total += s;
        auto& gslot = per_group[gi];
        gslot.first += s;
        gslot.second += 1;
    }
    if (overall) *overall = total / static_cast<double>(n);
    std::vector<std::pair<int, double>> out;
    for (const auto& [g, slot] : per_group) out.emplace_back(g, slot.first / slot.second);
    return out;
}

} // namespace

double cluster_separation(const Eigen::MatrixXd& points, const std::vector<int>& groups) {
    double overall = 0.0;
    silhouette_impl(points, groups, &overall);
    return overall;
}

std::vector<std::pair<int, double>> silhouette_by_group(const Eigen::MatrixXd& points,
                                                        const std::vector<int>& groups) {
    return silhouette_impl(points, groups, nullptr);
}

void write_projection_csv(const std::vector<Projection2D>& runs, const EmbeddingSet& set,
                          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "label,x,y,kl,seed\n";
    char x_buf[64], y_buf[64], kl_buf[64];
    for (const Projection2D& run : runs) {
        for (int i = 0; i < run.points.rows(); ++i) {
            std::snprintf(x_buf, sizeof x_buf, "%.17g", run.points(i, 0));
            std::snprintf(y_buf, sizeof y_buf, "%.17g", run.points(i, 1));
            std::snprintf(kl_buf, sizeof kl_buf, "%.17g", run.kl);
            out << set.entries[static_cast<size_t>(i)].label << ',' << x_buf << ',' << y_buf << ','
                << kl_buf << ',' << run.seed << "\n";
        }
    }
}

void write_scatter_svg(const Projection2D& proj, const EmbeddingSet& set, const std::string& path) {
    static const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                     "#66ccee", "#aa3377", "#bbbbbb", "#222222"};
    const int n = static_cast<int>(proj.points.rows());
    const double min_x = proj.points.col(0).minCoeff(), max_x = proj.points.col(0).maxCoeff();
    const double min_y = proj.points.col(1).minCoeff(), max_y = proj.points.col(1).maxCoeff();
    const double span_x = std::max(max_x - min_x, 1e-9);
    const double span_y = std::max(max_y - min_y, 1e-9);
    const double size = 640.0, margin = 40.0;

    std::map<int, int> level_color;
    for (const auto& e : set.entries) level_color.emplace(e.level(), 0);
    int idx = 0;
    for (auto& [level, color] : level_color) color = idx++ % 8;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
        << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (int i = 0; i < n; ++i) {
        const double px = margin + (proj.points(i, 0) - min_x) / span_x * (size - 2 * margin);
        const double py = margin + (max_y - proj.points(i, 1)) / span_y * (size - 2 * margin);
        const auto& e = set.entries[static_cast<size_t>(i)];
        out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"5\" fill=\""
            << kPalette[level_color[e.level()]] << "\"><title>" << e.label << "</title></circle>\n";
    }
    out << "</svg>\n";
}

} // namespace posetlab
