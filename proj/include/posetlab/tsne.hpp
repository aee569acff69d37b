#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "posetlab/metrics.hpp"

namespace posetlab {

struct TsneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmbeddingEntry {
    std::string label; // Task_k or Task_k_c
    std::string task;
    int k = 0;
    int c = -1; // -1 when the label carries no complexity level
    Eigen::VectorXd vector;

    int level() const { return c >= 0 ? c : k; }
};

struct EmbeddingSet {
    std::vector<EmbeddingEntry> entries;
    int dim = 0;
    int layer = 0; // extraction layer, informational only
};

EmbeddingSet load_embeddings(const std::string& path);
void save_embeddings(const EmbeddingSet& set, const std::string& path);
EmbeddingEntry parse_embedding_label(const std::string& label);

// D_ij = 1 - <v_i, v_j> / (|v_i||v_j|); zero-norm vectors are rejected.
Eigen::MatrixXd cosine_distance_matrix(const EmbeddingSet& set);

struct TsneConfig {
    double perplexity = 10.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    int momentum_switch_iter = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    double perplexity_tolerance = 1e-5;
    int max_bisection_steps = 50;
};

struct Projection2D {
    Eigen::MatrixXd points; // n x 2
    double kl = 0.0;        // final KL divergence against the unexaggerated P
    uint64_t seed = 0;
    std::vector<double> achieved_perplexity;
    double kl_after_exaggeration = 0.0; // KL at the end of the exaggeration phase
};

// Symmetrized input affinities with per-point bandwidths calibrated by
// bisection to the requested perplexity.
Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& distances, const TsneConfig& cfg,
                                    std::vector<double>* achieved_perplexity = nullptr);

// KL(P||Q) for a 2-D map and its gradient; exposed so the descent direction
// can be checked independently.
double kl_divergence(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y);
Eigen::MatrixXd kl_gradient(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y);

Projection2D tsne(const Eigen::MatrixXd& distances, const TsneConfig& cfg, uint64_t seed);
Projection2D tsne(const EmbeddingSet& set, const TsneConfig& cfg, uint64_t seed);

// Independent runs, one per seed; all results retained, best = lowest KL.
std::vector<Projection2D> tsne_multi(const Eigen::MatrixXd& distances, const TsneConfig& cfg,
                                     const std::vector<uint64_t>& seeds, bool parallel = true);
const Projection2D& best_projection(const std::vector<Projection2D>& runs);

// Mean silhouette coefficient over all points (Euclidean distance in 2-D).
double cluster_separation(const Eigen::MatrixXd& points, const std::vector<int>& groups);
// Per-group mean silhouettes keyed by group id.
std::vector<std::pair<int, double>> silhouette_by_group(const Eigen::MatrixXd& points,
                                                        const std::vector<int>& groups);

void write_projection_csv(const std::vector<Projection2D>& runs, const EmbeddingSet& set,
                          const std::string& path);
void write_scatter_svg(const Projection2D& proj, const EmbeddingSet& set, const std::string& path);

} // namespace posetlab
