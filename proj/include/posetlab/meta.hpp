#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace posetlab {

struct TrainingError : std::runtime_error {
    int step;
    TrainingError(const std::string& what, int step_) : std::runtime_error(what), step(step_) {}
};

// Value/key projections, zero-shot component, and demonstration embeddings of
// one linear-attention layer.
struct AttentionContext {
    int d = 0;
    Eigen::MatrixXd W_V;
    Eigen::MatrixXd W_K;
    Eigen::MatrixXd W_ZSL;
    std::vector<Eigen::VectorXd> demos;

    void validate() const;
};

// Sum of rank-1 updates (W_V x'_i)(W_K x'_i)^T contributed by the demos.
Eigen::MatrixXd delta_w_icl(const AttentionContext& ctx);

// W_ZSL q + delta_w_icl(ctx) q.
Eigen::VectorXd icl_forward(const AttentionContext& ctx, const Eigen::VectorXd& q);

// Count of singular values above rel_tol * sigma_max.
int numerical_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

struct TheoremPoint {
    int k = 0;
    int trial = 0;
    int rank = 0;
};

// Draws Gaussian projections (entries N(0,1)/sqrt(d)) and demos (N(0,1)) and
// reports the observed rank of the accumulated update for each shot count.
std::vector<TheoremPoint> verify_theorem1(int d, int k_max, int trials, uint64_t seed,
                                          bool parallel = true);

AttentionContext random_attention_context(int d, int k, uint64_t seed);

// --- synthetic in-context regression -----------------------------------------

struct RegressionTask {
    Eigen::MatrixXd X;     // k x d demonstrations
    Eigen::VectorXd y;     // k noisy responses
    Eigen::VectorXd query; // query input
    double target = 0.0;   // noisy query response
};

RegressionTask sample_regression_task(int d, double sigma, int k, std::mt19937_64& rng);

struct CurvePoint {
    int k = 0;
    double mean = 0.0;
    double stddev = 0.0; // across seed replicates
};

struct SaturationCurve {
    std::vector<CurvePoint> points;
    int threshold = 0;                          // the embedding dimension d
    std::vector<std::vector<double>> seed_means; // [point][seed]

    const CurvePoint& at_k(int k) const;
};

// Minimum-norm least squares fitted on the k demos, squared error on the
// query, averaged over trials; one replicate per seed.
SaturationCurve ols_saturation_curve(int d, double sigma, const std::vector<int>& k_list,
                                     int trials, int n_seeds, uint64_t seed, bool parallel = true);

// --- trained in-context learner ----------------------------------------------
//
// L stacked linear-attention refinement steps with a momentum carry:
//   state w_0 = 0,  g_t = (S w_{t-1} - b) / s_hat,
//   w_t = w_{t-1} - eta * A g_t + mu * (w_{t-1} - w_{t-2}),
// where S = sum_i x_i x_i^T and b = sum_i x_i y_i are the attention aggregates
// of the demos and s_hat is a per-task Gershgorin bound on ||S|| keeping the
// iteration contractive for every draw. Prediction is q^T w_L. Trainable
// parameters: the d x d preconditioner A and the scalars eta, mu. With
// layers = 1 this reduces to q^T A (sum_i x_i y_i) up to a per-task scale.

struct LinearAttentionModel {
    int d = 16;
    int layers = 48;
    Eigen::MatrixXd A;
    double eta = 1.0;
    double mu = 0.5;

    static LinearAttentionModel initial(int d, int layers);
};

double la_predict(const LinearAttentionModel& m, const RegressionTask& task);

struct LaGradients {
    Eigen::MatrixXd A;
    double eta = 0.0;
    double mu = 0.0;
};

// Squared error on the task's query plus its gradient w.r.t. all parameters.
double la_loss_and_grad(const LinearAttentionModel& m, const RegressionTask& task,
                        LaGradients& grad);

struct TrainConfig {
    int d = 16;
    int layers = 48;
    int steps = 3000;
    double lr = 1e-3;
    int lr_decay_every = 500;
    double lr_decay = 0.5;
    int batch = 128;
    double sigma = 0.05;
    int k_min = 1;
    int k_max = 32;
    uint64_t seed = 0;
    bool parallel = true;
};

struct TrainResult {
    LinearAttentionModel model;
    std::vector<double> losses; // per-step batch means
};

TrainResult train_linear_attention(const TrainConfig& cfg);

SaturationCurve evaluate_linear_attention(const LinearAttentionModel& m, double sigma,
                                          const std::vector<int>& k_list, int trials, int n_seeds,
                                          uint64_t seed, bool parallel = true);

void write_theorem_csv(const std::vector<TheoremPoint>& points, const std::string& path);
void write_curve_csv(const SaturationCurve& curve, const std::string& path);

} // namespace posetlab
