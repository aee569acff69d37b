#include "posetlab/meta.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "posetlab/rng.hpp"

namespace posetlab {

namespace {

constexpr uint64_t kTheoremSalt = 0x7468656f72656d31ULL;
constexpr uint64_t kOlsSalt = 0x6f6c735f63757276ULL;
constexpr uint64_t kTrainSalt = 0x747261696e5f6c61ULL;
constexpr uint64_t kEvalSalt = 0x6576616c5f6c6174ULL;

Eigen::MatrixXd gaussian_matrix(int rows, int cols, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * normal(rng);
    return m;
}

Eigen::VectorXd gaussian_vector(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

} // namespace

void AttentionContext::validate() const {
    if (d < 1) throw std::invalid_argument("AttentionContext: d must be >= 1");
    auto check = [&](const Eigen::MatrixXd& m, const char* name) {
        if (m.rows() != d || m.cols() != d)
            throw std::invalid_argument(std::string("AttentionContext: ") + name + " must be d x d");
    };
    check(W_V, "W_V");
    check(W_K, "W_K");
    check(W_ZSL, "W_ZSL");
    for (const auto& x : demos) {
        if (x.size() != d) throw std::invalid_argument("AttentionContext: demo dimension mismatch");
    }
}

Eigen::MatrixXd delta_w_icl(const AttentionContext& ctx) {
    ctx.validate();
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(ctx.d, ctx.d);
    for (const auto& x : ctx.demos) {
        const Eigen::VectorXd u = ctx.W_V * x;
        const Eigen::VectorXd v = ctx.W_K * x;
        delta.noalias() += u * v.transpose();
    }
    return delta;
}

Eigen::VectorXd icl_forward(const AttentionContext& ctx, const Eigen::VectorXd& q) {
    ctx.validate();
    if (q.size() != ctx.d) throw std::invalid_argument("icl_forward: query dimension mismatch");
    return ctx.W_ZSL * q + delta_w_icl(ctx) * q;
}

int numerical_rank(const Eigen::MatrixXd& m, double rel_tol) {
    if (!m.allFinite()) throw std::invalid_argument("numerical_rank: non-finite entries");
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    const double top = sv.size() > 0 ? sv(0) : 0.0;
    if (top <= 0.0) return 0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * top) ++rank;
    return rank;
}

AttentionContext random_attention_context(int d, int k, uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed);
    AttentionContext ctx;
    ctx.d = d;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    ctx.W_V = gaussian_matrix(d, d, scale, rng);
    ctx.W_K = gaussian_matrix(d, d, scale, rng);
    ctx.W_ZSL = gaussian_matrix(d, d, scale, rng);
    ctx.demos.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) ctx.demos.push_back(gaussian_vector(d, rng));
    return ctx;
}

std::vector<TheoremPoint> verify_theorem1(int d, int k_max, int trials, uint64_t seed,
                                          bool parallel) {
    if (d < 1 || k_max < 1 || trials < 1)
        throw std::invalid_argument("verify_theorem1: d, k_max, trials must be >= 1");
    std::vector<TheoremPoint> out(static_cast<size_t>(k_max) * trials);
    const int jobs = k_max * trials;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int j = 0; j < jobs; ++j) {
        const int k = j / trials + 1;
        const int trial = j % trials;
        const AttentionContext ctx = random_attention_context(
            d, k, derive_seed(seed ^ kTheoremSalt, static_cast<uint64_t>(k), static_cast<uint64_t>(trial)));
        out[static_cast<size_t>(j)] = {k, trial, numerical_rank(delta_w_icl(ctx))};
    }
    return out;
}

RegressionTask sample_regression_task(int d, double sigma, int k, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    RegressionTask task;
    Eigen::VectorXd w = gaussian_vector(d, rng);
    task.X = gaussian_matrix(k, d, 1.0, rng);
    task.y = task.X * w;
    for (int i = 0; i < k; ++i) task.y(i) += sigma * normal(rng);
    task.query = gaussian_vector(d, rng);
    task.target = task.query.dot(w) + sigma * normal(rng);
    return task;
}

const CurvePoint& SaturationCurve::at_k(int k) const {
    for (const CurvePoint& p : points)
        if (p.k == k) return p;
    throw std::out_of_range("SaturationCurve: no point at k=" + std::to_string(k));
}

SaturationCurve ols_saturation_curve(int d, double sigma, const std::vector<int>& k_list,
                                     int trials, int n_seeds, uint64_t seed, bool parallel) {
    if (d < 1 || k_list.empty() || trials < 1 || n_seeds < 1)
        throw std::invalid_argument("ols_saturation_curve: bad arguments");

    SaturationCurve curve;
    curve.threshold = d;
    curve.points.resize(k_list.size());
    curve.seed_means.assign(k_list.size(), std::vector<double>(static_cast<size_t>(n_seeds), 0.0));

    const int jobs = static_cast<int>(k_list.size()) * n_seeds;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int j = 0; j < jobs; ++j) {
        const size_t ki = static_cast<size_t>(j) / n_seeds;
        const int s = j % n_seeds;
        const int k = k_list[ki];
        double acc = 0.0;
        for (int t = 0; t < trials; ++t) {
            std::mt19937_64 rng = make_rng(derive_seed(seed ^ kOlsSalt, static_cast<uint64_t>(s),
                                                       static_cast<uint64_t>(k),
                                                       static_cast<uint64_t>(t)));
            const RegressionTask task = sample_regression_task(d, sigma, k, rng);
            const Eigen::VectorXd w_hat =
                task.X.completeOrthogonalDecomposition().solve(task.y);
            const double err = task.query.dot(w_hat) - task.target;
            acc += err * err;
        }
        curve.seed_means[ki][static_cast<size_t>(s)] = acc / static_cast<double>(trials);
    }

    for (size_t ki = 0; ki < k_list.size(); ++ki) {
        double mean = 0.0;
        for (double v : curve.seed_means[ki]) mean += v;
        mean /= static_cast<double>(n_seeds);
        curve.points[ki] = {k_list[ki], mean, sample_std(curve.seed_means[ki])};
    }
    return curve;
}

LinearAttentionModel LinearAttentionModel::initial(int d, int layers) {
    LinearAttentionModel m;
    m.d = d;
    m.layers = layers;
    m.A = 0.8 * Eigen::MatrixXd::Identity(d, d);
    m.eta = 1.0;
    m.mu = 0.5;
    return m;
}

namespace {

struct TaskAggregates {
    Eigen::MatrixXd S;
    Eigen::VectorXd b;
    double s_hat; // Gershgorin bound on the spectral norm of S
};

TaskAggregates aggregates(const RegressionTask& task) {
    TaskAggregates agg;
    agg.S.noalias() = task.X.transpose() * task.X;
    agg.b.noalias() = task.X.transpose() * task.y;
    agg.s_hat = agg.S.cwiseAbs().rowwise().sum().maxCoeff() + 1e-12;
    return agg;
}

} // namespace

double la_predict(const LinearAttentionModel& m, const RegressionTask& task) {
    const TaskAggregates agg = aggregates(task);
    Eigen::VectorXd w_prev = Eigen::VectorXd::Zero(m.d);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m.d);
    for (int t = 0; t < m.layers; ++t) {
        const Eigen::VectorXd g = (agg.S * w - agg.b) / agg.s_hat;
        const Eigen::VectorXd w_new = w - m.eta * (m.A * g) + m.mu * (w - w_prev);
        w_prev = w;
        w = w_new;
    }
    return task.query.dot(w);
}

double la_loss_and_grad(const LinearAttentionModel& m, const RegressionTask& task,
                        LaGradients& grad) {
    const int d = m.d;
    const int L = m.layers;
    const TaskAggregates agg = aggregates(task);

    // Forward pass, keeping every iterate for the reverse sweep.
    std::vector<Eigen::VectorXd> ws(static_cast<size_t>(L) + 1, Eigen::VectorXd::Zero(d));
    std::vector<Eigen::VectorXd> gs(static_cast<size_t>(L), Eigen::VectorXd::Zero(d));
    for (int t = 1; t <= L; ++t) {
        gs[static_cast<size_t>(t - 1)] = (agg.S * ws[static_cast<size_t>(t - 1)] - agg.b) / agg.s_hat;
        const Eigen::VectorXd& w_tm1 = ws[static_cast<size_t>(t - 1)];
        const Eigen::VectorXd w_tm2 =
            t >= 2 ? ws[static_cast<size_t>(t - 2)] : Eigen::VectorXd::Zero(d);
        ws[static_cast<size_t>(t)] =
            w_tm1 - m.eta * (m.A * gs[static_cast<size_t>(t - 1)]) + m.mu * (w_tm1 - w_tm2);
    }
    const double y_hat = task.query.dot(ws[static_cast<size_t>(L)]);
    const double loss = (y_hat - task.target) * (y_hat - task.target);

    grad.A = Eigen::MatrixXd::Zero(d, d);
    grad.eta = 0.0;
    grad.mu = 0.0;

    std::vector<Eigen::VectorXd> adj(static_cast<size_t>(L) + 1, Eigen::VectorXd::Zero(d));
    adj[static_cast<size_t>(L)] = 2.0 * (y_hat - task.target) * task.query;
    for (int t = L; t >= 1; --t) {
        const Eigen::VectorXd& delta = adj[static_cast<size_t>(t)];
        const Eigen::VectorXd& g = gs[static_cast<size_t>(t - 1)];
        const Eigen::VectorXd& w_tm1 = ws[static_cast<size_t>(t - 1)];
        const Eigen::VectorXd w_tm2 =
            t >= 2 ? ws[static_cast<size_t>(t - 2)] : Eigen::VectorXd::Zero(d);

        grad.A.noalias() += -m.eta * (delta * g.transpose());
        grad.eta += -delta.dot(m.A * g);
        grad.mu += delta.dot(w_tm1 - w_tm2);

        adj[static_cast<size_t>(t - 1)] +=
            (1.0 + m.mu) * delta - (m.eta / agg.s_hat) * (agg.S * (m.A.transpose() * delta));
        if (t >= 2) adj[static_cast<size_t>(t - 2)] += -m.mu * delta;
    }
    return loss;
}

TrainResult train_linear_attention(const TrainConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("train_linear_attention: steps must be >= 1");
    if (cfg.batch < 1) throw std::invalid_argument("train_linear_attention: batch must be >= 1");
    if (cfg.k_min < 1 || cfg.k_max < cfg.k_min)
        throw std::invalid_argument("train_linear_attention: bad k range");

    TrainResult result;
    result.model = LinearAttentionModel::initial(cfg.d, cfg.layers);
    result.losses.reserve(static_cast<size_t>(cfg.steps));

    std::vector<LaGradients> slots(static_cast<size_t>(cfg.batch));
    std::vector<double> losses(static_cast<size_t>(cfg.batch));

    double lr = cfg.lr;
    for (int step = 0; step < cfg.steps; ++step) {
        if (step > 0 && cfg.lr_decay_every > 0 && step % cfg.lr_decay_every == 0)
            lr *= cfg.lr_decay;

#pragma omp parallel for schedule(static) if (cfg.parallel)
        for (int e = 0; e < cfg.batch; ++e) {
            std::mt19937_64 rng = make_rng(derive_seed(cfg.seed ^ kTrainSalt,
                                                       static_cast<uint64_t>(step),
                                                       static_cast<uint64_t>(e)));
            std::uniform_int_distribution<int> k_dist(cfg.k_min, cfg.k_max);
            const int k = k_dist(rng);
            const RegressionTask task = sample_regression_task(cfg.d, cfg.sigma, k, rng);
            losses[static_cast<size_t>(e)] =
                la_loss_and_grad(result.model, task, slots[static_cast<size_t>(e)]);
        }

        // Ordered reduction keeps results identical for any thread count.
        Eigen::MatrixXd gA = Eigen::MatrixXd::Zero(cfg.d, cfg.d);
        double g_eta = 0.0, g_mu = 0.0, loss = 0.0;
        for (int e = 0; e < cfg.batch; ++e) {
            gA += slots[static_cast<size_t>(e)].A;
            g_eta += slots[static_cast<size_t>(e)].eta;
            g_mu += slots[static_cast<size_t>(e)].mu;
            loss += losses[static_cast<size_t>(e)];
        }
        const double inv = 1.0 / static_cast<double>(cfg.batch);
        loss *= inv;
        if (!std::isfinite(loss))
            throw TrainingError("training loss diverged at step " + std::to_string(step), step);
        result.model.A -= lr * inv * gA;
        result.model.eta -= lr * inv * g_eta;
        result.model.mu -= lr * inv * g_mu;
        result.losses.push_back(loss);
    }
    return result;
}

SaturationCurve evaluate_linear_attention(const LinearAttentionModel& m, double sigma,
                                          const std::vector<int>& k_list, int trials, int n_seeds,
                                          uint64_t seed, bool parallel) {
    if (k_list.empty() || trials < 1 || n_seeds < 1)
        throw std::invalid_argument("evaluate_linear_attention: bad arguments");
    SaturationCurve curve;
    curve.threshold = m.d;
    curve.points.resize(k_list.size());
    curve.seed_means.assign(k_list.size(), std::vector<double>(static_cast<size_t>(n_seeds), 0.0));

    const int jobs = static_cast<int>(k_list.size()) * n_seeds;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int j = 0; j < jobs; ++j) {
        const size_t ki = static_cast<size_t>(j) / n_seeds;
        const int s = j % n_seeds;
        const int k = k_list[ki];
        double acc = 0.0;
        for (int t = 0; t < trials; ++t) {
            std::mt19937_64 rng = make_rng(derive_seed(seed ^ kEvalSalt, static_cast<uint64_t>(s),
                                                       static_cast<uint64_t>(k),
                                                       static_cast<uint64_t>(t)));
            const RegressionTask task = sample_regression_task(m.d, sigma, k, rng);
            const double err = la_predict(m, task) - task.target;
            acc += err * err;
        }
        curve.seed_means[ki][static_cast<size_t>(s)] = acc / static_cast<double>(trials);
    }

    for (size_t ki = 0; ki < k_list.size(); ++ki) {
        double mean = 0.0;
        for (double v : curve.seed_means[ki]) mean += v;
        mean /= static_cast<double>(n_seeds);
        curve.points[ki] = {k_list[ki], mean, sample_std(curve.seed_means[ki])};
    }
    return curve;
}

void write_theorem_csv(const std::vector<TheoremPoint>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "k,rank\n";
    for (const TheoremPoint& p : points) out << p.k << ',' << p.rank << "\n";
}

void write_curve_csv(const SaturationCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << "k,mean,std\n";
    char mean_buf[64], std_buf[64];
    for (const CurvePoint& p : curve.points) {
        std::snprintf(mean_buf, sizeof mean_buf, "%.17g", p.mean);
        std::snprintf(std_buf, sizeof std_buf, "%.17g", p.stddev);
        out << p.k << ',' << mean_buf << ',' << std_buf << "\n";
    }
}

} // namespace posetlab
