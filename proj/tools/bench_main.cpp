// Timing harness comparing the serial reference kernels against their OpenMP
// counterparts. Results must agree exactly: work is split per trial with
// per-trial seeds and reduced in a fixed order.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include <omp.h>

#include "posetlab/meta.hpp"
#include "posetlab/tsne.hpp"
#include "posetlab/rng.hpp"

using namespace posetlab;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct Timing {
    double serial = 0.0;
    double parallel = 0.0;
};

void report(const char* name, const Timing& t, bool equal) {
    std::printf("%-28s serial %8.3fs  parallel %8.3fs  speedup %5.2fx  identical: %s\n", name,
                t.serial, t.parallel, t.serial / t.parallel, equal ? "yes" : "NO");
}

bool curves_equal(const SaturationCurve& a, const SaturationCurve& b) {
    if (a.points.size() != b.points.size()) return false;
    for (size_t i = 0; i < a.points.size(); ++i) {
        if (a.points[i].k != b.points[i].k) return false;
        if (a.points[i].mean != b.points[i].mean) return false;
        if (a.points[i].stddev != b.points[i].stddev) return false;
    }
    return true;
}

} // namespace

int main() {
    std::printf("threads available: %d\n\n", omp_get_max_threads());

    {
        Timing t;
        double t0 = now_seconds();
        const auto serial = verify_theorem1(16, 32, 20, 7, false);
        t.serial = now_seconds() - t0;
        t0 = now_seconds();
        const auto parallel = verify_theorem1(16, 32, 20, 7, true);
        t.parallel = now_seconds() - t0;
        bool equal = serial.size() == parallel.size();
        for (size_t i = 0; equal && i < serial.size(); ++i)
            equal = serial[i].rank == parallel[i].rank;
        report("theorem1 (d=16,k<=32,t=20)", t, equal);
    }

    {
        std::vector<int> ks;
        for (int k = 1; k <= 32; ++k) ks.push_back(k);
        Timing t;
        double t0 = now_seconds();
        const auto serial = ols_saturation_curve(16, 0.05, ks, 500, 5, 7, false);
        t.serial = now_seconds() - t0;
        t0 = now_seconds();
        const auto parallel = ols_saturation_curve(16, 0.05, ks, 500, 5, 7, true);
        t.parallel = now_seconds() - t0;
        report("ols curve (500 trials x 5)", t, curves_equal(serial, parallel));
    }

    {
        std::vector<int> ks{4, 8, 16, 24, 32};
        const LinearAttentionModel model = LinearAttentionModel::initial(16, 48);
        Timing t;
        double t0 = now_seconds();
        const auto serial = evaluate_linear_attention(model, 0.05, ks, 500, 3, 7, false);
        t.serial = now_seconds() - t0;
        t0 = now_seconds();
        const auto parallel = evaluate_linear_attention(model, 0.05, ks, 500, 3, 7, true);
        t.parallel = now_seconds() - t0;
        report("linear attention eval", t, curves_equal(serial, parallel));
    }

    {
        TrainConfig cfg;
        cfg.steps = 60;
        cfg.batch = 64;
        cfg.layers = 32;
        Timing t;
        double t0 = now_seconds();
        cfg.parallel = false;
        const auto serial = train_linear_attention(cfg);
        t.serial = now_seconds() - t0;
        t0 = now_seconds();
        cfg.parallel = true;
        const auto parallel = train_linear_attention(cfg);
        t.parallel = now_seconds() - t0;
        bool equal = serial.losses == parallel.losses &&
                     (serial.model.A - parallel.model.A).cwiseAbs().maxCoeff() == 0.0;
        report("linear attention train", t, equal);
    }

    {
        // Synthetic blobs for the multi-restart projection kernel.
        EmbeddingSet set;
        set.dim = 16;
        std::mt19937_64 rng = make_rng(11);
        std::normal_distribution<double> noise(0.0, 0.05);
        for (int g = 0; g < 3; ++g) {
            for (int i = 0; i < 10; ++i) {
                EmbeddingEntry e;
                e.label = "LO_" + std::to_string((g + 1) * 10);
                e.task = "LO";
                e.k = (g + 1) * 10;
                e.vector = Eigen::VectorXd::Zero(16);
                e.vector(2 * g) = 1.0;
                for (int j = 0; j < 16; ++j) e.vector(j) += noise(rng);
                set.entries.push_back(e);
            }
        }
        const Eigen::MatrixXd dist = cosine_distance_matrix(set);
        TsneConfig cfg;
        std::vector<uint64_t> seeds;
        for (uint64_t s = 0; s < 8; ++s) seeds.push_back(derive_seed(3, s));
        Timing t;
        double t0 = now_seconds();
        const auto serial = tsne_multi(dist, cfg, seeds, false);
        t.serial = now_seconds() - t0;
        t0 = now_seconds();
        const auto parallel = tsne_multi(dist, cfg, seeds, true);
        t.parallel = now_seconds() - t0;
        bool equal = serial.size() == parallel.size();
        for (size_t i = 0; equal && i < serial.size(); ++i)
            equal = serial[i].kl == parallel[i].kl &&
                    (serial[i].points - parallel[i].points).cwiseAbs().maxCoeff() == 0.0;
        report("tsne (8 restarts)", t, equal);
    }

    return 0;
}
