// Serial reference loops against the OpenMP kernels at the shapes the
// default network sees, plus a forest fit.

#include <benchmark/benchmark.h>

#include <vector>

#include "exprsaug/kernels.hpp"
#include "exprsaug/mlp.hpp"
#include "exprsaug/random.hpp"
#include "exprsaug/rf.hpp"

namespace {

using exprsaug::Matrix;
using exprsaug::Rng;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double zero_fraction = 0.0) {
    Rng rng(seed);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.uniform() < zero_fraction ? 0.0 : rng.normal();
    return m;
}

// Args: batch, in, out.
void bm_forward_parallel(benchmark::State& st) {
    auto x = random_matrix(st.range(0), st.range(1), 1);
    auto w = random_matrix(st.range(2), st.range(1), 2);
    std::vector<double> b(st.range(2), 0.1);
    Matrix z;
    for (auto _ : st) {
        exprsaug::kernels::affine_forward(x, w, b, z);
        benchmark::DoNotOptimize(z.data());
    }
    st.SetItemsProcessed(st.iterations() * 2 * st.range(0) * st.range(1) * st.range(2));
}

void bm_forward_serial(benchmark::State& st) {
    auto x = random_matrix(st.range(0), st.range(1), 1);
    auto w = random_matrix(st.range(2), st.range(1), 2);
    std::vector<double> b(st.range(2), 0.1);
    Matrix z;
    for (auto _ : st) {
        exprsaug::kernels::serial::affine_forward(x, w, b, z);
        benchmark::DoNotOptimize(z.data());
    }
    st.SetItemsProcessed(st.iterations() * 2 * st.range(0) * st.range(1) * st.range(2));
}

void bm_weight_grad_parallel(benchmark::State& st) {
    auto dz = random_matrix(st.range(0), st.range(2), 3, 0.75);
    auto a = random_matrix(st.range(0), st.range(1), 4);
    Matrix dw;
    std::vector<double> db(st.range(2));
    for (auto _ : st) {
        exprsaug::kernels::weight_gradient(dz, a, dw, db);
        benchmark::DoNotOptimize(dw.data());
    }
}

void bm_weight_grad_serial(benchmark::State& st) {
    auto dz = random_matrix(st.range(0), st.range(2), 3, 0.75);
    auto a = random_matrix(st.range(0), st.range(1), 4);
    Matrix dw;
    std::vector<double> db(st.range(2));
    for (auto _ : st) {
        exprsaug::kernels::serial::weight_gradient(dz, a, dw, db);
        benchmark::DoNotOptimize(dw.data());
    }
}

void bm_input_grad_parallel(benchmark::State& st) {
    auto dz = random_matrix(st.range(0), st.range(2), 5, 0.75);
    auto w = random_matrix(st.range(2), st.range(1), 6);
    Matrix da;
    for (auto _ : st) {
        exprsaug::kernels::input_gradient(dz, w, da);
        benchmark::DoNotOptimize(da.data());
    }
}

void bm_input_grad_serial(benchmark::State& st) {
    auto dz = random_matrix(st.range(0), st.range(2), 5, 0.75);
    auto w = random_matrix(st.range(2), st.range(1), 6);
    Matrix da;
    for (auto _ : st) {
        exprsaug::kernels::serial::input_gradient(dz, w, da);
        benchmark::DoNotOptimize(da.data());
    }
}

exprsaug::kernels::AdamCoefficients adam_coefficients() { return {0.001, 0.9, 0.999, 1e-8, 0.1, 0.001}; }

void bm_adam_parallel(benchmark::State& st) {
    std::vector<double> p(st.range(0), 0.5), g(st.range(0), 0.01), m(st.range(0)), v(st.range(0));
    const auto c = adam_coefficients();
    for (auto _ : st) {
        exprsaug::kernels::adam_update(p, g, m, v, c);
        benchmark::DoNotOptimize(p.data());
    }
}

void bm_adam_serial(benchmark::State& st) {
    std::vector<double> p(st.range(0), 0.5), g(st.range(0), 0.01), m(st.range(0)), v(st.range(0));
    const auto c = adam_coefficients();
    for (auto _ : st) {
        exprsaug::kernels::serial::adam_update(p, g, m, v, c);
        benchmark::DoNotOptimize(p.data());
    }
}

void bm_train_epoch(benchmark::State& st) {
    const std::size_t n = 240, p = static_cast<std::size_t>(st.range(0));
    auto x = random_matrix(n, p, 7);
    for (double& v : x.values()) v = v < 0 ? -v : v;
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 5);
    exprsaug::mlp::MlpConfig config;
    config.epochs = 1;
    for (auto _ : st) {
        auto r = exprsaug::mlp::train(x, y, {"a", "b", "c", "d", "e"}, config);
        benchmark::DoNotOptimize(r.loss_history.data());
    }
}

void bm_fit_forest(benchmark::State& st) {
    const std::size_t n = 240, p = static_cast<std::size_t>(st.range(0));
    auto x = random_matrix(n, p, 8);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 5);
    std::vector<std::string> ids(p);
    for (std::size_t j = 0; j < p; ++j) ids[j] = "f" + std::to_string(j);
    for (auto _ : st) {
        auto f = exprsaug::rf::fit_forest(x, y, {"a", "b", "c", "d", "e"}, ids, 100, 0, 1);
        benchmark::DoNotOptimize(f.importances.data());
    }
}

}  // namespace

BENCHMARK(bm_forward_parallel)->Args({30, 2000, 1000})->Args({30, 1000, 250})->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_forward_serial)->Args({30, 2000, 1000})->Args({30, 1000, 250})->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_weight_grad_parallel)->Args({30, 2000, 1000})->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_weight_grad_serial)->Args({30, 2000, 1000})->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_input_grad_parallel)->Args({30, 1000, 250})->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_input_grad_serial)->Args({30, 1000, 250})->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_adam_parallel)->Arg(2'000'000)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_adam_serial)->Arg(2'000'000)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_train_epoch)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_fit_forest)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
