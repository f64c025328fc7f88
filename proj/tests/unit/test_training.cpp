#include <doctest.h>

#include "smoa/error.hpp"
#include "smoa/random.hpp"
#include "smoa/training.hpp"
#include "unit/support.hpp"

using namespace smoa;

namespace {

// Test-side finite differences on the batch MSE, independent of grad_check.
double fd_loss(const Adapter& a, const LinearTask& task) {
    const Matrix y = task.inputs * merge(a, task.w0).transpose();
    return (y - task.targets).squaredNorm() / static_cast<double>(y.size());
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("make_task: ranks, scaling and determinism") {
    const auto full = make_task({16, 16, 32, 0.0, 4});
    CHECK(testing::jacobi_rank(full.target_delta) == 16);
    const auto low = make_task({16, 3, 32, 0.0, 4});
    CHECK(testing::jacobi_rank(low.target_delta) == 3);
    CHECK(low.target_delta.norm() == doctest::Approx(0.1 * low.w0.norm()).epsilon(1e-12));
    CHECK(low.w0.norm() == doctest::Approx(16.0).epsilon(1e-12));

    const auto again = make_task({16, 3, 32, 0.0, 4});
    CHECK(bitwise_equal(low.w0, again.w0));
    CHECK(bitwise_equal(low.target_delta, again.target_delta));
    CHECK(bitwise_equal(low.inputs, again.inputs));
    CHECK(bitwise_equal(low.targets, again.targets));

    // Noiseless with n >= d: least squares recovers W0 + delta*.
    const Matrix solved = low.inputs.colPivHouseholderQr().solve(low.targets).transpose();
    CHECK((solved - (low.w0 + low.target_delta)).cwiseAbs().maxCoeff() < 1e-10);

    const auto noisy = make_task({16, 3, 32, 0.5, 4});
    CHECK((noisy.targets - low.targets).norm() > 0.0);
    CHECK_THROWS_AS(make_task({4, 5, 8, 0.0, 0}), Error);
}

TEST_CASE("synthetic weight spectra") {
    const auto dec = decompose(synthetic_weight(32, 32, 1));
    for (int i = 1; i < 32; ++i) {
        CHECK(dec.sigma(i) == doctest::Approx(dec.sigma(0) / std::sqrt(i + 1.0)).epsilon(1e-9));
    }
    const auto flat = decompose(synthetic_weight(8, 8, 1, SpectrumShape::equal));
    CHECK((flat.sigma.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("forward pass") {
    const auto task = make_task({12, 4, 20, 0.0, 2});
    for (auto kind : kAllKinds) {
        Adapter a = build_adapter(kind, make_config(12, 12, 3, 6, 1), task.w0);
        const Matrix base = task.inputs * task.w0.transpose();
        CHECK(bitwise_equal(forward(a, task.w0, task.inputs), base));

        Rng rng(8);
        a.randomize_factors(rng);
        const Matrix merged = merge(a, task.w0);
        CHECK((forward(a, task.w0, task.inputs) - task.inputs * merged.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        const Matrix probe = forward(a, task.w0, Matrix::Identity(12, 12));
        CHECK((probe - merged.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    }
    Adapter a = build_smoa(make_config(12, 12, 2, 4, 0), task.w0);
    CHECK_THROWS_AS(forward(a, task.w0, Matrix::Ones(3, 11)), Error);
}

TEST_CASE("backward matches finite differences") {
    const auto task = make_task({16, 8, 32, 0.1, 6});
    for (auto kind : kAllKinds) {
        Adapter a = build_adapter(kind, make_config(16, 16, 2, 4, 6), task.w0);
        Rng rng(kind == AdapterKind::smoa ? 1 : 2);
        a.randomize_factors(rng, 0.5);
        const Matrix pred = forward(a, task.w0, task.inputs);
        const auto g = backward(a, task.inputs, mse_gradient(pred, task.targets));
        const double h = 1e-5;
        double worst = 0.0;
        for (int k = 0; k < a.num_blocks(); ++k) {
            for (int which = 0; which < 2; ++which) {
                Matrix& p = which == 0 ? a.a(k) : a.b(k);
                const Matrix& grad = which == 0 ? g.dA[static_cast<std::size_t>(k)] : g.dB[static_cast<std::size_t>(k)];
                for (Eigen::Index i = 0; i < p.rows(); ++i) {
                    for (Eigen::Index j = 0; j < p.cols(); ++j) {
                        const double keep = p(i, j);
                        p(i, j) = keep + h;
                        const double up = fd_loss(a, task);
                        p(i, j) = keep - h;
                        const double down = fd_loss(a, task);
                        p(i, j) = keep;
                        worst = std::max(worst, rel_err(grad(i, j), (up - down) / (2 * h)));
                    }
                }
            }
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("backward: zero cases") {
    const auto task = make_task({8, 2, 16, 0.0, 1});
    Adapter a = build_smoa(make_config(8, 8, 2, 4, 1), task.w0);
    Rng rng(3);
    a.randomize_factors(rng);
    const auto g = backward(a, task.inputs, Matrix::Zero(16, 8));
    for (const auto& m : g.dA) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& m : g.dB) CHECK(m.cwiseAbs().maxCoeff() == 0.0);

    // Empty subspace: the zero mask annihilates its gradients.
    Rng basis(4);
    Vector s(6);
    s << 100, 1, 1, 1, 1, 1;
    const Matrix w = basis.orthogonal(6) * s.asDiagonal() * basis.orthogonal(6).transpose();
    Adapter e = build_smoa(make_config(6, 6, 3, 3, 0), w);
    e.randomize_factors(basis);
    const Matrix x = basis.gaussian(10, 6);
    const auto ge = backward(e, x, basis.gaussian(10, 6));
    CHECK(ge.dA[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(ge.dB[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(ge.dA[2].cwiseAbs().maxCoeff() > 0.0);
    CHECK_THROWS_AS(backward(e, x, Matrix::Zero(9, 6)), Error);
}

TEST_CASE("grad_check: reference instance, stationary point, corrupted gradient") {
    auto task = make_task({8, 4, 16, 0.1, 2});
    Adapter a = build_smoa(make_config(8, 8, 2, 4, 2), task.w0);
    Rng rng(12);
    a.randomize_factors(rng, 0.5);

    const auto ok = grad_check(a, task);
    CHECK(ok.entries_checked == static_cast<std::size_t>(a.param_count()));
    CHECK(ok.max_rel_error <= 1e-6);
    CHECK(ok.passed);

    GradCheckOptions corrupt;
    corrupt.corrupt = true;
    const auto bad = grad_check(a, task, corrupt);
    CHECK_FALSE(bad.passed);
    CHECK(bad.max_rel_error == doctest::Approx(2.0).epsilon(1e-6));

    task.targets = forward(a, task.w0, task.inputs);
    const auto flat = grad_check(a, task);
    CHECK(flat.loss == 0.0);
    CHECK(flat.max_rel_error <= 1e-6);
    CHECK(std::abs(flat.worst.analytic) == 0.0);

    GradCheckOptions bad_h;
    bad_h.h = 1e-2;
    CHECK_THROWS_AS(grad_check(a, task, bad_h), Error);
}

TEST_CASE("grad_check subsamples large adapters") {
    const auto task = make_task({48, 8, 64, 0.0, 1});
    Adapter a = build_baseline(AdapterKind::lora, make_config(48, 48, 1, 8, 1), task.w0);
    Rng rng(2);
    a.randomize_factors(rng, 0.3);
    GradCheckOptions opts;
    opts.max_entries = 250;
    const auto report = grad_check(a, task, opts);
    CHECK(report.total_entries == 768);
    CHECK(report.entries_checked == 250);
    CHECK(report.passed);
}

TEST_CASE("train: optimum at init stays put") {
    const auto task = make_task({16, 0, 32, 0.0, 3});
    Adapter a = build_smoa(make_config(16, 16, 2, 4, 3), task.w0);
    TrainState state;
    const auto losses = train(a, task, 50, state);
    CHECK(losses.size() == 51);
    CHECK(losses.front() == 0.0);
    for (double l : losses) CHECK(l <= losses.front());
}

TEST_CASE("train: low-rank planted update converges, deterministically, with frozen weights intact") {
    const auto task = make_task({16, 2, 64, 0.0, 5});
    const Matrix w0_before = task.w0;
    auto run = [&] {
        Adapter a = build_baseline(AdapterKind::lora, make_config(16, 16, 1, 4, 5), task.w0);
        TrainState state(OptimizerSettings{});
        return std::pair{train(a, task, 2000, state), a};
    };
    const auto [losses, adapter] = run();
    CHECK(losses.back() <= 1e-4 * losses.front());
    const auto [again, unused] = run();
    CHECK(losses == again);
    CHECK(bitwise_equal(task.w0, w0_before));

    Adapter s = build_smoa(make_config(16, 16, 2, 4, 5), task.w0);
    std::vector<Matrix> masks;
    for (int k = 0; k < s.num_blocks(); ++k) masks.push_back(*s.block(k).mask);
    TrainState state;
    train(s, task, 100, state);
    for (int k = 0; k < s.num_blocks(); ++k) CHECK(bitwise_equal(*s.block(k).mask, masks[static_cast<std::size_t>(k)]));
    CHECK(state.step() == 100);
}

TEST_CASE("train: divergence is reported with the step index") {
    const auto task = make_task({8, 4, 16, 0.0, 1});
    Adapter a = build_baseline(AdapterKind::lora, make_config(8, 8, 1, 2, 1), task.w0);
    OptimizerSettings wild;
    wild.learning_rate = 1e300;
    TrainState state(wild);
    try {
        train(a, task, 10, state);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numerical);
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
    TrainState fresh;
    CHECK_THROWS_AS(train(a, task, 0, fresh), Error);
}
