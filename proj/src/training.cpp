#include "smoa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "smoa/error.hpp"
#include "smoa/random.hpp"

namespace smoa {

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

auto cols_of(const Matrix& m, IndexRange r) { return m.middleCols(idx(r.begin), idx(r.size())); }

}  // namespace

Matrix synthetic_weight(int d_out, int d_in, std::uint64_t seed, SpectrumShape shape) {
    if (d_out < 1 || d_in < 1) {
        fail(ErrorKind::validation, "synthetic_weight: dimensions must be ≥ 1");
    }
    const int p = std::min(d_out, d_in);
    Rng rng(seed, {fnv1a("weight")});
    const Matrix u = rng.orthogonal(d_out);
    const Matrix v = rng.orthogonal(d_in);
    Vector sigma(p);
    for (int i = 0; i < p; ++i) {
        sigma(i) = shape == SpectrumShape::decaying ? 1.0 / std::sqrt(static_cast<double>(i + 1)) : 1.0;
    }
    if (shape == SpectrumShape::decaying) {
        sigma *= std::sqrt(static_cast<double>(d_out) * d_in) / sigma.norm();
    }
    return u.leftCols(p) * sigma.asDiagonal() * v.leftCols(p).transpose();
}

LinearTask make_task(const TaskSpec& spec) {
    if (spec.d < 1 || spec.n_samples < 1) {
        fail(ErrorKind::validation, "make_task: d and n_samples must be ≥ 1");
    }
    if (spec.target_rank < 0 || spec.target_rank > spec.d) {
        fail(ErrorKind::validation, "make_task: target_rank must lie in [0, d]");
    }
    if (!(spec.noise_std >= 0.0)) {
        fail(ErrorKind::validation, "make_task: noise_std must be ≥ 0");
    }
    LinearTask task;
    task.noise_std = spec.noise_std;
    task.target_rank = spec.target_rank;
    task.w0 = synthetic_weight(spec.d, spec.d, spec.seed);

    Rng factors(spec.seed, {fnv1a("task.delta")});
    task.target_delta = Matrix::Zero(spec.d, spec.d);
    for (int i = 0; i < spec.target_rank; ++i) {
        Vector u = factors.gaussian(spec.d, 1).col(0);
        Vector v = factors.gaussian(spec.d, 1).col(0);
        task.target_delta += (u / u.norm()) * (v / v.norm()).transpose();
    }
    if (spec.target_rank > 0) {
        task.target_delta *= 0.1 * task.w0.norm() / task.target_delta.norm();
    }

    Rng inputs(spec.seed, {fnv1a("task.inputs")});
    task.inputs = inputs.gaussian(spec.n_samples, spec.d);
    task.targets = task.inputs * (task.w0 + task.target_delta).transpose();
    if (spec.noise_std > 0.0) {
        Rng noise(spec.seed, {fnv1a("task.noise")});
        task.targets += noise.gaussian(spec.n_samples, spec.d, spec.noise_std);
    }
    return task;
}

Matrix forward_delta(const Adapter& adapter, const Matrix& inputs) {
    if (inputs.cols() != adapter.d_in()) {
        fail(ErrorKind::dimension,
             fmt::format("forward: inputs have {} features, adapter expects {}", inputs.cols(), adapter.d_in()));
    }
    Matrix out = Matrix::Zero(inputs.rows(), adapter.d_out());
    for (int k = 0; k < adapter.num_blocks(); ++k) {
        const auto& blk = adapter.block(k);
        const auto x = cols_of(inputs, blk.cols);
        auto y = out.middleCols(idx(blk.rows.begin), idx(blk.rows.size()));
        if (blk.mask) {
            const Matrix update = (blk.scale * (blk.B * blk.A)).cwiseProduct(*blk.mask);
            y.noalias() += x * update.transpose();
        } else {
            // Low-rank path: (X A^T) B^T, never forming B A.
            const Matrix projected = x * blk.A.transpose();
            y.noalias() += blk.scale * (projected * blk.B.transpose());
        }
    }
    return out;
}

Matrix forward(const Adapter& adapter, const Matrix& w0, const Matrix& inputs) {
    require_shape(w0, adapter.d_out(), adapter.d_in(), "forward: W0");
    Matrix out = forward_delta(adapter, inputs);
    out.noalias() += inputs * w0.transpose();
    return out;
}

double mse_loss(const Matrix& predictions, const Matrix& targets) {
    require_shape(targets, predictions.rows(), predictions.cols(), "mse_loss: targets");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

Matrix mse_gradient(const Matrix& predictions, const Matrix& targets) {
    require_shape(targets, predictions.rows(), predictions.cols(), "mse_gradient: targets");
    return (2.0 / static_cast<double>(predictions.size())) * (predictions - targets);
}

Gradients backward(const Adapter& adapter, const Matrix& inputs, const Matrix& upstream) {
    require_shape(upstream, inputs.rows(), adapter.d_out(), "backward: upstream gradient");
    if (inputs.cols() != adapter.d_in()) {
        fail(ErrorKind::dimension, "backward: inputs do not match the adapter's input dimension");
    }
    Gradients grads;
    grads.dA.reserve(static_cast<std::size_t>(adapter.num_blocks()));
    grads.dB.reserve(static_cast<std::size_t>(adapter.num_blocks()));
    for (int k = 0; k < adapter.num_blocks(); ++k) {
        const auto& blk = adapter.block(k);
        Matrix g = cols_of(upstream, blk.rows).transpose() * cols_of(inputs, blk.cols);
        if (blk.mask) g = g.cwiseProduct(*blk.mask);
        grads.dB.push_back(blk.scale * (g * blk.A.transpose()));
        grads.dA.push_back(blk.scale * (blk.B.transpose() * g));
    }
    return grads;
}

// -- gradient check ----------------------------------------------------------

GradCheckReport grad_check(const Adapter& adapter, const LinearTask& task, const GradCheckOptions& options) {
    if (!(options.h >= 1e-7 && options.h <= 1e-3)) {
        fail(ErrorKind::validation, "grad_check: h must lie in [1e-7, 1e-3]");
    }
    const Matrix& x = task.inputs;
    const Matrix& y = task.targets;
    const Matrix base = x * task.w0.transpose();
    auto loss_of = [&](const Adapter& a) { return mse_loss(base + forward_delta(a, x), y); };

    GradCheckReport report;
    const Matrix pred = base + forward_delta(adapter, x);
    report.loss = mse_loss(pred, y);
    Gradients grads = backward(adapter, x, mse_gradient(pred, y));
    if (options.corrupt) {
        for (auto& g : grads.dA) g = -g;
        for (auto& g : grads.dB) g = -g;
    }

    struct Coord {
        bool is_b;
        int k;
        Eigen::Index row, col;
    };
    std::vector<Coord> coords;
    for (int k = 0; k < adapter.num_blocks(); ++k) {
        for (int which = 0; which < 2; ++which) {
            const Matrix& m = which == 0 ? adapter.a(k) : adapter.b(k);
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) coords.push_back({which == 1, k, i, j});
            }
        }
    }
    report.total_entries = coords.size();
    const std::size_t budget = std::max<std::size_t>(options.max_entries, 200);
    if (coords.size() > budget) {
        Rng rng(options.seed, {fnv1a("gradcheck.sample")});
        for (std::size_t i = 0; i < budget; ++i) {
            const auto span = coords.size() - i;
            const auto j = i + std::min(span - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(span)));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(budget);
    }

    Adapter probe = adapter;
    for (const auto& c : coords) {
        Matrix& param = c.is_b ? probe.b(c.k) : probe.a(c.k);
        const double saved = param(c.row, c.col);
        param(c.row, c.col) = saved + options.h;
        const double up = loss_of(probe);
        param(c.row, c.col) = saved - options.h;
        const double down = loss_of(probe);
        param(c.row, c.col) = saved;

        const double numeric = (up - down) / (2.0 * options.h);
        const auto ck = static_cast<std::size_t>(c.k);
        const double analytic = c.is_b ? grads.dB[ck](c.row, c.col) : grads.dA[ck](c.row, c.col);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.entries_checked;
        if (rel > report.max_rel_error || report.entries_checked == 1) {
            report.max_rel_error = std::max(report.max_rel_error, rel);
            report.worst = {c.is_b ? "B" : "A", c.k, c.row, c.col, analytic, numeric, rel};
        }
    }
    report.passed = report.max_rel_error <= options.tolerance;
    return report;
}

// -- optimizer ---------------------------------------------------------------

void TrainState::update(Matrix& param, const Matrix& grad, Moments& m) const {
    const auto& s = settings_;
    if (m.first.size() == 0) {
        m.first = Matrix::Zero(param.rows(), param.cols());
        m.second = Matrix::Zero(param.rows(), param.cols());
    }
    require_shape(m.first, param.rows(), param.cols(), "optimizer moment");
    m.first = s.beta1 * m.first + (1.0 - s.beta1) * grad;
    m.second = s.beta2 * m.second + (1.0 - s.beta2) * grad.cwiseAbs2();
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(s.beta1, t);
    const double c2 = 1.0 - std::pow(s.beta2, t);
    if (s.weight_decay != 0.0) param *= 1.0 - s.learning_rate * s.weight_decay;
    param.array() -= s.learning_rate * (m.first.array() / c1) / ((m.second.array() / c2).sqrt() + s.epsilon);
}

void TrainState::apply(Adapter& adapter, const Gradients& grads) {
    const auto n = static_cast<std::size_t>(adapter.num_blocks());
    if (grads.dA.size() != n || grads.dB.size() != n) {
        fail(ErrorKind::dimension, "optimizer: gradient count does not match the adapter");
    }
    if (a_moments_.empty()) {
        a_moments_.resize(n);
        b_moments_.resize(n);
    } else if (a_moments_.size() != n) {
        fail(ErrorKind::dimension, "optimizer: state belongs to a different adapter");
    }
    ++step_;
    for (std::size_t k = 0; k < n; ++k) {
        update(adapter.a(static_cast<int>(k)), grads.dA[k], a_moments_[k]);
        update(adapter.b(static_cast<int>(k)), grads.dB[k], b_moments_[k]);
    }
}

std::vector<double> train(Adapter& adapter, const LinearTask& task, int steps, TrainState& state) {
    if (steps < 1) {
        fail(ErrorKind::validation, "train: steps must be ≥ 1");
    }
    require_shape(task.w0, adapter.d_out(), adapter.d_in(), "train: W0");
    const Matrix& x = task.inputs;
    const Matrix offset = x * task.w0.transpose() - task.targets;

    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(steps) + 1);
    for (int t = 0;; ++t) {
        const Matrix residual = offset + forward_delta(adapter, x);
        const double loss = residual.squaredNorm() / static_cast<double>(residual.size());
        if (!std::isfinite(loss)) {
            fail(ErrorKind::numerical, fmt::format("train: loss diverged (non-finite) at step {}", t));
        }
        losses.push_back(loss);
        if (t == steps) break;
        const Matrix upstream = (2.0 / static_cast<double>(residual.size())) * residual;
        state.apply(adapter, backward(adapter, x, upstream));
    }
    return losses;
}

}  // namespace smoa
