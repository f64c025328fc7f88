#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoa/adapters.hpp"
#include "smoa/matrix.hpp"

namespace smoa {

enum class SpectrumShape {
    decaying,  // sigma_i proportional to i^{-1/2}
    equal,     // every sigma_i = 1
};

/// Random d_out x d_in weight U diag(sigma) V^T with Haar-random U, V.
/// The decaying spectrum is rescaled so that ||W||_F = sqrt(d_out * d_in).
Matrix synthetic_weight(int d_out, int d_in, std::uint64_t seed, SpectrumShape shape = SpectrumShape::decaying);

/// Synthetic regression whose exact solution is a planted update:
/// targets = inputs (W0 + target_delta)^T + noise.
struct LinearTask {
    Matrix w0;            // frozen, d x d
    Matrix target_delta;  // planted update, hidden from the learner
    Matrix inputs;        // n_samples x d
    Matrix targets;       // n_samples x d
    double noise_std = 0.0;
    int target_rank = 0;
};

struct TaskSpec {
    int d = 0;
    int target_rank = 0;
    int n_samples = 0;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

/// target_delta is a sum of `target_rank` outer products of normalized
/// Gaussian vectors, rescaled to 0.1 ||W0||_F (zero when target_rank = 0).
LinearTask make_task(const TaskSpec& spec);

/// X W0^T + X delta^T without forming W0 + delta.
Matrix forward(const Adapter& adapter, const Matrix& w0, const Matrix& inputs);

/// X delta^T only.
Matrix forward_delta(const Adapter& adapter, const Matrix& inputs);

/// Mean of squared entries of (predictions - targets).
double mse_loss(const Matrix& predictions, const Matrix& targets);

/// d mse_loss / d predictions.
Matrix mse_gradient(const Matrix& predictions, const Matrix& targets);

/// Gradients of the trainable factors, indexed by block.
struct Gradients {
    std::vector<Matrix> dA;
    std::vector<Matrix> dB;
};

/// Chain rule through the adapter. With G_k the (rows_k, cols_k) block of
/// upstream^T X and M_k = G_k ⊙ mask_k:
///   dB_k = s_k M_k A_k^T,   dA_k = s_k B_k^T M_k.
Gradients backward(const Adapter& adapter, const Matrix& inputs, const Matrix& upstream);

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-6;
    std::size_t max_entries = 4096;  // above this, a seeded subsample is checked (at least 200)
    std::uint64_t seed = 0;
    bool corrupt = false;  // negate the analytic gradient; exercises the checker itself
};

struct GradCheckEntry {
    std::string tensor;  // "A" or "B"
    int subspace = 0;
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double loss = 0.0;
    double max_rel_error = 0.0;
    std::size_t entries_checked = 0;
    std::size_t total_entries = 0;
    GradCheckEntry worst;
    bool passed = false;
};

/// Central-difference check of backward() on the task's MSE loss. Relative
/// error is |a - b| / max(|a|, |b|, 1e-8).
GradCheckReport grad_check(const Adapter& adapter, const LinearTask& task, const GradCheckOptions& options = {});

struct OptimizerSettings {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

/// Adam moments with decoupled weight decay, one pair per trainable tensor.
class TrainState {
public:
    explicit TrainState(OptimizerSettings settings = {}) : settings_(settings) {}

    const OptimizerSettings& settings() const noexcept { return settings_; }
    std::int64_t step() const noexcept { return step_; }

    /// One update of every A_k and B_k from `grads`.
    void apply(Adapter& adapter, const Gradients& grads);

private:
    struct Moments {
        Matrix first;
        Matrix second;
    };
    void update(Matrix& param, const Matrix& grad, Moments& m) const;

    OptimizerSettings settings_;
    std::int64_t step_ = 0;
    std::vector<Moments> a_moments_;
    std::vector<Moments> b_moments_;
};

/// Full-batch training of the adapter factors. Returns steps + 1 losses;
/// entry t is the MSE after t updates. Throws ErrorKind::numerical with the
/// step index if the loss becomes non-finite.
std::vector<double> train(Adapter& adapter, const LinearTask& task, int steps, TrainState& state);

}  // namespace smoa
