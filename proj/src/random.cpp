#include "smoa/random.hpp"

#include <vector>

namespace smoa {

namespace {
std::seed_seq make_seq(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * tags.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto t : tags) push(t);
    return std::seed_seq(words.begin(), words.end());
}
}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    auto seq = make_seq(seed, tags);
    engine_.seed(seq);
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return uniform_(engine_); }

Matrix Rng::gaussian(Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = stddev * normal();
        }
    }
    return m;
}

Matrix Rng::orthogonal(Eigen::Index n) {
    const Matrix g = gaussian(n, n);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix& r = qr.matrixQR();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

std::uint64_t fnv1a(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace smoa
