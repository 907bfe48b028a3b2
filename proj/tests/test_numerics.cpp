#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gnnaudit/matrix.hpp"
#include "gnnaudit/numerics.hpp"
#include "gnnaudit/rng.hpp"

using namespace gnnaudit;

namespace {

Matrix random_matrix(int rows, int cols, RngStream& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(-2.0, 2.0);
    return m;
}

Matrix naive_mul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("matrix products agree with the naive triple loop", "[numerics]") {
    RngStream rng(123);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = random_matrix(5, 7, rng);
        const Matrix b = random_matrix(7, 4, rng);
        const Matrix c = random_matrix(5, 4, rng);
        CHECK(max_abs_diff(mat_mul(a, b), naive_mul(a, b)) < 1e-12);
        CHECK(max_abs_diff(mat_mul_tn(a, c), naive_mul(transpose(a), c)) < 1e-12); // AᵀC
        CHECK(max_abs_diff(mat_mul_nt(c, b), naive_mul(c, transpose(b))) < 1e-12); // CBᵀ
    }
    const Matrix a = random_matrix(4, 6, rng);
    const Matrix b = random_matrix(3, 6, rng);
    CHECK_THROWS_AS(mat_mul(a, b), std::invalid_argument);
}

TEST_CASE("softmax rows are stable, stochastic, and shift-invariant", "[numerics]") {
    Matrix m(3, 3);
    m.at(1, 0) = 1000.0;
    m.at(2, 0) = std::log(2.0);
    const Matrix y = softmax_rows(m);

    for (int c = 0; c < 3; ++c) CHECK(y.at(0, c) == Catch::Approx(1.0 / 3.0));
    CHECK(y.at(1, 0) == Catch::Approx(1.0));
    CHECK(y.at(1, 1) < 1e-300);
    CHECK(y.at(2, 0) == Catch::Approx(0.5)); // exp row [2, 1, 1] / 4
    CHECK(y.at(2, 1) == Catch::Approx(0.25));

    RngStream rng(7);
    Matrix r = random_matrix(20, 5, rng);
    const Matrix yr = softmax_rows(r);
    Matrix shifted = r;
    for (int i = 0; i < shifted.rows; ++i)
        for (int c = 0; c < shifted.cols; ++c) shifted.at(i, c) += 3.25;
    const Matrix ys = softmax_rows(shifted);
    for (int i = 0; i < yr.rows; ++i) {
        double sum = 0.0;
        for (int c = 0; c < yr.cols; ++c) sum += yr.at(i, c);
        CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    }
    CHECK(max_abs_diff(yr, ys) < 1e-12);

    Matrix bad(1, 2);
    bad.at(0, 0) = std::nan("");
    CHECK_THROWS(softmax_rows(bad));
}

TEST_CASE("relu and leaky relu match their definitions", "[numerics]") {
    CHECK(relu(-1.0) == 0.0);
    CHECK(relu(0.0) == 0.0);
    CHECK(relu(2.0) == 2.0);
    CHECK(leaky_relu(-1.0, 0.2) == Catch::Approx(-0.2));
    CHECK(leaky_relu(3.0, 0.2) == 3.0);

    RngStream rng(9);
    const Matrix m = random_matrix(6, 6, rng);
    CHECK(max_abs_diff(relu_rows(relu_rows(m)), relu_rows(m)) == 0.0);
}

TEST_CASE("cross entropy handles one-hot, uniform, and clamped rows", "[numerics]") {
    Matrix onehot(1, 3);
    onehot.at(0, 1) = 1.0;
    CHECK(cross_entropy(onehot, {1}) == Catch::Approx(0.0).margin(1e-9));

    Matrix uniform(1, 7);
    for (int c = 0; c < 7; ++c) uniform.at(0, c) = 1.0 / 7.0;
    CHECK(cross_entropy(uniform, {3}) == Catch::Approx(std::log(7.0)));

    Matrix zerop(1, 2);
    zerop.at(0, 0) = 1.0; // p[label=1] = 0, clamped to 1e-12
    CHECK(cross_entropy(zerop, {1}) == Catch::Approx(-std::log(1e-12)));
    CHECK(std::isfinite(cross_entropy(zerop, {1})));

    CHECK_THROWS_AS(cross_entropy(onehot, {5}), std::out_of_range);

    RngStream rng(4);
    const Matrix y = softmax_rows(random_matrix(8, 4, rng));
    std::vector<int> labels(8, 2);
    CHECK(cross_entropy(y, labels) >= 0.0);
}

TEST_CASE("laplace sampling: exact zero scale, moments, reproducibility", "[numerics]") {
    RngStream rng(20);
    CHECK(laplace_sample(rng, 0.0) == 0.0);
    CHECK_THROWS_AS(laplace_sample(rng, -1.0), std::invalid_argument);

    const int n = 1000000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = laplace_sample(rng, 1.0);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(var == Catch::Approx(2.0).epsilon(0.05));

    RngStream a(33), b(33);
    for (int i = 0; i < 100; ++i) CHECK(laplace_sample(a, 0.7) == laplace_sample(b, 0.7));
}

TEST_CASE("adam: zero gradient leaves params, first step moves by about lr", "[numerics]") {
    Matrix p(1, 1);
    p.at(0, 0) = 2.0;
    Matrix g(1, 1);
    AdamState state;
    AdamParams hp;
    hp.lr = 0.1;

    adam_step(p, g, state, hp);
    CHECK(p.at(0, 0) == 2.0);
    CHECK(state.step == 1);

    // Bias-corrected first step with a fresh state moves by about lr.
    Matrix q(1, 1);
    q.at(0, 0) = 2.0;
    AdamState fresh;
    g.at(0, 0) = 1.0;
    adam_step(q, g, fresh, hp);
    CHECK(q.at(0, 0) == Catch::Approx(2.0 - 0.1).margin(1e-3));

    Matrix wrong(2, 1);
    CHECK_THROWS_AS(adam_step(p, wrong, state, hp), std::invalid_argument);
}

TEST_CASE("finite differences recover analytic gradients", "[numerics]") {
    CHECK(finite_difference([](double v) { return v * v; }, 3.0, 1e-5) == Catch::Approx(6.0).margin(1e-6));
    CHECK(finite_difference([](double) { return 42.0; }, 3.0, 1e-5) == 0.0);
    CHECK_THROWS_AS(finite_difference([](double v) { return v; }, 0.0, -1.0), std::invalid_argument);

    // analytic softmax + cross-entropy gradient (p - onehot) on random logits
    RngStream rng(55);
    Matrix logits = random_matrix(4, 3, rng);
    const std::vector<int> labels{0, 2, 1, 1};
    const auto loss = [&]() { return cross_entropy(softmax_rows(logits), labels); };
    Matrix analytic(4, 3);
    {
        const Matrix y = softmax_rows(logits);
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c)
                analytic.at(i, c) = (y.at(i, c) - (labels[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0)) / 4.0;
    }
    const std::vector<Matrix> fd = finite_difference_gradient(loss, {&logits}, 1e-5);
    CHECK(gradient_max_rel_error({analytic}, fd) < 1e-6);
}

TEST_CASE("argmax uses the lowest index on ties", "[numerics]") {
    const double row[4] = {0.25, 0.4, 0.4, 0.1};
    CHECK(argmax_lowest(row, 4) == 1);
    const double flat[3] = {0.5, 0.5, 0.5};
    CHECK(argmax_lowest(flat, 3) == 0);
}

TEST_CASE("rng streams are independent, deterministic, and exact", "[numerics]") {
    RngStream a(99, StreamId::train, 0);
    RngStream b(99, StreamId::train, 0);
    RngStream c(99, StreamId::train, 1);
    RngStream d(99, StreamId::defense, 0);
    bool all_equal_c = true, all_equal_d = true;
    for (int i = 0; i < 50; ++i) {
        const double va = a.uniform01();
        CHECK(va == b.uniform01());
        if (va != c.uniform01()) all_equal_c = false;
        if (va != d.uniform01()) all_equal_d = false;
    }
    CHECK_FALSE(all_equal_c);
    CHECK_FALSE(all_equal_d);

    // uniform_int covers its range and nothing else
    RngStream r(5);
    std::vector<int> seen(6, 0);
    for (int i = 0; i < 6000; ++i) ++seen[static_cast<std::size_t>(r.uniform_int(6))];
    for (int count : seen) CHECK(count > 800);

    // shuffle produces a permutation
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    auto w = v;
    r.shuffle(w);
    auto sorted = w;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);

    // sampling without replacement: distinct in-range elements
    auto sample = r.sample_without_replacement(10, 4);
    CHECK(sample.size() == 4);
    std::sort(sample.begin(), sample.end());
    CHECK(std::adjacent_find(sample.begin(), sample.end()) == sample.end());
    CHECK(sample.front() >= 0);
    CHECK(sample.back() < 10);
    CHECK_THROWS_AS(r.sample_without_replacement(3, 5), std::invalid_argument);
}
