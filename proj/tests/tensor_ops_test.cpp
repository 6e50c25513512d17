#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cbc/errors.hpp"
#include "cbc/ops.hpp"

using namespace cbc;

namespace {

Tensor4 randomized(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                   std::uint64_t seed) {
    Tensor4 t(n, c, h, w);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& v : t.values()) v = dist(rng);
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Central finite differences through the forward pass only; the backward
// implementations never run inside this oracle.
template <typename Forward>
double fd_scalar(double& cell, Forward forward, std::span<const double> upstream) {
    constexpr double h = 1e-6;
    const double saved = cell;
    cell = saved + h;
    const Tensor4 plus = forward();
    cell = saved - h;
    const Tensor4 minus = forward();
    cell = saved;
    return (dot(upstream, plus.values()) - dot(upstream, minus.values())) / (2.0 * h);
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor4 t(2, 3, 4, 5);
    CHECK(t.size() == 120);
    CHECK(t.dims() == Dims4{2, 3, 4, 5});
    t.at(1, 2, 3, 4) = 7.5;
    CHECK(t.values()[119] == 7.5);
    CHECK_THROWS_AS(Tensor4(0, 1, 1, 1), ShapeError);
    CHECK(Tensor4().empty());

    Tensor4 nan_t(1, 1, 1, 2);
    CHECK(nan_t.all_finite());
    nan_t.at(0, 0, 0, 1) = std::nan("");
    CHECK_FALSE(nan_t.all_finite());
}

TEST_CASE("conv2d forward: hand-checked 2x2 difference kernel") {
    Tensor4 input(1, 1, 3, 3);
    for (std::size_t i = 0; i < 9; ++i) input.values()[i] = static_cast<double>(i + 1);
    Tensor4 weights(1, 1, 2, 2);
    weights.at(0, 0, 0, 0) = 1.0;
    weights.at(0, 0, 1, 1) = -1.0;
    const std::vector<double> bias{0.5};

    ConvGeometry geom{2, 2, 1, 1, 1, 0};
    const Tensor4 out = conv2d_forward(input, weights, bias, geom);
    REQUIRE(out.dims() == Dims4{1, 1, 2, 2});
    // each window is top-left minus bottom-right, a constant -4 on this ramp
    for (double v : out.values()) CHECK(v == doctest::Approx(-3.5).epsilon(1e-12));

    ConvGeometry padded{2, 2, 1, 1, 1, 1};
    const Tensor4 out_p = conv2d_forward(input, weights, bias, padded);
    REQUIRE(out_p.dims() == Dims4{1, 1, 4, 4});
    CHECK(out_p.at(0, 0, 0, 0) == doctest::Approx(0.5 - 1.0));   // only in[0,0] under w11
    CHECK(out_p.at(0, 0, 3, 3) == doctest::Approx(0.5 + 9.0));   // only in[2,2] under w00
}

TEST_CASE("conv2d forward: identity kernel and stride") {
    const Tensor4 input = randomized(2, 3, 5, 5, 11);
    Tensor4 weights(3, 3, 1, 1);
    for (std::size_t m = 0; m < 3; ++m) weights.at(m, m, 0, 0) = 1.0;
    const std::vector<double> bias(3, 0.0);

    const Tensor4 same = conv2d_forward(input, weights, bias, ConvGeometry{1, 1, 3, 3, 1, 0});
    CHECK(same == input);

    const Tensor4 strided = conv2d_forward(input, weights, bias, ConvGeometry{1, 1, 3, 3, 2, 0});
    REQUIRE(strided.dims() == Dims4{2, 3, 3, 3});
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 3; ++x)
                    CHECK(strided.at(n, c, y, x) == input.at(n, c, 2 * y, 2 * x));
}

TEST_CASE("conv2d rejects inconsistent shapes and non-finite input") {
    const Tensor4 input = randomized(1, 2, 4, 4, 3);
    Tensor4 weights(2, 3, 3, 3);  // expects 3 input channels
    const std::vector<double> bias(2, 0.0);
    CHECK_THROWS_AS(conv2d_forward(input, weights, bias, ConvGeometry{3, 3, 3, 2, 1, 1}),
                    ShapeError);

    Tensor4 bad = input;
    bad.values()[5] = std::numeric_limits<double>::infinity();
    Tensor4 w2(2, 2, 3, 3);
    CHECK_THROWS_AS(conv2d_forward(bad, w2, bias, ConvGeometry{3, 3, 2, 2, 1, 1}), NumericError);
}

TEST_CASE("conv2d backward matches finite differences (stride 2, padding 1)") {
    const ConvGeometry geom{3, 3, 2, 3, 2, 1};
    Tensor4 input = randomized(2, 2, 5, 5, 21);
    Tensor4 weights = randomized(3, 2, 3, 3, 22);
    std::vector<double> bias{0.1, -0.2, 0.3};

    const Tensor4 probe = conv2d_forward(input, weights, bias, geom);
    const Tensor4 upstream = randomized(probe.dims().n, probe.dims().c, probe.dims().h,
                                        probe.dims().w, 23);

    const ConvWeightGrads grads = conv2d_backward_weights(input, upstream, geom);
    const Tensor4 grad_in = conv2d_backward_input(weights, upstream, geom, 5, 5);

    auto forward = [&] { return conv2d_forward(input, weights, bias, geom); };
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double fd = fd_scalar(weights.values()[i], forward, upstream.values());
        CHECK(grads.weights.values()[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
    for (std::size_t i = 0; i < bias.size(); ++i) {
        const double fd = fd_scalar(bias[i], forward, upstream.values());
        CHECK(grads.bias[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double fd = fd_scalar(input.values()[i], forward, upstream.values());
        CHECK(grad_in.values()[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("relu forward and backward") {
    Tensor4 input(1, 1, 1, 4);
    input.values()[0] = -2.0;
    input.values()[1] = 0.0;
    input.values()[2] = 3.0;
    input.values()[3] = -0.5;
    const Tensor4 out = relu_forward(input);
    CHECK(out.values()[0] == 0.0);
    CHECK(out.values()[1] == 0.0);
    CHECK(out.values()[2] == 3.0);
    CHECK(out.values()[3] == 0.0);

    Tensor4 upstream(1, 1, 1, 4);
    upstream.fill(1.0);
    const Tensor4 grad = relu_backward(input, upstream);
    CHECK(grad.values()[0] == 0.0);
    CHECK(grad.values()[1] == 0.0);  // derivative taken as 0 at the kink
    CHECK(grad.values()[2] == 1.0);
    CHECK(grad.values()[3] == 0.0);
}

TEST_CASE("maxpool 2x2 picks window maxima and routes gradients to them") {
    Tensor4 input(1, 1, 2, 4);
    const double vals[] = {1.0, 5.0, 2.0, 0.0, 3.0, -1.0, 7.0, 2.0};
    std::copy(std::begin(vals), std::end(vals), input.values().begin());

    const MaxPoolResult res = maxpool2x2_forward(input);
    REQUIRE(res.output.dims() == Dims4{1, 1, 1, 2});
    CHECK(res.output.values()[0] == 5.0);
    CHECK(res.output.values()[1] == 7.0);

    Tensor4 upstream(1, 1, 1, 2);
    upstream.values()[0] = 10.0;
    upstream.values()[1] = 20.0;
    const Tensor4 grad = maxpool2x2_backward(input.dims(), res.argmax, upstream);
    CHECK(grad.values()[1] == 10.0);  // the 5.0
    CHECK(grad.values()[6] == 20.0);  // the 7.0
    CHECK(grad.values()[0] == 0.0);
    CHECK(grad.values()[7] == 0.0);

    // odd trailing rows are dropped, not pooled
    Tensor4 odd(1, 1, 3, 4);
    odd.at(0, 0, 2, 0) = 99.0;
    const MaxPoolResult dropped = maxpool2x2_forward(odd);
    CHECK(dropped.output.dims() == Dims4{1, 1, 1, 2});
    for (double v : dropped.output.values()) CHECK(v != 99.0);

    CHECK_THROWS_AS(maxpool2x2_forward(Tensor4(1, 1, 1, 4)), ShapeError);
}

TEST_CASE("global average pool") {
    Tensor4 input(1, 2, 2, 2);
    for (std::size_t i = 0; i < 4; ++i) input.values()[i] = static_cast<double>(i);  // mean 1.5
    for (std::size_t i = 4; i < 8; ++i) input.values()[i] = 8.0;                     // mean 8
    const Tensor4 out = global_avg_pool_forward(input);
    REQUIRE(out.dims() == Dims4{1, 2, 1, 1});
    CHECK(out.values()[0] == doctest::Approx(1.5));
    CHECK(out.values()[1] == doctest::Approx(8.0));

    Tensor4 upstream(1, 2, 1, 1);
    upstream.values()[0] = 4.0;
    upstream.values()[1] = 8.0;
    const Tensor4 grad = global_avg_pool_backward(input.dims(), upstream);
    CHECK(grad.values()[0] == doctest::Approx(1.0));  // 4 / (2*2)
    CHECK(grad.values()[7] == doctest::Approx(2.0));
}

TEST_CASE("dense matches finite differences") {
    Tensor4 input = randomized(3, 2, 2, 2, 31);  // flattens to K=8
    Tensor4 weights = randomized(4, 8, 1, 1, 32);
    std::vector<double> bias{0.1, 0.2, -0.3, 0.0};

    const Tensor4 out = dense_forward(input, weights, bias);
    REQUIRE(out.dims() == Dims4{3, 4, 1, 1});
    const Tensor4 upstream = randomized(3, 4, 1, 1, 33);

    const DenseGrads grads = dense_backward(input, weights, upstream);
    auto forward = [&] { return dense_forward(input, weights, bias); };
    for (std::size_t i = 0; i < weights.size(); ++i)
        CHECK(grads.weights.values()[i] ==
              doctest::Approx(fd_scalar(weights.values()[i], forward, upstream.values()))
                  .epsilon(1e-6)
                  .scale(1.0));
    for (std::size_t i = 0; i < bias.size(); ++i)
        CHECK(grads.bias[i] == doctest::Approx(fd_scalar(bias[i], forward, upstream.values()))
                                   .epsilon(1e-6)
                                   .scale(1.0));
    for (std::size_t i = 0; i < input.size(); ++i)
        CHECK(grads.input.values()[i] ==
              doctest::Approx(fd_scalar(input.values()[i], forward, upstream.values()))
                  .epsilon(1e-6)
                  .scale(1.0));
}

TEST_CASE("batchnorm training statistics, hand-checked") {
    // one channel, batch values {1,2,3}: mean 2, biased var 2/3, unbiased var 1
    Tensor4 input(3, 1, 1, 1);
    input.values()[0] = 1.0;
    input.values()[1] = 2.0;
    input.values()[2] = 3.0;
    const std::vector<double> gamma{2.0};
    const std::vector<double> beta{0.5};
    std::vector<double> running_mean{0.0};
    std::vector<double> running_var{1.0};
    BatchNormCache cache;

    const Tensor4 out = batchnorm_forward_train(input, gamma, beta, 1e-5, 0.1, running_mean,
                                                running_var, cache);
    const double inv = 1.0 / std::sqrt(2.0 / 3.0 + 1e-5);
    CHECK(out.values()[0] == doctest::Approx(2.0 * (1.0 - 2.0) * inv + 0.5).epsilon(1e-12));
    CHECK(out.values()[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.values()[2] == doctest::Approx(2.0 * (3.0 - 2.0) * inv + 0.5).epsilon(1e-12));
    CHECK(running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0).epsilon(1e-12));
    CHECK(running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-12));

    // eval path applies the running estimates, not batch statistics
    const Tensor4 eval_out =
        batchnorm_forward_eval(input, gamma, beta, running_mean, running_var, 1e-5);
    const double scale = 2.0 / std::sqrt(1.0 + 1e-5);
    CHECK(eval_out.values()[0] == doctest::Approx((1.0 - 0.2) * scale + 0.5).epsilon(1e-12));

    Tensor4 tiny(1, 1, 1, 1);
    BatchNormCache c2;
    CHECK_THROWS_AS(batchnorm_forward_train(tiny, gamma, beta, 1e-5, 0.1, running_mean,
                                            running_var, c2),
                    ShapeError);
}

TEST_CASE("batchnorm backward matches finite differences") {
    Tensor4 input = randomized(4, 2, 3, 3, 41);
    std::vector<double> gamma{1.3, 0.7};
    std::vector<double> beta{0.2, -0.1};
    const Tensor4 upstream = randomized(4, 2, 3, 3, 42);

    auto forward = [&] {
        std::vector<double> rm(2, 0.0), rv(2, 1.0);  // fresh stats; output unaffected
        BatchNormCache c;
        return batchnorm_forward_train(input, gamma, beta, 1e-5, 0.1, rm, rv, c);
    };

    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    BatchNormCache cache;
    batchnorm_forward_train(input, gamma, beta, 1e-5, 0.1, rm, rv, cache);
    const BatchNormGrads grads = batchnorm_backward(input, gamma, cache, upstream);

    for (std::size_t i = 0; i < input.size(); ++i)
        CHECK(grads.input.values()[i] ==
              doctest::Approx(fd_scalar(input.values()[i], forward, upstream.values()))
                  .epsilon(5e-5)
                  .scale(1.0));
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(grads.gamma[c] == doctest::Approx(fd_scalar(gamma[c], forward, upstream.values()))
                                    .epsilon(1e-6)
                                    .scale(1.0));
        CHECK(grads.beta[c] == doctest::Approx(fd_scalar(beta[c], forward, upstream.values()))
                                   .epsilon(1e-6)
                                   .scale(1.0));
    }
}

TEST_CASE("softmax cross entropy") {
    SUBCASE("uniform logits give ln K and centered gradients") {
        Tensor4 logits(2, 5, 1, 1);
        logits.fill(0.3);
        const std::vector<int> labels{1, 4};
        const SoftmaxXentResult res = softmax_cross_entropy(logits, labels);
        CHECK(res.loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
        double sum = 0.0;
        for (double g : res.grad_logits.values()) sum += g;
        CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
        // dL/dlogit = (softmax - onehot)/N
        CHECK(res.grad_logits.at(0, 1, 0, 0) == doctest::Approx((0.2 - 1.0) / 2.0).epsilon(1e-12));
        CHECK(res.grad_logits.at(0, 0, 0, 0) == doctest::Approx(0.2 / 2.0).epsilon(1e-12));
    }

    SUBCASE("max subtraction keeps large logits finite") {
        Tensor4 logits(1, 3, 1, 1);
        logits.values()[0] = 10000.0;
        logits.values()[1] = 9999.0;
        logits.values()[2] = 0.0;
        const std::vector<int> labels{0};
        const SoftmaxXentResult res = softmax_cross_entropy(logits, labels);
        CHECK(std::isfinite(res.loss));
        CHECK(res.loss == doctest::Approx(std::log(1.0 + std::exp(-1.0) + std::exp(-10000.0))));
    }

    SUBCASE("gradient matches finite differences") {
        Tensor4 logits = randomized(3, 4, 1, 1, 51);
        const std::vector<int> labels{2, 0, 3};
        const SoftmaxXentResult res = softmax_cross_entropy(logits, labels);
        for (std::size_t i = 0; i < logits.size(); ++i) {
            constexpr double h = 1e-6;
            const double saved = logits.values()[i];
            logits.values()[i] = saved + h;
            const double plus = softmax_cross_entropy(logits, labels).loss;
            logits.values()[i] = saved - h;
            const double minus = softmax_cross_entropy(logits, labels).loss;
            logits.values()[i] = saved;
            CHECK(res.grad_logits.values()[i] ==
                  doctest::Approx((plus - minus) / (2.0 * h)).epsilon(1e-5).scale(1.0));
        }
    }

    SUBCASE("label range is enforced") {
        Tensor4 logits(1, 3, 1, 1);
        const std::vector<int> high{3};
        const std::vector<int> negative{-1};
        CHECK_THROWS_AS(softmax_cross_entropy(logits, high), ShapeError);
        CHECK_THROWS_AS(softmax_cross_entropy(logits, negative), ShapeError);
    }
}
