#include <doctest.h>

#include <cmath>
#include <map>

#include "graspcount/errors.hpp"
#include "graspcount/nn.hpp"
#include "test_support.hpp"

using namespace graspcount;
using namespace graspcount::testing;
using nn::LayerSpec;

TEST_CASE("analytic gradients match central differences") {
    for (const auto& [name, r] : run_gradient_suite(4, 1234)) {
        INFO(name << " max rel error " << r.max_rel_error);
        CHECK(r.checked > 0);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("autoencoder-sized stack passes the gradient check") {
    Rng rng(7);
    nn::Model m(nn::Shape::vector(24),
                {LayerSpec::reshape({6, 4, 1}), LayerSpec::conv2d(3), LayerSpec::relu(), LayerSpec::maxpool2x2(),
                 LayerSpec::flatten(), LayerSpec::dense(4), LayerSpec::dense(18), LayerSpec::reshape({3, 2, 3}),
                 LayerSpec::conv_transpose2d(2), LayerSpec::upsample2x2(), LayerSpec::conv_transpose2d(1),
                 LayerSpec::flatten()});
    randomize(m, rng);
    const auto x = random_matrix(rng, 2, 24, 0, 1);
    const auto r = grad_check(m, x, x, nn::Loss::mse);
    CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("convolution and transposed convolution are adjoint") {
    Rng rng(3);
    for (int i = 0; i < 10; ++i) {
        const auto [lhs, rhs] = adjoint_pair(rng, 2 + rng.below(5), 2 + rng.below(5), 1 + rng.below(4), 1 + rng.below(4));
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("shape resolution") {
    nn::Model m(nn::Shape::vector(24), {LayerSpec::reshape({6, 4, 1}), LayerSpec::conv2d(12), LayerSpec::maxpool2x2()});
    CHECK(m.output_shape().h == 3);
    CHECK(m.output_shape().w == 2);
    CHECK(m.output_shape().c == 12);
    CHECK_THROWS_AS(nn::Model(nn::Shape::vector(10), {LayerSpec::reshape({3, 3, 1})}), ShapeMismatch);
    CHECK_THROWS_AS(nn::Model({3, 4, 1}, {LayerSpec::maxpool2x2()}), ShapeMismatch);
    CHECK_THROWS_AS(nn::Model(nn::Shape::vector(4), {LayerSpec::dense(0)}), ShapeMismatch);
}

TEST_CASE("dense parameter count") {
    nn::Model m(nn::Shape::vector(10), {LayerSpec::dense(7), LayerSpec::relu(), LayerSpec::dense(3)});
    CHECK(m.parameter_count() == 10 * 7 + 7 + 7 * 3 + 3);
}

TEST_CASE("softmax rows are distributions") {
    Rng rng(2);
    nn::Model m(nn::Shape::vector(4), {LayerSpec::dense(5), LayerSpec::softmax()});
    m.init(1);
    const auto y = nn::forward(m, random_matrix(rng, 6, 4, -50, 50));
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0;
        for (double v : y.row(r)) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1) < 1e-12);
    }
}

TEST_CASE("dropout scales kept units and is identity in eval") {
    nn::Model m(nn::Shape::vector(2000), {LayerSpec::dropout(0.5)});
    nn::Matrix x(1, 2000, 1.0);
    CHECK(nn::forward(m, x).data == x.data);
    Rng rng(5);
    const auto y = nn::forward(m, x, true, rng);
    int kept = 0;
    for (double v : y.data) {
        CHECK((v == 0.0 || v == 2.0));
        kept += v == 2.0;
    }
    CHECK(kept > 900);
    CHECK(kept < 1100);
}

TEST_CASE("init is seeded and serialization round-trips") {
    nn::Model a(nn::Shape::vector(6), {LayerSpec::dense(4), LayerSpec::relu(), LayerSpec::dense(2)});
    nn::Model b = a, c = a;
    a.init(9);
    b.init(9);
    c.init(10);
    CHECK(a.same_parameters(b));
    CHECK_FALSE(a.same_parameters(c));
    const auto back = nn::Model::from_json(a.to_json());
    CHECK(back.same_parameters(a));
    CHECK(back.to_json() == a.to_json());
    CHECK_THROWS_AS(nn::Model::from_json("{\"version\":1}"), DataError);
    CHECK_THROWS_AS(nn::Model::from_json("not json"), DataError);
}

TEST_CASE("adam rejects non-finite gradients before updating") {
    nn::Model m(nn::Shape::vector(2), {LayerSpec::dense(2)});
    m.init(1);
    const nn::Model before = m;
    nn::Gradients g;
    g.weight = {std::vector<double>(4, 0.1)};
    g.bias = {std::vector<double>(2, 0.1)};
    g.bias[0][1] = NAN;
    nn::TrainConfig cfg;
    CHECK_THROWS_AS(nn::adam_step(m, g, cfg), NonFiniteGradient);
    CHECK(m.same_parameters(before));
    CHECK(m.adam_step_count() == 0);
}

TEST_CASE("first adam step moves each parameter by the learning rate") {
    nn::Model m(nn::Shape::vector(2), {LayerSpec::dense(1)});
    m.init(1);
    const nn::Model before = m;
    nn::Gradients g;
    g.weight = {{0.5, -2.0}};
    g.bias = {{1e-3}};
    nn::TrainConfig cfg;
    cfg.learning_rate = 0.01;
    nn::adam_step(m, g, cfg);
    // m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps)
    CHECK(m.layers()[0].weight[0] == doctest::Approx(before.layers()[0].weight[0] - 0.01).epsilon(1e-6));
    CHECK(m.layers()[0].weight[1] == doctest::Approx(before.layers()[0].weight[1] + 0.01).epsilon(1e-6));
    CHECK(m.layers()[0].bias[0] == doctest::Approx(before.layers()[0].bias[0] - 0.01 * 1e-3 / (1e-3 + 1e-8)));
}

TEST_CASE("oversampled epochs balance the present classes") {
    std::vector<int> labels(100, 0);
    for (int i = 0; i < 10; ++i) labels[i] = 3;
    labels[50] = 1;
    Rng rng(4);
    const auto order = nn::epoch_order(labels, labels.size(), true, rng);
    CHECK(order.size() == labels.size());
    std::map<int, int> per;
    for (auto i : order) ++per[labels[i]];
    CHECK(per.size() == 3);
    CHECK(per[0] == 34);  // remainder goes to the lowest class id
    CHECK(per[1] == 33);
    CHECK(per[3] == 33);

    Rng rng2(4);
    auto plain = nn::epoch_order(labels, labels.size(), false, rng2);
    std::sort(plain.begin(), plain.end());
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(plain[i] == i);
}

TEST_CASE("training reduces loss and is deterministic") {
    Rng rng(21);
    nn::TrainSet set;
    set.inputs = random_matrix(rng, 200, 4);
    set.targets = nn::Matrix(200, 1);
    for (std::size_t i = 0; i < 200; ++i) set.targets(i, 0) = set.inputs(i, 0) - 0.5 * set.inputs(i, 2);
    nn::Model m(nn::Shape::vector(4), {LayerSpec::dense(8), LayerSpec::relu(), LayerSpec::dense(1)});
    m.init(3);
    nn::Model m2 = m;
    nn::TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.01;
    cfg.seed = 8;
    const auto h = nn::train(m, set, cfg);
    const auto h2 = nn::train(m2, set, cfg);
    CHECK(h.size() == 60);
    CHECK(h.back() < h.front() / 10);
    CHECK(h == h2);
    CHECK(m.same_parameters(m2));
    CHECK(m.adam_step_count() == 60 * 7);

    cfg.epochs = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("loss values") {
    nn::Matrix out(1, 2), tgt(1, 2);
    out.data = {1, 3};
    tgt.data = {0, 1};
    CHECK(nn::compute_loss(out, tgt, nn::Loss::mse) == doctest::Approx(2.5));
    out.data = {0.25, 0.75};
    CHECK(nn::compute_loss(out, tgt, nn::Loss::categorical_cross_entropy) == doctest::Approx(-std::log(0.75)));
    CHECK_THROWS_AS(nn::compute_loss(out, nn::Matrix(1, 3), nn::Loss::mse), ShapeMismatch);
}
