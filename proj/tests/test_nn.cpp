#include "cbnet/error.hpp"
#include "cbnet/nn.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace cbnet;
using namespace cbnet::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng &rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal(0, 1);
  return m;
}

} // namespace

TEST_CASE("gradients of a 3-layer net match finite differences for every layer kind") {
  Rng rng(11);
  Sequential net = build_stack(4,
                               {{6, Activation::Prelu, true}, {5, Activation::Relu, true}, {2, Activation::Linear, false}},
                               rng);
  // Move the PReLU slope away from its init so its gradient is not trivially structured.
  for (std::size_t i = 0; i < net.size(); ++i)
    if (net.layer(i).kind() == "prelu") net.layer(i).params()[0]->value(0, 0) = 0.3;
  const Matrix x = random_matrix(10, 4, rng);
  const Matrix c = random_matrix(10, 2, rng);
  const auto r = gradcheck::check([&] { return net.forward(x, true); }, [&](const Matrix &d) { net.backward(d); },
                                  net.params(), c);
  CHECK(r.checked == (4 * 6 + 6) + 2 * 6 + 1 + (6 * 5 + 5) + 2 * 5 + (5 * 2 + 2));
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("gradients through a branched network") {
  Rng rng(5);
  const std::vector<std::string> cols = {"rssi_mean", "sinr_mean", "ap_airtime_ch0", "ap_airtime_ch1", "x"};
  Network net(cols,
              {{{"rssi_", "sinr_"}, {{4, Activation::Prelu, true}, {3, Activation::Prelu, true}}},
               {{"ap_airtime_ch"}, {{3, Activation::Prelu, false}}}},
              {{1, Activation::Relu, false}}, rng);
  // Shift the output bias so the final ReLU is active on most rows.
  auto params = net.params();
  params[params.size() - 1]->value(0, 0) = 2.0;
  const Matrix x = random_matrix(10, 5, rng);
  const Matrix c = random_matrix(10, 1, rng);
  const auto r = gradcheck::check([&] { return net.forward(x, true); }, [&](const Matrix &d) { net.backward(d); },
                                  net.params(), c);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("input gradient of a dense stack") {
  Rng rng(3);
  Sequential net = build_stack(3, {{4, Activation::Prelu, false}, {1, Activation::Linear, false}}, rng);
  Matrix x = random_matrix(5, 3, rng);
  const Matrix c = random_matrix(5, 1, rng);
  net.forward(x, true);
  for (auto *p : net.params()) p->zero_grad();
  const Matrix dx = net.backward(c);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + gradcheck::kStep;
    const double up = c.cwiseProduct(net.forward(x, true)).sum();
    x(i) = keep - gradcheck::kStep;
    const double down = c.cwiseProduct(net.forward(x, true)).sum();
    x(i) = keep;
    CHECK(gradcheck::rel_error(dx(i), (up - down) / (2 * gradcheck::kStep)) < 1e-3);
  }
}

TEST_CASE("relu output is non-negative and prelu with slope 0 equals relu") {
  Rng rng(2);
  const Matrix x = random_matrix(50, 7, rng) * 10.0;
  Relu relu;
  Prelu prelu(0.0);
  const Matrix a = relu.forward(x, false);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(prelu.forward(x, false) == a);
  const Matrix dy = random_matrix(50, 7, rng);
  CHECK(relu.backward(dy) == prelu.backward(dy));
}

TEST_CASE("batch norm uses batch statistics in training and running statistics at inference") {
  BatchNorm bn(2, 0.9, 1e-5);
  Matrix x(4, 2);
  x << 1, 10, 2, 20, 3, 30, 4, 40;
  const Matrix y = bn.forward(x, true);
  for (int j = 0; j < 2; ++j) {
    CHECK(y.col(j).mean() == doctest::Approx(0).epsilon(1e-12));
    CHECK((y.col(j).array().square().mean()) == doctest::Approx(1).epsilon(1e-4));
  }
  // running = 0.9 * init + 0.1 * batch; init mean 0, var 1; batch var unbiased.
  const Matrix z = bn.forward(Matrix::Constant(1, 2, 0.0), false);
  const double mean0 = 0.1 * 2.5, var0 = 0.9 + 0.1 * (5.0 / 3.0);
  CHECK(z(0, 0) == doctest::Approx(-mean0 / std::sqrt(var0 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("masked loss hand example") {
  const std::vector<double> pred = {10, 10}, truth = {12, 13}, ap = {25};
  const std::vector<std::size_t> member = {0, 0};
  CHECK(std::abs(masked_loss(pred, truth, member, ap) - std::sqrt(38.0 / 3.0)) < 1e-12);
  CHECK(masked_loss(truth, truth, member, ap) == 0.0);
}

TEST_CASE("masked loss is symmetric under swapping AP order") {
  const double e = 1.5;
  const std::vector<double> truth = {5, 6, 7, 8};
  const std::vector<double> pred = {5 + e, 6 - e, 7 - e, 8 + e};
  const std::vector<std::size_t> member = {0, 0, 1, 1};
  const std::vector<double> ap = {11, 15};
  const std::vector<double> pred_sw = {7 - e, 8 + e, 5 + e, 6 - e};
  const std::vector<double> truth_sw = {7, 8, 5, 6};
  const std::vector<double> ap_sw = {15, 11};
  CHECK(masked_loss(pred, truth, member, ap) == doctest::Approx(masked_loss(pred_sw, truth_sw, member, ap_sw)).epsilon(1e-15));
  CHECK_THROWS_AS(masked_loss(std::vector<double>{}, std::vector<double>{}, std::vector<std::size_t>{}, ap), InvalidArgument);
  CHECK_THROWS_AS(masked_loss(pred, truth, std::vector<std::size_t>{0, 0, 1, 2}, ap), InvalidArgument);
}

TEST_CASE("masked loss gradient matches finite differences") {
  std::vector<double> pred = {3, 9, 4, 1, 7};
  const std::vector<double> truth = {2, 10, 6, 1, 3};
  const std::vector<std::size_t> member = {0, 0, 1, 1, 2};
  const std::vector<double> ap = {12, 7, 3};
  const auto g = masked_loss_grad(pred, truth, member, ap);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double keep = pred[i];
    pred[i] = keep + gradcheck::kStep;
    const double up = masked_loss(pred, truth, member, ap);
    pred[i] = keep - gradcheck::kStep;
    const double down = masked_loss(pred, truth, member, ap);
    pred[i] = keep;
    CHECK(gradcheck::rel_error(g[i], (up - down) / (2 * gradcheck::kStep)) < 1e-6);
  }
}

TEST_CASE("loss_and_grad gradients") {
  Rng rng(8);
  Matrix pred = random_matrix(6, 1, rng);
  Eigen::VectorXd truth = random_matrix(6, 1, rng).col(0);
  const std::vector<std::size_t> groups = {4, 4, 9, 9, 9, 2};
  for (auto loss : {Loss::MSE, Loss::RMSE, Loss::MaskedRMSE}) {
    CAPTURE(to_string(loss));
    const auto *gp = loss == Loss::MaskedRMSE ? &groups : nullptr;
    Matrix grad;
    loss_and_grad(loss, pred, truth, gp, &grad);
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double keep = pred(i, 0);
      pred(i, 0) = keep + gradcheck::kStep;
      const double up = loss_and_grad(loss, pred, truth, gp, nullptr);
      pred(i, 0) = keep - gradcheck::kStep;
      const double down = loss_and_grad(loss, pred, truth, gp, nullptr);
      pred(i, 0) = keep;
      CHECK(gradcheck::rel_error(grad(i, 0), (up - down) / (2 * gradcheck::kStep)) < 1e-6);
    }
  }
  // Grouped masked loss equals the span form with AP truth = sum of members.
  const double a = loss_and_grad(Loss::MaskedRMSE, pred, truth, &groups, nullptr);
  const std::vector<double> p(pred.data(), pred.data() + 6), t(truth.data(), truth.data() + 6);
  const std::vector<std::size_t> m = {0, 0, 1, 1, 1, 2};
  const std::vector<double> ap = {t[0] + t[1], t[2] + t[3] + t[4], t[5]};
  CHECK(a == doctest::Approx(masked_loss(p, t, m, ap)).epsilon(1e-14));
}

TEST_CASE("optimizers reduce a quadratic") {
  for (auto kind : {OptimizerKind::Adam, OptimizerKind::RMSProp}) {
    Param p;
    p.value = Matrix::Constant(1, 2, 5.0);
    p.zero_grad();
    Optimizer opt(kind, 0.05);
    for (int i = 0; i < 500; ++i) {
      p.grad = 2 * p.value;
      opt.step({&p});
    }
    CHECK(p.value.norm() < 0.2);
  }
  CHECK(parse_optimizer("RMSProp") == OptimizerKind::RMSProp);
  CHECK_THROWS_AS(parse_optimizer("sgd"), ConfigError);
  CHECK(parse_loss("maskedRMSE") == Loss::MaskedRMSE);
  CHECK_THROWS_AS(parse_activation("tanh"), ConfigError);
}

TEST_CASE("network serialization round trips bit-exactly") {
  Rng rng(21);
  const std::vector<std::string> cols = {"rssi_mean", "sinr_mean", "ap_airtime_ch0", "z"};
  Network net(cols, {{{"rssi_", "sinr_"}, {{3, Activation::Prelu, true}}}}, {{2, Activation::Relu, true}, {1, Activation::Linear, false}},
              rng);
  const Matrix x = random_matrix(8, 4, rng);
  net.forward(x, true); // moves the batch-norm running statistics
  TextWriter w;
  net.write(w);
  TextReader r(w.str(), "net");
  Network back = Network::read(r);
  CHECK(r.done());
  CHECK(back.forward(x, false) == net.forward(x, false));
  TextWriter w2;
  back.write(w2);
  CHECK(w2.str() == w.str());
  TextReader bad("sequential 1\ndense 2 2 1 2 3\n", "bad");
  CHECK_THROWS_AS(Sequential::read(bad), ParseError);
}

TEST_CASE("network validation") {
  Rng rng(1);
  CHECK_THROWS_AS(Network({"a"}, {}, {}, rng), ConfigError);
  CHECK_THROWS_AS(Network({"a"}, {{{"zz"}, {{1, Activation::Relu, false}}}}, {{1, Activation::Relu, false}}, rng), ConfigError);
  Network net({"a", "b"}, {}, {{1, Activation::Linear, false}}, rng);
  CHECK_THROWS_AS(net.forward(Matrix::Zero(2, 3), false), InvalidArgument);
}
