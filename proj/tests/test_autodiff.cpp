#include "cota/autodiff.hpp"

#include <gtest/gtest.h>

#include "cota/common.hpp"
#include "gradcheck.hpp"

using namespace cota;
namespace ad = cota::ad;
using ad::NodeId;
using ad::Param;
using ad::Tape;

TEST(Autodiff, MatmulIdentityAndOnesGradient) {
  // I * A = A; d(sum(I*A))/dA is all ones (sum taken via ones^T * out * ones).
  Tape<double> t;
  Param<double> a("a", {3, 3});
  Rng rng(1);
  for (auto& v : a.value) v = rng.normal();
  const NodeId identity = t.input({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const NodeId a_node = t.param(a);
  const NodeId product = ad::matmul(t, identity, a_node);
  EXPECT_EQ(t.value(product), a.value);

  const NodeId ones_row = t.input({1, 3}, {1, 1, 1});
  const NodeId ones_col = t.input({3, 1}, {1, 1, 1});
  const NodeId total = ad::matmul(t, ad::matmul(t, ones_row, product), ones_col);
  t.backward(total);
  for (double g : a.grad) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Autodiff, SoftmaxUniformAndCrossEntropyLnC) {
  Tape<double> t;
  const int classes = 7;
  const NodeId logits = t.input({2, classes}, std::vector<double>(2 * classes, 0.42));
  const NodeId probs = ad::softmax(t, logits);
  for (double p : t.value(probs)) EXPECT_NEAR(p, 1.0 / classes, 1e-15);
  const NodeId loss = ad::cross_entropy(t, logits, {3, 5});
  EXPECT_NEAR(t.value(loss)[0], std::log(double(classes)), 1e-12);
}

TEST(Autodiff, FanOutAccumulates) {
  Tape<double> t;
  Param<double> x("x", {1});
  x.value = {1.5};
  const NodeId x_node = t.param(x);
  const NodeId doubled = ad::add(t, x_node, x_node);
  t.backward(doubled);
  EXPECT_DOUBLE_EQ(x.grad[0], 2.0);
}

TEST(Autodiff, IdentityChain) {
  Tape<double> t;
  Param<double> x("x", {1});
  x.value = {-0.75};
  const NodeId a = t.param(x);
  const NodeId b = ad::scale_add(t, a, 1.0, 0.0);
  const NodeId c = ad::scale_add(t, b, 1.0, 0.0);
  t.backward(c);
  EXPECT_DOUBLE_EQ(x.grad[0], 1.0);
  EXPECT_DOUBLE_EQ(t.value(c)[0], -0.75);
}

namespace {

double run_op_check(const std::string& name, int draws,
                    const std::function<gradcheck::Report(Rng&, std::uint64_t)>& one) {
  double worst = 0;
  Rng rng(fnv1a64(name));
  for (int d = 0; d < draws; ++d) {
    const auto report = one(rng, std::uint64_t(d));
    worst = std::max(worst, report.max_rel_error);
  }
  return worst;
}

}  // namespace

TEST(GradCheck, CoreOps) {
  const int draws = 3;  // the acceptance suite runs 20
  const double tol = 1e-4;

  EXPECT_LT(run_op_check("matmul", draws, [](Rng& rng, std::uint64_t seed) {
    const int m = int(rng.uniform_int(1, 4)), k = int(rng.uniform_int(1, 4)),
              n = int(rng.uniform_int(1, 4));
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("a", {m, k}, rng),
        gradcheck::random_input("b", {k, n}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::matmul(t, in[0], in[1]), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("add", draws, [](Rng& rng, std::uint64_t seed) {
    const int m = int(rng.uniform_int(1, 5)), n = int(rng.uniform_int(1, 5));
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("a", {m, n}, rng),
        gradcheck::random_input("b", {m, n}, rng),
        gradcheck::random_input("bias", {n}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::add(t, ad::add(t, in[0], in[1]), in[2]), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("mul_scale", draws, [](Rng& rng, std::uint64_t seed) {
    const int m = int(rng.uniform_int(1, 5)), n = int(rng.uniform_int(1, 5));
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("a", {m, n}, rng),
        gradcheck::random_input("b", {m, n}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(
          t, ad::scale_add(t, ad::mul(t, in[0], in[1]), -1.7, 0.3), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("concat", draws, [](Rng& rng, std::uint64_t seed) {
    const int m = int(rng.uniform_int(1, 4));
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("a", {m, int(rng.uniform_int(1, 3))}, rng),
        gradcheck::random_input("b", {m, int(rng.uniform_int(1, 3))}, rng),
        gradcheck::random_input("c", {m, int(rng.uniform_int(1, 3))}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::concat(t, {in[0], in[1], in[2]}, 1), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("slices", draws, [](Rng& rng, std::uint64_t seed) {
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("x", {3, 6}, rng),
        gradcheck::random_input("seq", {3, 4, 3}, rng),
        gradcheck::random_input("v", {8}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      const NodeId cols = ad::slice_cols(t, in[0], 1, 4);
      const NodeId step = ad::slice_time(t, in[1], 2);
      const NodeId vec = ad::slice_vec(t, in[2], 2, 5);
      const NodeId joined = ad::concat(t, {cols, step}, 1);
      return ad::weighted_sum(
          t, {{gradcheck::project(t, joined, seed), 1.0},
              {gradcheck::project(t, vec, seed + 1), 0.5}});
    });
  }), tol);

  EXPECT_LT(run_op_check("embedding", draws, [](Rng& rng, std::uint64_t seed) {
    const int vocab = int(rng.uniform_int(3, 8)), emb = int(rng.uniform_int(1, 4));
    std::vector<int> ids;
    for (int i = 0; i < 5; ++i) ids.push_back(int(rng.uniform_int(0, vocab - 1)));
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("table", {vocab, emb}, rng)};
    return gradcheck::check(inputs,
                            [seed, ids](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::embedding_lookup(t, in[0], ids, {5}), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("conv1d", draws, [](Rng& rng, std::uint64_t seed) {
    const int batch = int(rng.uniform_int(1, 3)), length = int(rng.uniform_int(2, 6));
    const int emb = int(rng.uniform_int(1, 4)), filters = int(rng.uniform_int(1, 4));
    const int width = int(rng.uniform_int(2, 5));
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("x", {batch, length, emb}, rng),
        gradcheck::random_input("w", {filters, width, emb}, rng),
        gradcheck::random_input("b", {filters}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::conv1d(t, in[0], in[1], in[2]), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("max_pool", draws, [](Rng& rng, std::uint64_t seed) {
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("x", {2, 5, 3}, rng, 1.0, /*kink_margin=*/0.02)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::max_pool_over_time(t, in[0]), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("activations", draws, [](Rng& rng, std::uint64_t seed) {
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("x", {3, 4}, rng, 1.0, /*kink_margin=*/0.02)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      const NodeId s = ad::sigmoid(t, in[0]);
      const NodeId th = ad::tanh_op(t, in[0]);
      const NodeId r = ad::relu(t, in[0]);
      const NodeId sm = ad::softmax(t, in[0]);
      return ad::weighted_sum(t, {{gradcheck::project(t, s, seed), 1.0},
                                  {gradcheck::project(t, th, seed + 1), 1.0},
                                  {gradcheck::project(t, r, seed + 2), 1.0},
                                  {gradcheck::project(t, sm, seed + 3), 1.0}});
    });
  }), tol);

  EXPECT_LT(run_op_check("dropout_train", draws, [](Rng& rng, std::uint64_t seed) {
    std::vector<Param<double>> inputs = {gradcheck::random_input("x", {4, 5}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::dropout(t, in[0], 0.4, true, 1234 + seed), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("batch_norm", draws, [](Rng& rng, std::uint64_t seed) {
    const int batch = int(rng.uniform_int(2, 6)), width = int(rng.uniform_int(1, 4));
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("x", {batch, width}, rng, 2.0),
        gradcheck::random_input("gamma", {width}, rng),
        gradcheck::random_input("beta", {width}, rng)};
    return gradcheck::check(inputs,
                            [seed, width](Tape<double>& t, const std::vector<NodeId>& in) {
      ad::BatchNormState<double> state(width);
      const NodeId train = ad::batch_norm_1d(t, in[0], in[1], in[2], state, true);
      ad::BatchNormState<double> eval_state(width);
      for (int i = 0; i < width; ++i) {
        eval_state.running_mean[std::size_t(i)] = 0.25 * i;
        eval_state.running_var[std::size_t(i)] = 1.0 + 0.5 * i;
      }
      const NodeId eval = ad::batch_norm_1d(t, in[0], in[1], in[2], eval_state, false);
      return ad::weighted_sum(t, {{gradcheck::project(t, train, seed), 1.0},
                                  {gradcheck::project(t, eval, seed + 1), 1.0}});
    });
  }), tol);

  EXPECT_LT(run_op_check("losses", draws, [](Rng& rng, std::uint64_t seed) {
    const int batch = 4, classes = 5;
    std::vector<int> targets;
    for (int i = 0; i < batch; ++i)
      targets.push_back(i == 2 ? -1 : int(rng.uniform_int(0, classes - 1)));
    std::vector<double> binary_targets, regression_targets;
    for (int i = 0; i < batch; ++i) {
      binary_targets.push_back(double(rng.uniform_int(0, 1)));
      regression_targets.push_back(rng.normal());
    }
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("logits", {batch, classes}, rng),
        gradcheck::random_input("z", {batch}, rng),
        gradcheck::random_input("pred", {batch}, rng)};
    return gradcheck::check(
        inputs, [targets, binary_targets, regression_targets](
                    Tape<double>& t, const std::vector<NodeId>& in) {
          const NodeId ce = ad::cross_entropy(t, in[0], targets);
          const NodeId bce = ad::binary_cross_entropy(t, in[1], binary_targets);
          const NodeId mse = ad::mean_squared_error(t, in[2], regression_targets);
          return ad::weighted_sum(t, {{ce, 1.0}, {bce, 0.7}, {mse, 1.3}});
        });
    (void)seed;
  }), tol);

  EXPECT_LT(run_op_check("row_select", draws, [](Rng& rng, std::uint64_t seed) {
    const int batch = 5, width = 3;
    std::vector<bool> mask;
    for (int i = 0; i < batch; ++i) mask.push_back(rng.uniform() < 0.5);
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("a", {batch, width}, rng),
        gradcheck::random_input("fallback", {width}, rng)};
    return gradcheck::check(inputs,
                            [seed, mask](Tape<double>& t, const std::vector<NodeId>& in) {
      return gradcheck::project(t, ad::row_select(t, mask, in[0], in[1]), seed);
    });
  }), tol);

  EXPECT_LT(run_op_check("rnn_steps", draws, [](Rng& rng, std::uint64_t seed) {
    const int batch = 2, input = 3, hidden = 2;
    std::vector<Param<double>> inputs = {
        gradcheck::random_input("x", {batch, input}, rng),
        gradcheck::random_input("h", {batch, hidden}, rng),
        gradcheck::random_input("c", {batch, hidden}, rng),
        gradcheck::random_input("wx_s", {input, hidden}, rng),
        gradcheck::random_input("wh_s", {hidden, hidden}, rng),
        gradcheck::random_input("b_s", {hidden}, rng),
        gradcheck::random_input("wx_l", {input, 4 * hidden}, rng),
        gradcheck::random_input("wh_l", {hidden, 4 * hidden}, rng),
        gradcheck::random_input("b_l", {4 * hidden}, rng),
        gradcheck::random_input("wx_g", {input, 3 * hidden}, rng),
        gradcheck::random_input("wh_g", {hidden, 3 * hidden}, rng),
        gradcheck::random_input("b_g", {3 * hidden}, rng)};
    return gradcheck::check(inputs, [seed](Tape<double>& t, const std::vector<NodeId>& in) {
      const NodeId simple = ad::rnn_step_simple(t, in[0], in[1], in[3], in[4], in[5]);
      const auto lstm = ad::lstm_step(t, in[0], in[1], in[2], in[6], in[7], in[8]);
      const NodeId gru = ad::gru_step(t, in[0], in[1], in[9], in[10], in[11]);
      return ad::weighted_sum(t, {{gradcheck::project(t, simple, seed), 1.0},
                                  {gradcheck::project(t, lstm.h, seed + 1), 1.0},
                                  {gradcheck::project(t, lstm.c, seed + 2), 1.0},
                                  {gradcheck::project(t, gru, seed + 3), 1.0}});
    });
  }), tol);
}

TEST(GradCheck, ThreeLayerMlp) {
  Rng rng(99);
  std::vector<Param<double>> inputs = {
      gradcheck::random_input("x", {4, 6}, rng),
      gradcheck::random_input("w1", {6, 8}, rng, 0.5),
      gradcheck::random_input("b1", {8}, rng, 0.1),
      gradcheck::random_input("w2", {8, 5}, rng, 0.5),
      gradcheck::random_input("b2", {5}, rng, 0.1),
      gradcheck::random_input("w3", {5, 3}, rng, 0.5),
      gradcheck::random_input("b3", {3}, rng, 0.1)};
  const std::vector<int> targets = {0, 2, 1, 2};
  const auto report =
      gradcheck::check(inputs, [&targets](Tape<double>& t, const std::vector<NodeId>& in) {
        NodeId h = ad::tanh_op(t, ad::add(t, ad::matmul(t, in[0], in[1]), in[2]));
        h = ad::tanh_op(t, ad::add(t, ad::matmul(t, h, in[3]), in[4]));
        const NodeId logits = ad::add(t, ad::matmul(t, h, in[5]), in[6]);
        return ad::cross_entropy(t, logits, targets);
      });
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(Dropout, EvalModeIsIdentity) {
  Tape<double> t;
  Rng rng(3);
  std::vector<double> values(20);
  for (auto& v : values) v = rng.normal();
  const NodeId x = t.input({4, 5}, values);
  const NodeId y = ad::dropout(t, x, 0.35, /*train_mode=*/false, 42);
  EXPECT_EQ(t.value(y), values);
}

TEST(Dropout, TrainModePreservesExpectation) {
  // Inverted dropout: E[y] == x, checked over 1e5 mask samples within 1%.
  const double p = 0.35;
  const int samples = 100000;
  double total = 0;
  for (int s = 0; s < samples; ++s) {
    Tape<double> t;
    const NodeId x = t.input({1}, {1.0});
    const NodeId y = ad::dropout(t, x, p, true, std::uint64_t(s));
    total += t.value(y)[0];
  }
  EXPECT_NEAR(total / samples, 1.0, 0.01);
}

TEST(Dropout, MaskIsPureFunctionOfSeed) {
  Tape<double> t;
  std::vector<double> values(16, 1.0);
  const NodeId x = t.input({4, 4}, values);
  const NodeId a = ad::dropout(t, x, 0.5, true, 7);
  const NodeId b = ad::dropout(t, x, 0.5, true, 7);
  const NodeId c = ad::dropout(t, x, 0.5, true, 8);
  EXPECT_EQ(t.value(a), t.value(b));
  EXPECT_NE(t.value(a), t.value(c));
}

TEST(BatchNorm, TrainModeNormalizesBatch) {
  const int batch = 64, width = 5;
  Rng rng(11);
  std::vector<double> values(std::size_t(batch * width));
  for (auto& v : values) v = 3.0 + rng.normal() * 2.0;
  Tape<double> t;
  const NodeId x = t.input({batch, width}, values);
  const NodeId gamma = t.input({width}, std::vector<double>(width, 1.0));
  const NodeId beta = t.input({width}, std::vector<double>(width, 0.0));
  ad::BatchNormState<double> state(width);
  const NodeId y = ad::batch_norm_1d(t, x, gamma, beta, state, true);
  const auto& out = t.value(y);
  for (int c = 0; c < width; ++c) {
    double mean = 0;
    for (int r = 0; r < batch; ++r) mean += out[std::size_t(r * width + c)];
    mean /= batch;
    double var = 0;
    for (int r = 0; r < batch; ++r) {
      const double d = out[std::size_t(r * width + c)] - mean;
      var += d * d;
    }
    var /= batch;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  const int width = 2;
  ad::BatchNormState<double> state(width);
  state.running_mean = {1.0, -1.0};
  state.running_var = {4.0, 0.25};
  Tape<double> t;
  const NodeId x = t.input({1, width}, {3.0, -2.0});
  const NodeId gamma = t.input({width}, {1.0, 1.0});
  const NodeId beta = t.input({width}, {0.0, 0.0});
  const NodeId y = ad::batch_norm_1d(t, x, gamma, beta, state, false);
  EXPECT_NEAR(t.value(y)[0], (3.0 - 1.0) / std::sqrt(4.0 + state.epsilon), 1e-9);
  EXPECT_NEAR(t.value(y)[1], (-2.0 + 1.0) / std::sqrt(0.25 + state.epsilon), 1e-9);
}

TEST(BatchNorm, ConstantFeatureNormalizesToZero) {
  Tape<double> t;
  const NodeId x = t.input({8, 1}, std::vector<double>(8, 5.5));
  const NodeId gamma = t.input({1}, {1.0});
  const NodeId beta = t.input({1}, {0.0});
  ad::BatchNormState<double> state(1);
  const NodeId y = ad::batch_norm_1d(t, x, gamma, beta, state, true);
  for (double v : t.value(y)) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(LossWeights, GradientScalesExactly) {
  // With w = 2 (exact in binary floating point), grad(w*L) == w*grad(L)
  // elementwise and exactly.
  auto run = [](double weight, Param<double>& w1) {
    Tape<double> t;
    const NodeId x = t.input({2, 3}, {0.5, -1.0, 2.0, 1.5, 0.25, -0.75});
    const NodeId w_node = t.param(w1);
    const NodeId h = ad::tanh_op(t, ad::matmul(t, x, w_node));
    const NodeId loss = ad::mean_squared_error(t, h, {1, 0, -1, 0.5});
    const NodeId weighted = ad::weighted_sum(t, {{loss, weight}});
    t.backward(weighted);
  };
  Param<double> base("w", {3, 2});
  Rng rng(5);
  for (auto& v : base.value) v = rng.normal();

  Param<double> w_a = base;
  run(1.0, w_a);
  Param<double> w_b = base;
  run(2.0, w_b);
  for (std::size_t i = 0; i < w_a.grad.size(); ++i)
    EXPECT_EQ(2.0 * w_a.grad[i], w_b.grad[i]);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Param<double> w("w", {3});
  w.value = {1.0, -2.0, 3.0};
  w.zero_grad();
  ad::AdamState<double> adam;
  std::vector<Param<double>*> params = {&w};
  adam.step(params);
  EXPECT_EQ(w.value, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(Adam, QuadraticConverges) {
  // f(w) = (w - 3)^2, 500 steps at lr 0.1.
  Param<double> w("w", {1});
  w.value = {0.0};
  ad::AdamConfig config;
  config.learning_rate = 0.1;
  ad::AdamState<double> adam(config);
  std::vector<Param<double>*> params = {&w};
  for (int step = 0; step < 500; ++step) {
    Tape<double> t;
    const NodeId w_node = t.param(w);
    const NodeId loss = ad::mean_squared_error(t, w_node, {3.0});
    t.backward(loss);
    adam.step(params);
  }
  EXPECT_LT(std::abs(w.value[0] - 3.0), 1e-2);
}

TEST(Adam, DeterministicUpdates) {
  auto run = []() {
    Param<double> w("w", {2});
    w.value = {1.0, -1.0};
    ad::AdamState<double> adam;
    std::vector<Param<double>*> params = {&w};
    for (int step = 0; step < 10; ++step) {
      Tape<double> t;
      const NodeId node = t.param(w);
      const NodeId loss = ad::mean_squared_error(t, node, {0.2, 0.8});
      t.backward(loss);
      adam.step(params);
    }
    return w.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Errors, NonScalarBackwardRejected) {
  Tape<double> t;
  const NodeId x = t.input({2, 2}, {1, 2, 3, 4});
  EXPECT_THROW(t.backward(x), TrainError);
}

TEST(Errors, ShapeMismatchNamesOpAndShapes) {
  Tape<double> t;
  const NodeId a = t.input({2, 3}, std::vector<double>(6, 1.0));
  const NodeId b = t.input({2, 3}, std::vector<double>(6, 1.0));
  try {
    ad::matmul(t, a, b);
    FAIL() << "expected TrainError";
  } catch (const TrainError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("matmul"), std::string::npos);
    EXPECT_NE(what.find("[2x3]"), std::string::npos);
  }
}

TEST(Errors, FiniteCheckFlag) {
  Tape<double> t;
  t.check_finite = true;
  const NodeId x = t.input({1}, {1e308});
  EXPECT_THROW(ad::add(t, x, x), TrainError);  // overflows to inf

  Tape<double> relaxed;
  const NodeId y = relaxed.input({1}, {1e308});
  EXPECT_NO_THROW(ad::add(relaxed, y, y));  // flag off by default
}

TEST(Checkpoint, RoundTripByName) {
  Param<double> a("encoder/table", {3, 2});
  Param<double> b("decoder/bias", {4});
  Rng rng(13);
  for (auto& v : a.value) v = rng.normal();
  for (auto& v : b.value) v = rng.normal();
  const std::string bytes =
      ad::serialize_params<double>({&a, &b});

  Param<double> a2("encoder/table", {3, 2});
  Param<double> b2("decoder/bias", {4});
  std::vector<Param<double>*> params = {&a2, &b2};
  ad::load_params(bytes, params);
  EXPECT_EQ(a2.value, a.value);
  EXPECT_EQ(b2.value, b.value);

  Param<double> wrong("decoder/bias", {5});
  std::vector<Param<double>*> bad = {&wrong};
  EXPECT_THROW(ad::load_params(bytes, bad), DataError);

  Param<double> missing("unknown/param", {4});
  std::vector<Param<double>*> absent = {&missing};
  EXPECT_THROW(ad::load_params(bytes, absent), DataError);
}

TEST(Checkpoint, FloatModelRoundTrip) {
  Param<float> a("w", {2, 2});
  a.value = {0.5f, -1.25f, 2.75f, 0.0f};
  const std::string bytes = ad::serialize_params<float>({&a});
  Param<float> back("w", {2, 2});
  std::vector<Param<float>*> params = {&back};
  ad::load_params(bytes, params);
  EXPECT_EQ(back.value, a.value);
}
