#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "neural_bandit.hpp"
#include "oracles.hpp"

namespace nb = neural_bandit;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<VectorXd> random_arms(std::size_t k, nb::Index half_dim, nb::Rng& rng) {
  std::vector<VectorXd> xs;
  for (std::size_t a = 0; a < k; ++a) xs.push_back(nb::preprocess_context(nb::sample_unit_ball(half_dim, rng)));
  return xs;
}

nb::NeuralUcbConfig ucb_config(const nb::NetworkShape& shape, double gamma) {
  nb::NeuralUcbConfig c;
  c.shape = shape;
  c.training.lambda = 1.0;
  c.training.eta = 1e-2;
  c.training.steps = 20;
  c.training.batch = 10;
  c.training.cadence = 5;
  c.width = nb::ConstantWidth{gamma};
  return c;
}

nb::NetworkParams symmetric(const nb::NetworkShape& shape, std::uint64_t seed) {
  nb::Rng rng = nb::make_stream(seed, nb::streams::kInitialization);
  return nb::init_symmetric(shape, rng);
}

}  // namespace

TEST(ArgmaxFirst, TiesGoToLowestIndex) {
  EXPECT_EQ(nb::argmax_first({1.0, 3.0, 3.0, 2.0}), 1u);
  EXPECT_EQ(nb::argmax_first({0.0, 0.0}), 0u);
}

TEST(NeuralUcb, FreshSelectionIsGradientNorm) {
  const nb::NetworkShape shape{8, 16, 2};
  const auto theta0 = symmetric(shape, 1);
  nb::NeuralUcb policy(ucb_config(shape, 0.7), theta0, nb::make_stream(1, 2));
  nb::Rng rng(3);
  const auto xs = random_arms(5, 4, rng);
  const auto s = policy.select(xs);
  std::vector<double> expected;
  for (const auto& x : xs) expected.push_back(0.7 * nb::gradient(theta0, x).norm() / std::sqrt(16.0));
  for (std::size_t a = 0; a < xs.size(); ++a) EXPECT_NEAR(s.scores[a], expected[a], 1e-12);
  EXPECT_EQ(s.action, nb::argmax_first(expected));
}

TEST(NeuralUcb, IdenticalContextsTieToZero) {
  const nb::NetworkShape shape{8, 16, 2};
  nb::NeuralUcb policy(ucb_config(shape, 1.0), symmetric(shape, 2), nb::make_stream(2, 2));
  nb::Rng rng(4);
  const VectorXd x = nb::preprocess_context(nb::sample_unit_ball(4, rng));
  EXPECT_EQ(policy.select(std::vector<VectorXd>{x, x, x}).action, 0u);
  EXPECT_THROW(policy.select(std::vector<VectorXd>{}), nb::ValidationError);
}

TEST(NeuralUcb, FirstUpdateLogDet) {
  const nb::NetworkShape shape{8, 16, 2};
  const auto theta0 = symmetric(shape, 3);
  auto config = ucb_config(shape, 1.0);
  config.training.lambda = 2.0;
  nb::NeuralUcb policy(config, theta0, nb::make_stream(3, 2));
  nb::Rng rng(5);
  const VectorXd x = nb::preprocess_context(nb::sample_unit_ball(4, rng));
  policy.update(x, 0.3);
  const double q = nb::gradient(theta0, x).squaredNorm() / 16.0;
  EXPECT_NEAR(policy.design().log_det_ratio(), std::log1p(q / 2.0), 1e-12);
  EXPECT_EQ(policy.round(), 1u);
}

TEST(NeuralUcb, ZeroStepsKeepsInitialization) {
  const nb::NetworkShape shape{8, 16, 2};
  const auto theta0 = symmetric(shape, 4);
  auto config = ucb_config(shape, 1.0);
  config.training.cadence = 1;
  config.training.steps = 0;
  nb::NeuralUcb policy(config, theta0, nb::make_stream(4, 2));
  nb::Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    const auto xs = random_arms(3, 4, rng);
    const auto s = policy.select(xs);
    policy.update(xs[s.action], 1.0);
    EXPECT_EQ(policy.network().theta().flat(), theta0.flat());
  }
  EXPECT_EQ(policy.network().size(), 30u);
}

TEST(NeuralUcb, GammaZeroIsArgmaxOfNetwork) {
  const nb::NetworkShape shape{8, 16, 2};
  nb::NeuralUcb policy(ucb_config(shape, 0.0), symmetric(shape, 5), nb::make_stream(5, 2));
  nb::Rng rng(7);
  for (int t = 0; t < 25; ++t) {
    const auto xs = random_arms(4, 4, rng);
    const auto s = policy.select(xs);
    std::vector<double> f;
    for (const auto& x : xs) f.push_back(nb::forward(policy.network().theta(), x));
    EXPECT_EQ(s.action, nb::argmax_first(f));
    policy.update(xs[s.action], std::uniform_real_distribution<double>(0, 1)(rng));
  }
}

TEST(NeuralUcb, GammaZeroMatchesGreedyEpsilonZero) {
  const nb::NetworkShape shape{8, 16, 2};
  const auto config = ucb_config(shape, 0.0);
  nb::NeuralUcb ucb(config, symmetric(shape, 6), nb::make_stream(6, 2));
  nb::NeuralGreedy greedy({shape, config.training, 0.0}, symmetric(shape, 6), nb::make_stream(6, 2));
  nb::SyntheticEnvironment env_a({nb::RewardKind::h1, 4, 4, 0.5}, nb::make_stream(6, 1));
  nb::SyntheticEnvironment env_b({nb::RewardKind::h1, 4, 4, 0.5}, nb::make_stream(6, 1));
  const auto a = nb::run_bandit(env_a, ucb, 60);
  const auto b = nb::run_bandit(env_b, greedy, 60);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(ucb.network().theta().flat(), greedy.network().theta().flat());
}

TEST(NeuralUcb, TheoreticalWidthTracksLogDet) {
  const nb::NetworkShape shape{8, 16, 2};
  auto config = ucb_config(shape, 1.0);
  nb::TheoreticalWidth w;
  w.inputs.lambda = 1.0;
  w.inputs.width = 16.0;
  w.inputs.eta = 1e-2;
  w.inputs.steps = 20.0;
  config.width = w;
  nb::NeuralUcb policy(config, symmetric(shape, 7), nb::make_stream(7, 2));
  nb::Rng rng(8);
  for (int t = 0; t < 7; ++t) {
    const auto xs = random_arms(3, 4, rng);
    policy.update(xs[policy.select(xs).action], 0.5);
  }
  auto in = w.inputs;
  in.round = 7.0;
  EXPECT_DOUBLE_EQ(policy.gamma(), nb::gamma_theoretical(in, policy.design().log_det_ratio()));
}

TEST(NeuralGreedy, EpsilonOneIsUniform) {
  const nb::NetworkShape shape{8, 16, 2};
  nb::NeuralGreedy policy({shape, ucb_config(shape, 0).training, 1.0}, symmetric(shape, 8), nb::make_stream(8, 2));
  nb::Rng rng(9);
  const auto xs = random_arms(4, 4, rng);
  std::vector<int> counts(4, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[policy.select(xs).action];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c : counts) EXPECT_NEAR(c, n / 4.0, 3.0 * sigma);
}

TEST(NeuralGreedy, EpsilonZeroTiesToZeroAndRangeChecked) {
  const nb::NetworkShape shape{8, 16, 2};
  nb::NeuralGreedy policy({shape, ucb_config(shape, 0).training, 0.0}, symmetric(shape, 9), nb::make_stream(9, 2));
  nb::Rng rng(10);
  // Identical arms tie exactly.
  const auto arm = random_arms(1, 4, rng).front();
  EXPECT_EQ(policy.select(std::vector<VectorXd>(5, arm)).action, 0u);
  EXPECT_THROW(nb::NeuralGreedy({shape, {}, 1.5}, symmetric(shape, 9), nb::Rng(1)), nb::ValidationError);
  EXPECT_THROW(nb::NeuralGreedy({shape, {}, -0.1}, symmetric(shape, 9), nb::Rng(1)), nb::ValidationError);
}

TEST(NeuralUcb0, FreshScoresAreScaledFeatureNorms) {
  nb::Rng init(11);
  const auto theta0 = nb::init_plain({6, 8, 2}, init);
  nb::NeuralUcb0Config config;
  config.lambda = 2.0;
  config.width = nb::ConstantWidth{0.4};
  nb::NeuralUcb0 policy(config, theta0);
  nb::Rng rng(12);
  const auto xs = random_arms(3, 3, rng);
  const auto s = policy.select(xs);
  for (std::size_t a = 0; a < xs.size(); ++a) {
    const VectorXd phi = nb::gradient(theta0, xs[a]) / std::sqrt(8.0);
    EXPECT_NEAR(s.scores[a], 0.4 * phi.norm() / std::sqrt(2.0), 1e-12);
  }
}

TEST(NeuralUcb0, OnlineMatchesBatchRidge) {
  nb::Rng init(13);
  const auto theta0 = nb::init_plain({6, 8, 2}, init);
  const auto phi = nb::ntk_feature_map(theta0);
  nb::RidgeFeatureModel model(phi, theta0.size(), 0.5, nb::DesignMode::full, 64);
  ASSERT_LE(theta0.size(), 100);
  nb::Rng rng(14);
  MatrixXd features(200, theta0.size());
  VectorXd rewards(200);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const VectorXd x = nb::preprocess_context(nb::sample_unit_ball(3, rng));
    rewards(t) = normal(rng);
    features.row(t) = phi(x).transpose();
    model.observe(x, rewards(t));
    if (t % 20 == 19 || t < 5) {
      const VectorXd batch = oracle::batch_ridge(features.topRows(t + 1), rewards.head(t + 1), 0.5);
      EXPECT_LE((model.offset() - batch).cwiseAbs().maxCoeff(), 1e-8) << "t=" << t + 1;
    }
  }
}

TEST(NeuralUcb0, ClosedFormIsEllipsoidMaximum) {
  nb::NeuralUcb0Config config;
  config.width = nb::ConstantWidth{0.8};
  nb::NeuralUcb0 policy(config, nb::identity_feature_map(), 10);
  nb::Rng rng(15);
  for (int t = 0; t < 30; ++t) policy.update(nb::sample_unit_ball(10, rng), std::normal_distribution<double>()(rng));
  const MatrixXd z = policy.model().design().matrix();
  for (int trial = 0; trial < 3; ++trial) {
    const VectorXd x = nb::sample_unit_ball(10, rng);
    const double closed = policy.select(std::vector<VectorXd>{x}).scores[0];
    const double sampled = oracle::ellipsoid_max(x, policy.model().offset(), z, 0.8, 10000, 90000, rng);
    EXPECT_GE(closed, sampled - 1e-12);
    EXPECT_LE(closed - sampled, 1e-3);
  }
}

TEST(NeuralUcb0, IdentityMapMatchesLinUcb) {
  nb::NeuralUcb0Config config;
  config.lambda = 1.0;
  config.width = nb::ConstantWidth{0.5};
  nb::NeuralUcb0 ucb0(config, nb::identity_feature_map(), 10);
  nb::LinUcb lin({0.5, 1.0}, 10);
  nb::SyntheticEnvironment env_a({nb::RewardKind::h3, 5, 6, 0.3}, nb::make_stream(16, 1));
  nb::SyntheticEnvironment env_b({nb::RewardKind::h3, 5, 6, 0.3}, nb::make_stream(16, 1));
  const auto a = nb::run_bandit(env_a, ucb0, 400);
  const auto b = nb::run_bandit(env_b, lin, 400);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_LE((ucb0.model().offset() - lin.theta()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(NeuralGreedy0, EpsilonZeroIsGreedyOnRidgeEstimate) {
  nb::NeuralGreedy0 policy({1.0, nb::DesignMode::full, 512, 0.0}, nb::identity_feature_map(), 4, nb::Rng(1));
  policy.update(VectorXd::Unit(4, 2), 1.0);
  const auto s = policy.select(std::vector<VectorXd>{VectorXd::Unit(4, 0), VectorXd::Unit(4, 2)});
  EXPECT_EQ(s.action, 1u);
  EXPECT_NEAR(s.scores[1], 0.5, 1e-15);
}

TEST(LinUcb, FreshScores) {
  nb::LinUcb policy({2.0, 4.0}, 3);
  const VectorXd x = (VectorXd(3) << 1, 2, 2).finished();
  EXPECT_NEAR(policy.select(std::vector<VectorXd>{x}).scores[0], 2.0 * 3.0 / 2.0, 1e-12);
}

TEST(LinUcb, OneStepRidge) {
  nb::LinUcb policy({0.0, 1.0}, 3);
  policy.update(VectorXd::Unit(3, 0), 1.0);
  EXPECT_NEAR(policy.theta()(0), 0.5, 1e-15);
  EXPECT_NEAR(policy.select(std::vector<VectorXd>{VectorXd::Unit(3, 0)}).scores[0], 0.5, 1e-15);
}

TEST(LinUcb, LearnsNoiselessLinearRewards) {
  nb::SyntheticEnvironment env({nb::RewardKind::linear, 5, 10, 0.0}, nb::make_stream(17, 1));
  nb::LinUcb policy({1.0, 1.0}, 5);
  const auto r = nb::run_bandit(env, policy, 500, nb::ContextView::raw);
  int optimal = 0;
  for (std::size_t t = 400; t < 500; ++t) optimal += r.instant_regret[t] == 0.0;
  EXPECT_GE(optimal, 90);
}

TEST(KernelUcb, NoDataScoreIsBeta) {
  nb::KernelUcb policy({1.0, 1.0, 0.7, 10});
  const auto s = policy.select(std::vector<VectorXd>{VectorXd::Ones(2), VectorXd::Zero(2)});
  EXPECT_DOUBLE_EQ(s.scores[0], 0.7);
  EXPECT_DOUBLE_EQ(s.scores[1], 0.7);
}

TEST(KernelUcb, OneObservationByHand) {
  nb::KernelUcb policy({1.0, 1.0, 1.0, 10});
  const VectorXd x0 = VectorXd::Unit(3, 1);
  policy.update(x0, 1.0);
  EXPECT_NEAR(policy.select(std::vector<VectorXd>{x0}).scores[0], 0.5 + std::sqrt(0.5), 1e-12);
}

TEST(KernelUcb, BlockInverseMatchesDirectSolve) {
  nb::KernelUcb policy({0.8, 0.5, 1.3, 100});
  nb::Rng rng(18);
  std::vector<VectorXd> xs;
  VectorXd ys(25);
  for (int i = 0; i < 25; ++i) {
    xs.push_back(nb::sample_unit_ball(3, rng));
    ys(i) = std::normal_distribution<double>()(rng);
    policy.update(xs.back(), ys(i));
  }
  MatrixXd k(25, 25);
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j) k(i, j) = nb::rbf_kernel(xs[i], xs[j], 0.8);
  k.diagonal().array() += 0.5;
  const VectorXd q = nb::sample_unit_ball(3, rng);
  VectorXd kq(25);
  for (int i = 0; i < 25; ++i) kq(i) = nb::rbf_kernel(xs[i], q, 0.8);
  const auto llt = k.llt();
  const double expected = kq.dot(llt.solve(ys)) + 1.3 * std::sqrt(std::max(0.0, 1.0 - kq.dot(llt.solve(kq))));
  EXPECT_NEAR(policy.select(std::vector<VectorXd>{q}).scores[0], expected, 1e-9);
}

TEST(KernelUcb, HugeBandwidthTies) {
  nb::KernelUcb policy({1e8, 1.0, 1.0, 10});
  nb::Rng rng(19);
  for (int i = 0; i < 5; ++i) policy.update(nb::sample_unit_ball(3, rng), 1.0);
  EXPECT_EQ(policy.select(std::vector<VectorXd>{nb::sample_unit_ball(3, rng), nb::sample_unit_ball(3, rng)}).action,
            0u);
}

TEST(KernelUcb, FreezesAtCap) {
  nb::KernelUcb policy({1.0, 1.0, 1.0, 3});
  nb::Rng rng(20);
  for (int i = 0; i < 10; ++i) policy.update(nb::sample_unit_ball(3, rng), 1.0);
  EXPECT_EQ(policy.stored(), 3u);
  EXPECT_EQ(policy.round(), 10u);
  EXPECT_THROW(nb::KernelUcb({1.0, 1.0, 1.0, 0}), nb::ValidationError);
}

TEST(Policies, ActionsAlwaysInRange) {
  nb::PolicyConfig p;
  p.width_m = 8;
  p.cadence = 10;
  p.steps = 5;
  p.batch = 8;
  for (const auto& algorithm : nb::known_algorithms()) {
    p.algorithm = algorithm;
    nb::SyntheticEnvironment env({nb::RewardKind::h2, 4, 5, 1.0}, nb::make_stream(21, 1));
    const auto view = nb::context_view(p);
    auto policy = nb::make_policy(p, nb::policy_context_dim(env, view), 21);
    const auto r = nb::run_bandit(env, *policy, 40, view);
    for (auto a : r.actions) EXPECT_LT(a, 5u) << algorithm;
    EXPECT_EQ(policy->round(), 40u) << algorithm;
  }
}
