#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "corocchio/feedback.hpp"
#include "test_support.hpp"

using namespace corocchio;
using corocchio::testing::make_store;

namespace {

SessionRecord session(const std::string& qid, std::vector<std::string> ranking,
                      std::vector<std::uint8_t> clicks) {
  return {qid, std::make_shared<const std::vector<std::string>>(std::move(ranking)), std::move(clicks)};
}

const FeedbackConfig kCfg{0.4, 0.6, Algorithm::corocchio, 3};

EmbeddingStore two_d() {
  return make_store(StoreKind::passage, {{"x", {1, 0}}, {"p", {0, 1}}, {"z", {0.5, 0.5}}});
}

void expect_vec(const DenseVector& v, std::vector<double> want, double tol = 1e-12) {
  ASSERT_EQ(v.dim(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(v[i], want[i], tol) << "coord " << i;
}

}  // namespace

TEST(Rocchio, Examples) {
  auto ps = two_d();
  DenseVector q{1, 0};
  std::vector<SessionRecord> one{session("q", {"p"}, {1})};
  expect_vec(rocchio(q, one, ps, kCfg), {0.4, 0.6});

  std::vector<SessionRecord> none{session("q", {"p"}, {0})};
  expect_vec(rocchio(q, none, ps, kCfg), {0.4, 0.0});

  std::vector<SessionRecord> two{session("q", {"p"}, {1}), session("q", {"p"}, {0})};
  expect_vec(rocchio(q, two, ps, kCfg), {0.4, 0.3});
}

TEST(Rocchio, Errors) {
  auto ps = two_d();
  DenseVector q{1, 0};
  EXPECT_THROW(rocchio(q, {}, ps, kCfg), NoFeedbackError);
  std::vector<SessionRecord> ghost{session("q", {"ghost"}, {1})};
  EXPECT_THROW(rocchio(q, ghost, ps, kCfg), MissingEmbeddingError);
  std::vector<SessionRecord> unclicked_ghost{session("q", {"ghost", "p"}, {0, 1})};
  EXPECT_NO_THROW(rocchio(q, unclicked_ghost, ps, kCfg));
  FeedbackConfig zero{0.0, 0.0, Algorithm::rocchio, 3};
  EXPECT_THROW(rocchio(q, unclicked_ghost, ps, zero), ConfigError);
  EXPECT_THROW(rocchio(DenseVector{1, 0, 0}, unclicked_ghost, ps, kCfg), DimensionError);
}

TEST(Rocchio, DuplicateClicksAccumulate) {
  auto ps = two_d();
  std::vector<SessionRecord> log{session("q", {"p", "x"}, {1, 0}), session("q", {"x", "p"}, {0, 1})};
  // Both sessions click p: 0.6 / 2 * (p + p) = 0.6 p.
  expect_vec(rocchio(DenseVector{1, 0}, log, ps, kCfg), {0.4, 0.6});
}

TEST(CoRocchio, InversePropensityExample) {
  auto ps = two_d();
  std::vector<SessionRecord> log{session("q", {"x", "p"}, {0, 1})};
  expect_vec(corocchio::corocchio(DenseVector{1, 0}, log, ps, 1.0, kCfg), {0.4, 1.2});
}

TEST(CoRocchio, EtaZeroIsBitIdenticalToRocchio) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> v(16);
    for (auto& x : v) x = normal(rng);
    rows.emplace_back("p" + std::to_string(i), v);
  }
  auto ps = make_store(StoreKind::passage, rows);
  std::vector<std::string> serp;
  for (auto& [id, v] : rows) serp.push_back(id);
  auto shared = std::make_shared<const std::vector<std::string>>(serp);
  std::vector<SessionRecord> log;
  std::bernoulli_distribution coin(0.3);
  for (int s = 0; s < 300; ++s) {
    std::vector<std::uint8_t> clicks(10);
    for (auto& c : clicks) c = coin(rng);
    log.push_back({"q", shared, clicks});
  }
  std::vector<double> qv(16);
  for (auto& x : qv) x = normal(rng);
  DenseVector q(qv);
  EXPECT_EQ(corocchio::corocchio(q, log, ps, 0.0, kCfg), rocchio(q, log, ps, kCfg));
}

TEST(CoRocchio, FeedbackTermIsLinearInPassageVectors) {
  auto ps = two_d();
  auto doubled = make_store(StoreKind::passage, {{"x", {2, 0}}, {"p", {0, 2}}, {"z", {1, 1}}});
  std::vector<SessionRecord> log{session("q", {"x", "z", "p"}, {1, 1, 0}),
                                 session("q", {"x", "z", "p"}, {0, 1, 1})};
  for (Algorithm a : {Algorithm::rocchio, Algorithm::corocchio}) {
    auto f1 = click_feedback(log, ps, 1.5, a, 0.6);
    auto f2 = click_feedback(log, doubled, 1.5, a, 0.6);
    for (std::size_t d = 0; d < f1.size(); ++d) EXPECT_EQ(f2[d], 2.0 * f1[d]);
  }
}

TEST(OptimalQstar, Examples) {
  auto ps = two_d();
  Qrels qrels;
  qrels.set("q", "p", 3);
  qrels.set("q", "z", 1);
  DenseVector q{1, 0};
  std::vector<Ranking> rankings{{"q", {{"p", 1.0}}, 10}};
  expect_vec(optimal_qstar(q, rankings, qrels, ps, kCfg), {0.4, 0.6});

  std::vector<Ranking> grade_one_only{{"q", {{"z", 1.0}, {"x", 0.5}}, 10}};
  expect_vec(optimal_qstar(q, grade_one_only, qrels, ps, kCfg), {0.4, 0.0});

  EXPECT_THROW(optimal_qstar(q, {}, qrels, ps, kCfg), NoFeedbackError);
}

TEST(OptimalQstar, PositiveScalingKeepsRanking) {
  auto ps = make_store(StoreKind::passage, {{"a", {1, 0}}, {"b", {0.2, 0.9}}, {"c", {-0.3, 0.4}}});
  Qrels none;
  std::vector<Ranking> r{{"q", {{"a", 1.0}}, 10}};
  DenseVector q{0.3, 0.7};
  DenseVector scaled = optimal_qstar(q, r, none, ps, kCfg);  // alpha * q only
  auto ids = [](const Ranking& rr) {
    std::vector<std::string> out;
    for (auto& i : rr.items) out.push_back(i.id);
    return out;
  };
  EXPECT_EQ(ids(top_k(ps, scaled, 3)), ids(top_k(ps, q, 3)));
}

// ---------------------------------------------------------------------------
// Unbiasedness and bias, against the analytic expectation and variance.
// ---------------------------------------------------------------------------

namespace {

struct Serp {
  EmbeddingStore passages;
  std::vector<std::string> ids;
  std::vector<int> grades;
  Qrels qrels;
};

Serp fixed_serp(std::size_t dim, std::vector<std::size_t> relevant_ranks) {
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> normal;
  Serp s;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (std::size_t i = 0; i < 10; ++i) {
    std::vector<double> v(dim);
    double n2 = 0;
    for (auto& x : v) {
      x = normal(rng);
      n2 += x * x;
    }
    for (auto& x : v) x /= std::sqrt(n2);
    std::string id = "p" + std::to_string(i);
    rows.emplace_back(id, v);
    s.ids.push_back(id);
    bool rel = std::find(relevant_ranks.begin(), relevant_ranks.end(), i + 1) != relevant_ranks.end();
    s.grades.push_back(rel ? 3 : 0);
    s.qrels.set("q", id, rel ? 3 : 0);
  }
  s.passages = make_store(StoreKind::passage, rows);
  return s;
}

std::vector<SessionRecord> simulate_log(const Serp& s, const UserModel& m, std::size_t n, std::uint64_t seed) {
  auto shared = std::make_shared<const std::vector<std::string>>(s.ids);
  std::vector<SessionRecord> log;
  log.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(seed_derive(seed, "q", i));
    log.push_back({"q", shared, simulate_clicks(s.grades, m, rng)});
  }
  return log;
}

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST(CoRocchio, ConvergesToQstarAtRootNRate) {
  const Serp s = fixed_serp(8, {1, 4, 7});
  DenseVector q = s.passages.vector("p0");
  std::vector<Ranking> rankings{{"q", {}, 10}};
  for (auto& id : s.ids) rankings[0].items.push_back({id, 0.0});
  DenseVector target = optimal_qstar(q, rankings, s.qrels, s.passages, kCfg);

  for (double eta : {0.5, 1.0, 2.0}) {
    // E||mean - q*||^2 = beta^2 / N * sum_rel ||p_i||^2 (1 - P_i) / P_i
    double per_session_var = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
      if (s.grades[i] < 2) continue;
      double pr = propensity(i + 1, eta);
      per_session_var += kCfg.beta * kCfg.beta * (1 - pr) / pr;
    }
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t n : {100u, 1000u, 10000u}) {
      auto log = simulate_log(s, UserModel(Behavior::perfect, eta), n, 99);
      DenseVector est = corocchio::corocchio(q, log, s.passages, eta, kCfg);
      double dist = l2(est.values(), target.values());
      double expected_rms = std::sqrt(per_session_var / static_cast<double>(n));
      EXPECT_LE(dist, 3.0 * expected_rms) << "eta " << eta << " n " << n;
      if (n == 10000) {
        EXPECT_LT(dist, previous);
      }
      previous = std::min(previous, dist);
    }
  }
}

TEST(Rocchio, BiasedUnderPositionBias) {
  const Serp s = fixed_serp(8, {1, 4, 7});
  DenseVector q = s.passages.vector("p0");
  std::vector<Ranking> rankings{{"q", {}, 10}};
  for (auto& id : s.ids) rankings[0].items.push_back({id, 0.0});
  DenseVector target = optimal_qstar(q, rankings, s.qrels, s.passages, kCfg);

  const std::size_t n = 10000;
  auto log = simulate_log(s, UserModel(Behavior::perfect, 2.0), n, 5);
  std::vector<std::vector<double>> terms;
  for (const auto& rec : log) {
    terms.push_back(click_feedback(std::span(&rec, 1), s.passages, 0.0, Algorithm::rocchio, kCfg.beta));
  }
  DenseVector est = rocchio(q, log, s.passages, kCfg);
  bool detectable = false;
  for (std::size_t d = 0; d < 8; ++d) {
    double mean = 0, ss = 0;
    for (auto& t : terms) mean += t[d];
    mean /= n;
    for (auto& t : terms) ss += (t[d] - mean) * (t[d] - mean);
    double se = std::sqrt(ss / (n - 1) / n);
    EXPECT_NEAR(est[d] - kCfg.alpha * q[d], mean, 1e-12);
    if (std::abs(est[d] - target[d]) > 5 * se) detectable = true;
  }
  EXPECT_TRUE(detectable);
}

// ---------------------------------------------------------------------------
// ANN
// ---------------------------------------------------------------------------

TEST(FeedbackAnn, SingleSelfNeighbourEqualsDirectMethod) {
  auto ps = two_d();
  auto qs = make_store(StoreKind::query, {{"qa", {1, 0}}, {"qb", {0, 1}}});
  ClickLog log;
  log.meta.eta = 1.0;
  log.sessions["qa"] = {session("qa", {"x", "p"}, {1, 1}), session("qa", {"x", "p"}, {0, 1})};
  log.sessions["qb"] = {session("qb", {"p", "z"}, {1, 0})};
  FeedbackConfig one = kCfg;
  one.ann_k = 1;
  for (Algorithm a : {Algorithm::rocchio, Algorithm::corocchio}) {
    one.algorithm = a;
    DenseVector direct = refine(qs.vector("qa"), log.for_query("qa"), ps, 1.0, one);
    EXPECT_EQ(feedback_ann(qs.vector("qa"), qs, log, ps, 1.0, one), direct);
  }
}

TEST(FeedbackAnn, AveragesNeighbourFeedback) {
  auto ps = two_d();
  auto qs = make_store(StoreKind::query, {{"qa", {1, 0}}, {"qb", {0.9, 0.1}}, {"qc", {-1, 0}}});
  ClickLog log;
  log.sessions["qa"] = {session("qa", {"x", "p"}, {1, 0})};
  log.sessions["qb"] = {session("qb", {"x", "p"}, {0, 1}), session("qb", {"x", "p"}, {0, 0})};
  log.sessions["qc"] = {session("qc", {"z"}, {1})};
  FeedbackConfig two = kCfg;
  two.ann_k = 2;
  two.algorithm = Algorithm::corocchio;
  DenseVector qu{1, 0.05};
  auto f1 = click_feedback(log.for_query("qa"), ps, 1.0, Algorithm::corocchio, 0.6);
  auto f2 = click_feedback(log.for_query("qb"), ps, 1.0, Algorithm::corocchio, 0.6);
  DenseVector got = feedback_ann(qu, qs, log, ps, 1.0, two);
  for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(got[d], 0.4 * qu[d] + (f1[d] + f2[d]) / 2, 1e-15);
  // qa contributes x = (1,0) weighted 0.6; qb contributes p at rank 2 weighted 2 * 0.6 / 2.
  expect_vec(got, {0.4 + 0.3, 0.02 + 0.3});
}

TEST(FeedbackAnn, KTruncatedToStoreSize) {
  auto ps = two_d();
  auto qs = make_store(StoreKind::query, {{"qa", {1, 0}}, {"qb", {0, 1}}});
  ClickLog log;
  log.sessions["qa"] = {session("qa", {"x"}, {1})};
  log.sessions["qb"] = {session("qb", {"p"}, {1})};
  DenseVector got = feedback_ann(DenseVector{1, 0}, qs, log, ps, 0.0, kCfg);
  expect_vec(got, {0.4 + 0.3, 0.3});
}

TEST(FeedbackAnn, NeighbourWithoutSessionsIsNamed) {
  auto ps = two_d();
  auto qs = make_store(StoreKind::query, {{"qa", {1, 0}}, {"lonely", {0.9, 0.1}}});
  ClickLog log;
  log.sessions["qa"] = {session("qa", {"x"}, {1})};
  try {
    feedback_ann(DenseVector{1, 0}, qs, log, ps, 1.0, kCfg);
    FAIL();
  } catch (const NoFeedbackError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
  EXPECT_THROW(feedback_ann(DenseVector{1, 0}, EmbeddingStore(StoreKind::query, {}), log, ps, 1.0, kCfg),
               EmptyStoreError);
}
