#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "corocchio/synth.hpp"

using namespace corocchio;

namespace {

SynthConfig small() {
  SynthConfig c;
  c.dim = 16;
  c.n_queries = 20;
  c.passages_per_query = 10;
  c.distractor_count = 100;
  return c;
}

double dot(const EmbeddingStore& s, std::size_t i, std::span<const double> v) { return inner_product(s.row(i), v); }

}  // namespace

TEST(GenCorpus, SingleGradeThreeCluster) {
  SynthConfig c;
  c.dim = 8;
  c.n_queries = 1;
  c.passages_per_query = 1;
  c.queries_per_topic = 1;
  c.grade_mix = {0, 0, 0, 1};
  c.topic_offset = 0.0;
  c.intra_cluster_noise = 0.0;
  c.distractor_count = 0;
  Corpus corpus = gen_corpus(c);
  ASSERT_EQ(corpus.passages.size(), 1u);
  ASSERT_EQ(corpus.queries.size(), 1u);
  EXPECT_EQ(corpus.queries.id(0), "q0");
  EXPECT_EQ(corpus.qrels.grade("q0", corpus.passages.id(0)), 3);
  EXPECT_EQ(corpus.qrels.judged("q0").size(), 1u);
  // Without noise the passage sits on its cluster centre, which here is the query.
  for (std::size_t d = 0; d < 8; ++d) EXPECT_DOUBLE_EQ(corpus.passages.row(0)[d], corpus.queries.row(0)[d]);

  c.intra_cluster_noise = 0.35;
  Corpus noisy = gen_corpus(c);
  EXPECT_GT(inner_product(noisy.passages.row(0), noisy.queries.row(0)), 0.9);
}

TEST(GenCorpus, SizesIdsAndJudgments) {
  SynthConfig c = small();
  Corpus corpus = gen_corpus(c);
  EXPECT_EQ(corpus.passages.size(), 20u * 10u + 100u);
  EXPECT_EQ(corpus.queries.size(), 20u * 5u);
  EXPECT_EQ(corpus.passages.dim(), 16u);
  EXPECT_EQ(corpus.queries.id(0), "q00-0");
  EXPECT_EQ(corpus.qrels.num_queries(), 100u);
  for (const auto& [qid, judged] : corpus.qrels.all()) {
    EXPECT_EQ(judged.size(), 10u);
    for (const auto& [pid, g] : judged) EXPECT_NE(pid.front(), 'd');
  }
  EXPECT_EQ(corpus.qrels.judged("q03-1"), corpus.qrels.judged("q03-4"));
}

TEST(GenCorpus, UnitNorms) {
  Corpus corpus = gen_corpus(small());
  for (const EmbeddingStore* s : {&corpus.passages, &corpus.queries}) {
    for (std::size_t i = 0; i < s->size(); ++i) {
      EXPECT_NEAR(std::sqrt(inner_product(s->row(i), s->row(i))), 1.0, 1e-9) << s->id(i);
    }
  }
}

TEST(GenCorpus, Deterministic) {
  SynthConfig c = small();
  Corpus a = gen_corpus(c), b = gen_corpus(c);
  EXPECT_EQ(a.passages, b.passages);
  EXPECT_EQ(a.queries, b.queries);
  EXPECT_EQ(a.qrels.all(), b.qrels.all());
  c.seed = 43;
  EXPECT_FALSE(gen_corpus(c).passages == a.passages);
}

TEST(GenCorpus, GradeThreeCloserThanDistractors) {
  SynthConfig c;
  Corpus corpus = gen_corpus(c);
  double rel = 0, dis = 0;
  std::size_t nr = 0, nd = 0;
  for (std::size_t qi = 0; qi < corpus.queries.size(); qi += 5) {
    const std::string qid = corpus.queries.id(qi);
    auto q = corpus.queries.row(qi);
    for (const auto& [pid, g] : corpus.qrels.judged(qid)) {
      if (g != 3) continue;
      rel += inner_product(corpus.passages.at(pid), q);
      ++nr;
    }
  }
  for (std::size_t i = 0; i < corpus.passages.size(); ++i) {
    if (corpus.passages.id(i).front() != 'd') continue;
    for (std::size_t qi = 0; qi < corpus.queries.size(); qi += 50) {
      dis += dot(corpus.passages, i, corpus.queries.row(qi));
      ++nd;
    }
  }
  ASSERT_GT(nr, 0u);
  EXPECT_GE(rel / nr - dis / nd, 0.3);
}

TEST(GenCorpus, ValidationErrors) {
  SynthConfig c = small();
  c.dim = 0;
  EXPECT_THROW(gen_corpus(c), ConfigError);
  c = small();
  c.grade_mix = {0.5, 0.5, 0, 0};
  EXPECT_THROW(gen_corpus(c), ConfigError);
  c.grade_mix = {0.5, 0.5, 0.5, 0};
  EXPECT_THROW(gen_corpus(c), ConfigError);
  c = small();
  c.intra_cluster_noise = -0.1;
  EXPECT_THROW(gen_corpus(c), ConfigError);
  c = small();
  c.unseen_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SplitQueries, DefaultSizesAndDisjointness) {
  SynthConfig c;
  c.queries_per_topic = 1;
  c.dim = 4;
  c.passages_per_query = 1;
  c.distractor_count = 0;
  Corpus corpus = gen_corpus(c);
  QuerySplit s = split_queries(corpus.queries, c);
  EXPECT_EQ(s.seen.size(), 160u);
  EXPECT_EQ(s.unseen_base.size(), 40u);
  std::set<std::string> ids(s.seen.ids().begin(), s.seen.ids().end());
  for (const auto& id : s.unseen_base.ids()) EXPECT_TRUE(ids.insert(id).second);
  EXPECT_EQ(ids.size(), 200u);
  EXPECT_TRUE(std::is_sorted(s.seen.ids().begin(), s.seen.ids().end()));

  QuerySplit again = split_queries(corpus.queries, c);
  EXPECT_EQ(again.seen, s.seen);
  EXPECT_EQ(again.unseen_base, s.unseen_base);
}

TEST(SplitQueries, FractionZeroKeepsEverythingSeen) {
  SynthConfig c = small();
  c.unseen_fraction = 0.0;
  Corpus corpus = gen_corpus(c);
  QuerySplit s = split_queries(corpus.queries, c);
  EXPECT_EQ(s.seen, corpus.queries);
  EXPECT_TRUE(s.unseen_base.empty());
  EXPECT_THROW(split_queries(EmbeddingStore(StoreKind::query, {}), c), EmptyStoreError);
}

TEST(UnseenCount, Rounding) {
  EXPECT_EQ(unseen_count(200, 0.2), 40u);
  EXPECT_EQ(unseen_count(3, 0.2), 1u);
  EXPECT_EQ(unseen_count(1, 0.2), 0u);
  EXPECT_EQ(unseen_count(10, 0.0), 0u);
}

TEST(UnseenQueries, ZeroNoiseIsIdentity) {
  Corpus corpus = gen_corpus(small());
  EXPECT_EQ(gen_unseen_queries(corpus.queries, 0.0, 7), corpus.queries);
  EXPECT_THROW(gen_unseen_queries(corpus.queries, -1.0, 7), DomainError);
}

TEST(UnseenQueries, StayNearTheirBase) {
  SynthConfig c;
  Corpus corpus = gen_corpus(c);
  EmbeddingStore u = gen_unseen_queries(corpus.queries, 0.15, 7);
  ASSERT_EQ(u.ids(), corpus.queries.ids());
  double sim = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    EXPECT_NEAR(std::sqrt(inner_product(u.row(i), u.row(i))), 1.0, 1e-9);
    sim += inner_product(u.row(i), corpus.queries.row(i));
  }
  sim /= static_cast<double>(u.size());
  // 1 / sqrt(1 + 64 * 0.15^2) is about 0.64 for the default dim.
  EXPECT_GT(sim, 0.6);
  EXPECT_LT(sim, 0.7);
  EXPECT_EQ(gen_unseen_queries(corpus.queries, 0.15, 7), u);
  EXPECT_FALSE(gen_unseen_queries(corpus.queries, 0.15, 8) == u);
}

TEST(SynthConfig, JsonHasEveryField) {
  auto j = to_json(SynthConfig{});
  EXPECT_EQ(j.size(), 12u);
  EXPECT_EQ(j["distractor_count"], 5000);
  EXPECT_EQ(j["grade_mix"].size(), 4u);
}
