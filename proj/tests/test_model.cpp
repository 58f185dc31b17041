#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "neucall/neucall.hpp"
#include "support/oracles.hpp"

using namespace neucall;

namespace {

Mat<double> forward(const Acfg& g, const NodeFeatures& f, const ModelParams<double>& p) {
  return rgcn_forward<double>(index_graph(g, p.shape), f, p, false, nullptr);
}

// Code-only model with an empty embedding, so a node's raw input is just its two scalars.
ModelShape scalar_shape(std::size_t hidden, std::size_t depth) {
  ModelShape s;
  s.config = feature_setting(1);
  s.mode = EmbeddingMode::external;
  s.embed_dim = 0;
  s.hidden = hidden;
  s.depth = depth;
  return s;
}

NodeFeatures scalar_features(std::vector<std::vector<double>> scalars) {
  NodeFeatures f;
  f.mode = EmbeddingMode::external;
  f.embed_dim = 0;
  const std::size_t n = scalars.size();
  f.types.assign(n, NodeType::code);
  f.pe.assign(n, {});
  f.tokens.assign(n, {});
  f.external.assign(n, {});
  f.scalars = std::move(scalars);
  return f;
}

Acfg code_graph(std::size_t n, EdgeList t_edges = {}) {
  Acfg g;
  g.config = feature_setting(1);
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back({NodeType::code, static_cast<std::uint32_t>(i), 0x1000 + i});
  g.relation(Relation::t) = std::move(t_edges);
  return g;
}

void set_identity(ModelParams<double>& p, int idx) {
  auto m = p.param(idx);
  m.setZero();
  for (Eigen::Index i = 0; i < std::min(m.rows(), m.cols()); ++i) m(i, i) = 1.0;
}

std::vector<double> block_values(const ModelParams<double>& p, const std::vector<double>& buf, const std::string& name) {
  for (const auto& b : p.layout.blocks) {
    if (b.name == name) return {buf.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                buf.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size())};
  }
  ADD_FAILURE() << "no block " << name;
  return {};
}

struct SmallCorpus {
  std::vector<CorpusProgram> programs;
  TrainConfig tc;
};

SmallCorpus small_corpus(std::size_t n_programs, bool resample, double dropout) {
  SmallCorpus c;
  c.tc.hidden = 32;
  c.tc.depth = 2;
  c.tc.embed_dim = 16;
  c.tc.pe_width = 4;
  c.tc.dropout = dropout;
  c.tc.resample_negatives = resample;
  c.tc.seed = 3;
  const auto config = feature_setting(10);
  std::vector<LabeledProgram> progs;
  for (auto& s : generate_synthetic_corpus(n_programs, 21)) progs.push_back({std::move(s.ir), std::move(s.labels)});
  c.programs = prepare_corpus(progs, extract_options(config, c.tc), model_shape(config, c.tc));
  return c;
}

}  // namespace

TEST(RgcnForward, SelfLoopThenRelu) {
  auto shape = scalar_shape(2, 2);
  auto p = ModelParams<double>::init(shape, {});
  p.values.assign(p.values.size(), 0.0);
  set_identity(p, p.in_w[0]);
  set_identity(p, p.self_w[0]);
  set_identity(p, p.self_w[1]);
  auto h = forward(code_graph(1), scalar_features({{1, -1}}), p);
  ASSERT_EQ(h.rows(), 1);
  EXPECT_EQ(h(0, 0), 1.0);
  EXPECT_EQ(h(0, 1), 0.0);
}

TEST(RgcnForward, DegreeNormalizedNeighbor) {
  auto shape = scalar_shape(1, 1);
  auto p = ModelParams<double>::init(shape, {});
  p.values.assign(p.values.size(), 0.0);
  set_identity(p, p.in_w[0]);  // takes the first scalar
  set_identity(p, p.rel_w[0][0]);
  auto h = forward(code_graph(2, {{0, 1}}), scalar_features({{2, 0}, {5, 0}}), p);
  EXPECT_EQ(h(1, 0), 2.0);
  EXPECT_EQ(h(0, 0), 0.0);
}

TEST(RgcnForward, EmptyGraph) {
  auto p = ModelParams<double>::init(scalar_shape(3, 2), {});
  auto h = forward(code_graph(0), scalar_features({}), p);
  EXPECT_EQ(h.rows(), 0);
}

TEST(RgcnForward, MismatchedFeaturesThrow) {
  auto p = ModelParams<double>::init(scalar_shape(3, 2), {});
  EXPECT_THROW(forward(code_graph(2), scalar_features({{1, 2}}), p), DimensionMismatch);
  EXPECT_THROW(forward(code_graph(1), scalar_features({{1, 2, 3}}), p), DimensionMismatch);
}

TEST(RgcnForward, MatchesDenseOracle) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    auto rc = oracle::random_case(rng);
    auto p = oracle::random_params(rc.shape, 1000 + trial);
    auto h = forward(rc.graph, rc.features, p);
    auto dense = oracle::dense_forward(rc.graph, rc.features, p);
    ASSERT_EQ(static_cast<std::size_t>(h.rows()), dense.h.size());
    for (std::size_t v = 0; v < dense.h.size(); ++v)
      for (std::size_t j = 0; j < rc.shape.hidden; ++j)
        ASSERT_NEAR(h(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j)), dense.h[v][j], 1e-9) << trial;
  }
}

TEST(PredictPair, RangeZeroWeightsAndOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    auto rc = oracle::random_case(rng);
    auto p = oracle::random_params(rc.shape, 50 + trial);
    auto h = forward(rc.graph, rc.features, p);
    auto dense = oracle::dense_forward(rc.graph, rc.features, p);
    for (const auto& s : rc.samples) {
      const double q = predict_pair(h, rc.features.types, s.callsite, s.candidate, p);
      EXPECT_GE(q, kProbabilityEpsilon);
      EXPECT_LE(q, 1 - kProbabilityEpsilon);
      EXPECT_NEAR(q, oracle::dense_predict(dense.h, s.callsite, s.candidate, p), 1e-6);
    }
  }
  auto rc = oracle::random_case(rng);
  auto p = oracle::random_params(rc.shape, 1);
  auto h = forward(rc.graph, rc.features, p);
  for (int idx : {p.w1, p.b1, p.w2, p.b2, p.w3, p.b3}) p.param(idx).setZero();
  EXPECT_EQ(predict_pair(h, rc.features.types, 0, 1, p), 0.5);
}

TEST(PredictPair, NonCodeNodeIsInvalid) {
  auto shape = scalar_shape(2, 1);
  shape.config = feature_setting(3);
  auto p = ModelParams<double>::init(shape, {});
  Mat<double> h = Mat<double>::Zero(2, 2);
  EXPECT_THROW(predict_pair(h, {NodeType::code, NodeType::data}, 0, 1, p), InvalidNode);
  EXPECT_THROW(predict_pair(h, {NodeType::code, NodeType::code}, 0, 5, p), InvalidNode);
}

TEST(PairLoss, SpotValues) {
  const double eps = kProbabilityEpsilon;
  EXPECT_NEAR(pair_loss(0.5, 0.5), 2 * std::log(2.0), 1e-12);
  EXPECT_LT(pair_loss(1 - eps, eps), 1e-5);
  EXPECT_NEAR(pair_loss(eps, eps), -std::log(eps) - std::log(1 - eps), 1e-9);
  EXPECT_NEAR(-std::log(eps), 16.118, 1e-3);
  EXPECT_TRUE(std::isfinite(pair_loss(0.0, 1.0)));
  const std::vector<double> probs = {0.5, 0.5};
  const std::vector<PairSample> samples = {{0, 1, true}, {0, 2, false}};
  EXPECT_NEAR(bce_loss<double>(probs, samples), pair_loss(0.5, 0.5), 1e-15);
}

// Central differences of the dense oracle loss against the analytic gradient, skipping fixtures
// where some relu input sits close enough to zero that the difference stencil could straddle it.
TEST(Backward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  const double step = 1e-3;
  for (int trial = 0; trial < 400 && checked < 20; ++trial) {
    auto rc = oracle::random_case(rng);
    auto p = oracle::random_params(rc.shape, 7 * trial + 3);
    double margin = 1e300;
    oracle::dense_loss(rc.graph, rc.features, p, rc.samples, &margin);
    if (margin < 2e-2) continue;
    const auto grad = backward<double>(index_graph(rc.graph, rc.shape), rc.features, p, rc.samples);
    ASSERT_EQ(grad.size(), p.values.size());
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      auto plus = p, minus = p;
      plus.values[i] += step;
      minus.values[i] -= step;
      const double fd = (oracle::dense_loss(rc.graph, rc.features, plus, rc.samples) -
                         oracle::dense_loss(rc.graph, rc.features, minus, rc.samples)) /
                        (2 * step);
      ASSERT_LE(std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)), 1e-3) << "trial " << trial << " param " << i;
    }
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Backward, RelationWithoutEdgesHasZeroGradient) {
  std::mt19937_64 rng(8);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto rc = oracle::random_case(rng, 10, 4, 2);
    const auto rels = rc.shape.relations();
    if (rels.size() < 2) continue;
    const Relation empty = rels.back();
    rc.graph.relation(empty).clear();
    auto p = oracle::random_params(rc.shape, trial);
    const auto grad = backward<double>(index_graph(rc.graph, rc.shape), rc.features, p, rc.samples);
    for (std::size_t l = 0; l < rc.shape.depth; ++l) {
      for (double g : block_values(p, grad, "rgcn" + std::to_string(l) + ".W_" + std::string(to_string(empty))))
        EXPECT_EQ(g, 0.0);
    }
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(Backward, DuplicatedSamplesDoubleSumGradient) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto rc = oracle::random_case(rng);
    auto p = oracle::random_params(rc.shape, trial);
    const auto gi = index_graph(rc.graph, rc.shape);
    auto twice = rc.samples;
    twice.insert(twice.end(), rc.samples.begin(), rc.samples.end());
    const auto g1 = backward<double>(gi, rc.features, p, rc.samples, Reduction::sum);
    const auto g2 = backward<double>(gi, rc.features, p, twice, Reduction::sum);
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2[i], 2 * g1[i], 1e-12 * std::max(1.0, std::abs(g1[i])));
    const auto m1 = backward<double>(gi, rc.features, p, rc.samples);
    const auto m2 = backward<double>(gi, rc.features, p, twice);
    for (std::size_t i = 0; i < m1.size(); ++i) EXPECT_NEAR(m2[i], m1[i], 1e-12 * std::max(1.0, std::abs(m1[i])));
  }
}

TEST(Dropout, EvalModeIsDeterministicTrainModeIsNot) {
  std::mt19937_64 rng(10);
  auto rc = oracle::random_case(rng, 10, 16, 3);
  auto p = oracle::random_params(rc.shape, 4, 0.5);
  const auto gi = index_graph(rc.graph, rc.shape);
  Rng r1(1);
  const auto a = rgcn_forward<double>(gi, rc.features, p, false, &r1);
  const auto b = rgcn_forward<double>(gi, rc.features, p, false, &r1);
  EXPECT_TRUE((a.array() == b.array()).all());
  const auto t = rgcn_forward<double>(gi, rc.features, p, true, &r1);
  EXPECT_FALSE((a.array() == t.array()).all());
}

TEST(Equivariance, RelabelingPermutesHiddenStates) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto rc = oracle::random_case(rng);
    auto p = oracle::random_params(rc.shape, trial);
    const std::size_t n = rc.graph.node_count();
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto g2 = oracle::permute_graph(rc.graph, perm);
    const auto f2 = oracle::permute_features(rc.features, perm);
    const auto h = forward(rc.graph, rc.features, p);
    const auto h2 = forward(g2, f2, p);
    for (std::size_t v = 0; v < n; ++v)
      for (Eigen::Index j = 0; j < h.cols(); ++j)
        EXPECT_NEAR(h2(perm[v], j), h(static_cast<Eigen::Index>(v), j), 1e-9);
    for (const auto& s : rc.samples) {
      EXPECT_NEAR(predict_pair(h2, f2.types, perm[s.callsite], perm[s.candidate], p),
                  predict_pair(h, rc.features.types, s.callsite, s.candidate, p), 1e-6);
    }
  }
}

TEST(TrainEpoch, ZeroLearningRateLeavesParametersUnchanged) {
  auto c = small_corpus(4, true, 0.2);
  c.tc.lr = 0.0;
  auto p = ModelParams<float>::init(model_shape(feature_setting(10), c.tc), hyperparameters(c.tc));
  const auto before = p.values;
  const auto items = training_items(c.programs, 0, c.tc);
  train_epoch<float>(items, p);
  EXPECT_EQ(std::memcmp(before.data(), p.values.data(), before.size() * sizeof(float)), 0);
  EXPECT_EQ(p.epoch, 1u);
}

TEST(TrainEpoch, LossDecreasesOverFirstFiveEpochs) {
  auto c = small_corpus(8, false, 0.0);
  auto p = ModelParams<float>::init(model_shape(feature_setting(10), c.tc), hyperparameters(c.tc));
  double prev = 1e300;
  for (int e = 0; e < 5; ++e) {
    const auto items = training_items(c.programs, p.epoch, c.tc);
    const auto st = train_epoch<float>(items, p);
    EXPECT_LT(st.mean_loss, prev) << "epoch " << e;
    EXPECT_GT(st.batches, 0u);
    prev = st.mean_loss;
  }
}

TEST(TrainEpoch, SameSeedSameStatistics) {
  auto c = small_corpus(4, true, 0.2);
  const auto shape = model_shape(feature_setting(10), c.tc);
  auto run = [&] {
    auto p = ModelParams<float>::init(shape, hyperparameters(c.tc));
    std::vector<double> losses;
    for (int e = 0; e < 2; ++e) losses.push_back(train_epoch<float>(training_items(c.programs, p.epoch, c.tc), p).mean_loss);
    return std::make_pair(losses, p.values);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(TrainEpoch, NonFiniteLossReportsBatch) {
  auto c = small_corpus(2, true, 0.0);
  auto p = ModelParams<float>::init(model_shape(feature_setting(10), c.tc), hyperparameters(c.tc));
  p.values[static_cast<std::size_t>(p.layout.blocks[static_cast<std::size_t>(p.b3)].offset)] = std::nanf("");
  auto items = training_items(c.programs, 0, c.tc);
  try {
    train_epoch<float>(items, p);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.batch(), 0u);
  }
}

TEST(Checkpoint, RoundTripIsBitwise) {
  auto c = small_corpus(2, true, 0.2);
  auto p = ModelParams<float>::init(model_shape(feature_setting(10), c.tc), hyperparameters(c.tc));
  train_epoch<float>(training_items(c.programs, 0, c.tc), p);
  const auto path = std::filesystem::temp_directory_path() / "neucall_model_roundtrip.nmdl";
  save_checkpoint(p, path);
  auto q = load_checkpoint<float>(path);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(q.adam_m, p.adam_m);
  EXPECT_EQ(q.adam_v, p.adam_v);
  EXPECT_EQ(q.step, p.step);
  EXPECT_EQ(q.epoch, p.epoch);
  EXPECT_EQ(q.rng, p.rng);
  EXPECT_EQ(q.shape.config, p.shape.config);
  EXPECT_EQ(q.shape.hidden, p.shape.hidden);
  EXPECT_EQ(q.hyper.seed, p.hyper.seed);
  EXPECT_EQ(q.hyper.lr, p.hyper.lr);
  EXPECT_EQ(serialize_checkpoint(q), serialize_checkpoint(p));
}

TEST(Checkpoint, TruncatedOrFlippedIsCorrupt) {
  auto p = ModelParams<float>::init(scalar_shape(4, 2), {});
  const auto bytes = serialize_checkpoint(p);
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{6}, std::size_t{0}}) {
    auto b = bytes;
    b.resize(cut);
    EXPECT_THROW(deserialize_checkpoint<float>(b), CorruptCheckpoint) << cut;
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 1;
  EXPECT_THROW(deserialize_checkpoint<float>(flipped), CorruptCheckpoint);
}

TEST(Checkpoint, VersionMismatch) {
  auto p = ModelParams<float>::init(scalar_shape(4, 2), {});
  auto bytes = serialize_checkpoint(p);
  bytes[4] = 0x7f;
  EXPECT_THROW(deserialize_checkpoint<float>(bytes), VersionMismatch);
}

TEST(Checkpoint, ResumeReproducesUninterruptedRun) {
  auto c = small_corpus(4, true, 0.2);
  c.tc.epochs = 4;
  const auto init = ModelParams<float>::init(model_shape(feature_setting(10), c.tc), hyperparameters(c.tc));
  const auto whole = fit(c.programs, {}, init, c.tc);

  auto first = c.tc;
  first.epochs = 2;
  const auto half = fit(c.programs, {}, init, first);
  const auto path = std::filesystem::temp_directory_path() / "neucall_model_resume.nmdl";
  save_checkpoint(half.last, path);
  const auto resumed = fit(c.programs, {}, load_checkpoint<float>(path), c.tc);

  ASSERT_EQ(resumed.log.size(), 2u);
  EXPECT_EQ(resumed.log.back().loss, whole.log.back().loss);
  EXPECT_EQ(serialize_checkpoint(resumed.last), serialize_checkpoint(whole.last));
}

TEST(ModelParams, RejectsBadHyperparameters) {
  Hyperparameters h;
  h.dropout = 1.0;
  EXPECT_THROW(ModelParams<float>::init(scalar_shape(4, 2), h), ConfigViolation);
  EXPECT_THROW(ModelParams<float>::init(scalar_shape(4, 0), {}), ConfigViolation);
}
