#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mrcgat/errors.hpp"
#include "mrcgat/trainer.hpp"

using namespace mrcgat;

namespace {

// Features per relation are the one-hot class plus N(0, 0.1^2) noise.
Dataset label_copy(std::size_t per_class, std::uint64_t seed) {
  Dataset d;
  d.class_names = {"CN", "MCI", "AD"};
  d.partition = ModalityPartition::from_dims(3, 3, 3);
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t c = 0; c < 3; ++c) d.feature_names.push_back(std::string(kRelationPrefixes[g]) + std::to_string(c));
  RngStream rng(seed, 0);
  for (std::size_t i = 0; i < 3 * per_class; ++i) {
    SubjectRecord r;
    r.subject_id = "L" + std::to_string(i);
    r.label = i % 3;
    for (std::size_t g = 0; g < 3; ++g)
      for (std::size_t c = 0; c < 3; ++c) r.features.push_back((c == i % 3 ? 1.0 : 0.0) + 0.1 * rng.normal());
    d.records.push_back(r);
  }
  return d;
}

TrainingConfig quick_config() {
  TrainingConfig c;
  c.q = 3;
  c.batch_size = 4;
  c.iterations = 5;
  c.layer1_width = 4;
  c.layer2_width = 6;
  c.hidden_width = 5;
  return c;
}

}  // namespace

TEST_CASE("config defaults, parsing and description") {
  TrainingConfig c;
  CHECK(c.q == 10);
  CHECK(c.batch_size == 32);
  CHECK(c.iterations == 1200);
  CHECK(c.k == 6);
  CHECK(c.tau == 1.0);
  CHECK(c.learning_rate == 0.01);
  CHECK(c.dropout == 0.2);
  CHECK(c.fold_count == 5);
  CHECK(c.infer_ensemble == 5);
  std::istringstream file("# comment\nq = 4\n tau=inf \nlambda = 0.3\noptimizer = sgd\n\nlabel_channel = false\n");
  apply_config_file(c, file);
  CHECK(c.q == 4);
  CHECK(std::isinf(c.tau));
  CHECK(c.lambda == std::optional<double>(0.3));
  CHECK(c.optimizer == OptimizerKind::kSgd);
  CHECK_FALSE(c.label_channel);
  const std::string text = describe_config(c);
  for (const auto& key : config_keys()) CHECK(text.find(std::string(key.name) + " = ") != std::string::npos);
  // describe -> parse round trip
  TrainingConfig back;
  std::istringstream again(text);
  apply_config_file(back, again);
  CHECK(describe_config(back) == text);
  CHECK_THROWS_AS(apply_config_value(c, "nope", "1"), ConfigError);
  CHECK_THROWS_AS(apply_config_value(c, "q", "x"), ConfigError);
  CHECK_THROWS_AS(apply_config_value(c, "k", "-1"), ConfigError);
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("focal loss values") {
  const std::vector<double> p = {0.5, 0.3, 0.2};
  CHECK(focal_loss(p, 0, 2.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-14));
  CHECK(focal_loss(p, 1, 0.0) == doctest::Approx(-std::log(0.3)).epsilon(1e-14));
  CHECK(focal_loss(std::vector<double>{1.0, 0.0}, 0, 2.0) == 0.0);
  CHECK(std::isfinite(focal_loss(std::vector<double>{1.0, 0.0}, 1, 2.0)));
}

TEST_CASE("episode draws") {
  const std::vector<std::vector<std::size_t>> pool = {{0, 3, 6, 9}, {1, 4, 7, 10}, {2, 5, 8, 11}};
  RngStream a(1, 2);
  RngStream b(1, 2);
  const EpisodeDraw da = draw_episode(pool, 2, a, true);
  const EpisodeDraw db = draw_episode(pool, 2, b, true);
  CHECK(da.support == db.support);
  CHECK(da.query == db.query);
  CHECK(da.support.size() == 6);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(da.support[2 * c] % 3 == c);
    CHECK(da.support[2 * c] < da.support[2 * c + 1]);
  }
  CHECK(std::find(da.support.begin(), da.support.end(), *da.query) == da.support.end());

  RngStream f(0, 0);
  const EpisodeDraw forced = draw_episode({{0, 1}, {2, 3}}, 1, f, false, {1, 3});
  CHECK(forced.support == std::vector<std::size_t>{0, 2});
  CHECK_FALSE(forced.query.has_value());
  RngStream g(0, 0);
  try {
    draw_episode({{0, 1}, {2}}, 2, g, false, {}, {"CN", "AD"});
    FAIL("expected a sampling error");
  } catch (const SamplingError& e) {
    CHECK(std::string(e.what()).find("AD") != std::string::npos);
  }
}

TEST_CASE("forced draw with q=1 and two subjects per class") {
  Dataset d = label_copy(2, 3);
  d = d.filter_classes({"CN", "AD"});
  TrainingConfig c = quick_config();
  c.q = 1;
  c.k = 1;
  std::set<std::size_t> queries;
  for (std::uint64_t s = 0; s < 40; ++s) {
    RngStream rng(9, s);
    const Episode ep = sample_episode(d, 1, rng, c);
    CHECK(ep.node_count() == 3);
    queries.insert(std::find_if(d.records.begin(), d.records.end(),
                                [&](const SubjectRecord& r) { return r.subject_id == ep.node_ids.back(); }) -
                   d.records.begin());
    CHECK(std::find(ep.node_ids.begin(), ep.node_ids.end() - 1, ep.node_ids.back()) == ep.node_ids.end() - 1);
  }
  CHECK(queries.size() == 4);
}

TEST_CASE("episode construction") {
  const Dataset d = label_copy(12, 4);
  TrainingConfig c;
  RngStream rng(5, 5);
  const Episode ep = sample_episode(d, 10, rng, c);
  CHECK(ep.node_count() == 31);
  CHECK(ep.input.query == 30);
  CHECK(ep.input.features.cols() == 9 + 3);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(*ep.node_labels[i] == i / 10);
    CHECK(ep.input.features(i, 9 + i / 10) == 1.0);
  }
  for (std::size_t c2 = 0; c2 < 3; ++c2) CHECK(ep.input.features(30, 9 + c2) == 0.0);
  CHECK(ep.query_label().has_value());
  for (const auto& g : ep.input.graphs) {
    const auto deg = g.in_degree();
    for (std::size_t v : deg) {
      CHECK(v >= 1);
      CHECK(v <= 6);
    }
  }
  c.label_channel = false;
  RngStream again(5, 5);
  CHECK(sample_episode(d, 10, again, c).input.features.cols() == 9);
}

TEST_CASE("adam and sgd updates") {
  ModelConfig mc;
  mc.feature_dim = 2;
  mc.class_count = 2;
  mc.layer1_width = 2;
  mc.layer2_width = 2;
  mc.hidden_width = 2;
  ModelParameters p = ModelParameters::initialize(mc, 1);
  const ModelParameters start = p;
  TrainingConfig c;
  AdamState state(p);
  std::vector<Matrix> zero;
  for (const Matrix& t : p.tensors()) zero.emplace_back(t.rows(), t.cols());
  apply_update(p, zero, state, c);
  CHECK(p == start);

  std::vector<Matrix> grad = zero;
  grad[0][0] = 0.3;
  grad[0][1] = -2.0;
  AdamState fresh(p);
  ModelParameters q = start;
  apply_update(q, grad, fresh, c);
  // First Adam step moves every nonzero-gradient entry by lr * g / (|g| + eps').
  CHECK(q.tensor(0)[0] == doctest::Approx(start.tensor(0)[0] - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
  CHECK(q.tensor(0)[1] == doctest::Approx(start.tensor(0)[1] + 0.01).epsilon(1e-9));
  CHECK(q.tensor(0)[2] == start.tensor(0)[2]);
  c.optimizer = OptimizerKind::kSgd;
  ModelParameters s = start;
  apply_update(s, grad, fresh, c);
  CHECK(s.tensor(0)[1] == start.tensor(0)[1] + 0.01 * 2.0);
}

TEST_CASE("batch gradient is order and thread invariant") {
  const Dataset d = label_copy(8, 6);
  TrainingConfig c = quick_config();
  const ModelParameters p = ModelParameters::initialize(c.model_config(9, 3), 3);
  std::vector<Episode> batch;
  for (std::size_t b = 0; b < 5; ++b) {
    RngStream rng(2, b);
    batch.push_back(sample_episode(d, c.q, rng, c));
    batch.back().dropout_stream = 100 + b;
  }
  const BatchResult ref = batch_gradient(p, batch, c);
  std::vector<Episode> shuffled = {batch[3], batch[0], batch[4], batch[2], batch[1]};
  c.threads = 3;
  const BatchResult other = batch_gradient(p, shuffled, c);
  CHECK(ref.loss == other.loss);
  CHECK(ref.gradient == other.gradient);

  const BatchResult one = batch_gradient(p, std::span<const Episode>(batch.data(), 1), c);
  std::vector<Episode> twice = {batch[0], batch[0]};
  const BatchResult dup = batch_gradient(p, twice, c);
  CHECK(dup.loss == one.loss);
  for (std::size_t t = 0; t < one.gradient.size(); ++t)
    CHECK(max_abs_diff(dup.gradient[t], one.gradient[t]) <= 1e-15);
}

TEST_CASE("training determinism and zero iterations") {
  const Dataset d = label_copy(8, 7);
  TrainingConfig c = quick_config();
  c.iterations = 0;
  CHECK(train(d, c).params == ModelParameters::initialize(c.model_config(9, 3), c.seed));
  c.iterations = 3;
  const TrainResult a = train(d, c);
  c.threads = 2;
  const TrainResult b = train(d, c);
  CHECK(a.params == b.params);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.loss_trace.size() == 3);
  CHECK(loss_trace_csv(a.loss_trace).rfind("iteration,mean_loss\n1,", 0) == 0);
}

TEST_CASE("label-copy loss halves within 50 iterations") {
  const Dataset d = label_copy(40, 8);
  TrainingConfig c;
  c.iterations = 50;
  const TrainResult r = train(d, c);
  CHECK(r.loss_trace.back() <= 0.5 * r.loss_trace.front());
}

TEST_CASE("inference excludes the query and ignores its label") {
  const Dataset d = label_copy(6, 9);
  TrainingConfig c = quick_config();
  const ModelParameters p = ModelParameters::initialize(c.model_config(9, 3), 4);
  std::vector<SubjectRecord> queries = {d.records[0], d.records[4]};
  const auto probs = infer(p, d, queries, c);
  queries[0].label = 2;
  queries[1].label.reset();
  CHECK(infer(p, d, queries, c) == probs);
  for (const auto& row : probs) {
    double s = 0.0;
    for (double v : row) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  // A class of exactly q once the query is removed still samples.
  c.q = 5;
  CHECK_NOTHROW(infer(p, d, queries, c));
  c.q = 6;
  CHECK_THROWS_AS(infer(p, d, queries, c), SamplingError);

  // R = 1 equals one explicit episode on the same stream.
  c.q = 3;
  c.infer_ensemble = 1;
  RngStream rng(c.seed, stream_id(StreamPurpose::kInference, 0, 0));
  const EpisodeDraw draw = draw_episode(d.indices_by_class(), c.q, rng, false, {0}, d.class_names);
  const Episode ep = build_episode(d, draw.support, d.records[0], false, c);
  CHECK(infer(p, d, std::span<const SubjectRecord>(queries.data(), 1), c)[0] == predict(p, ep.input));
}

TEST_CASE("stratified folds and cross-validation") {
  const Dataset d = label_copy(4, 10);
  const auto folds = stratified_folds(d, 2, 3);
  CHECK(folds == stratified_folds(d, 2, 3));
  std::vector<std::array<std::size_t, 3>> count(2, {0, 0, 0});
  for (std::size_t i = 0; i < d.records.size(); ++i) ++count[*folds[i]][*d.records[i].label];
  for (const auto& f : count)
    for (std::size_t v : f) CHECK(v == 2);

  TrainingConfig c = quick_config();
  c.q = 1;
  c.k = 2;
  c.fold_count = 2;
  c.iterations = 2;
  const CrossValidationResult cv = cross_validate(d, c);
  CHECK(cv.folds.size() == 2);
  std::multiset<std::string> tested;
  for (const auto& f : cv.folds) {
    tested.insert(f.test_ids.begin(), f.test_ids.end());
    for (const auto& id : f.test_ids)
      CHECK(std::find(f.train_ids.begin(), f.train_ids.end(), id) == f.train_ids.end());
  }
  CHECK(tested.size() == d.records.size());
  CHECK(std::set<std::string>(tested.begin(), tested.end()).size() == d.records.size());
  CHECK(cv.pooled.predictions.size() == d.records.size());
  const auto j = to_json(cv);
  CHECK(j["folds"].size() == 2);
  CHECK(j.contains("accuracy_std"));
  CHECK(to_json(cross_validate(d, c)).dump() == j.dump());
}

TEST_CASE("parallel_for runs every index and rethrows") {
  std::vector<int> hit(17, 0);
  parallel_for(17, 4, [&](std::size_t i) { hit[i] += 1; });
  CHECK(std::all_of(hit.begin(), hit.end(), [](int v) { return v == 1; }));
  CHECK_THROWS_AS(parallel_for(5, 2, [](std::size_t i) { if (i == 3) throw ConfigError("x"); }), ConfigError);
}
