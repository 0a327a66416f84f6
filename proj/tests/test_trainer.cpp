#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <numeric>

#include "capora/trainer.hpp"

using namespace capora;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 9;
  c.atom_vocab_size = 4;
  c.word_embed_dim = 6;
  c.atom_embed_dim = 5;
  c.hidden_dim = 5;
  return c;
}

Vocabulary tiny_vocab() {
  return Vocabulary::from_word_list(
      {"<bos>", "<eos>", "<unk>", "a", "man", "dog", "runs", "sits", "red"});
}

std::vector<Atom> tiny_atoms() {
  return {{"man", AtomCategory::Entity},
          {"dog", AtomCategory::Entity},
          {"run", AtomCategory::Action},
          {"sit", AtomCategory::Action}};
}

ModelParams tiny_model(std::uint64_t seed) {
  ModelParams p = init_params(tiny_config(), seed);
  p.vocab = tiny_vocab();
  p.set_atoms(tiny_atoms());
  return p;
}

AtomBag bag_of(std::vector<Atom> atoms) {
  AtomBag b;
  std::sort(atoms.begin(), atoms.end());
  b.atoms = std::move(atoms);
  return b;
}

Example example(const ModelParams& p, const std::vector<Token>& words,
                std::vector<Atom> atoms) {
  return {p.vocab.encode(words), bag_of(std::move(atoms))};
}

// Four caption patterns whose continuations are fully determined by the bag.
std::vector<Example> toy_examples(const ModelParams& p, int copies) {
  std::vector<Example> out;
  Atom man{"man", AtomCategory::Entity}, dog{"dog", AtomCategory::Entity};
  Atom run{"run", AtomCategory::Action}, sit{"sit", AtomCategory::Action};
  for (int i = 0; i < copies; ++i) {
    out.push_back(example(p, {"a", "man", "runs"}, {man, run}));
    out.push_back(example(p, {"a", "dog", "sits"}, {dog, sit}));
    out.push_back(example(p, {"a", "man", "sits"}, {man, sit}));
    out.push_back(example(p, {"a", "dog", "runs"}, {dog, run}));
  }
  return out;
}

}  // namespace

TEST_CASE("batch gradient is the mean over examples") {
  ModelParams p = tiny_model(2);
  Example ex = example(p, {"a", "man", "runs"},
                       {{"man", AtomCategory::Entity}, {"run", AtomCategory::Action}});
  BatchGradients one = compute_gradients(p, {ex});
  BatchGradients two = compute_gradients(p, {ex, ex});
  CHECK(one.mean_nll == Catch::Approx(two.mean_nll).epsilon(1e-15));
  std::vector<Eigen::MatrixXd> ga, gb;
  for_each_tensor(one.g, [&](const char*, const auto& t) { ga.emplace_back(t); });
  for_each_tensor(two.g, [&](const char*, const auto& t) { gb.emplace_back(t); });
  for (std::size_t i = 0; i < ga.size(); ++i) {
    double diff = (ga[i] - gb[i]).cwiseAbs().maxCoeff();
    CHECK(diff <= 1e-14);
  }
}

TEST_CASE("empty batch is rejected") {
  ModelParams p = tiny_model(2);
  CHECK_THROWS_AS(compute_gradients(p, {}), UsageError);
  CHECK_THROWS_AS(mean_nll(p, {}), UsageError);
}

TEST_CASE("analytic gradients agree with central differences") {
  ModelConfig c;
  c.vocab_size = 7;
  c.atom_vocab_size = 3;
  c.word_embed_dim = 5;
  c.atom_embed_dim = 5;
  c.hidden_dim = 4;
  GradCheckReport rep = gradient_check(c, 2026, 1e-5, false);
  INFO("worst " << rep.tensor << "[" << rep.row << "," << rep.col
                << "] analytic " << rep.analytic << " numeric " << rep.numeric);
  CHECK(rep.coordinates > 300);
  CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("a corrupted gradient coordinate is detected and located") {
  ModelConfig c;
  c.vocab_size = 7;
  c.atom_vocab_size = 3;
  c.word_embed_dim = 5;
  c.atom_embed_dim = 5;
  c.hidden_dim = 4;
  GradCheckReport rep = gradient_check(c, 2026, 1e-5, true);
  CHECK(rep.max_rel_error >= 1e-1);
  CHECK_FALSE(rep.tensor.empty());
}

TEST_CASE("adadelta leaves parameters alone under a zero gradient") {
  ModelConfig c = tiny_config();
  ModelTensors theta = make_tensors(c, 0.25);
  ModelTensors before = theta;
  AdadeltaState st = make_adadelta_state(c);
  Gradients g = make_tensors(c);  // all zero
  adadelta_step(st, theta, g, 0.95, 1e-6, 0.0);
  std::vector<Eigen::MatrixXd> ta, tb;
  for_each_tensor(theta, [&](const char*, const auto& t) { ta.emplace_back(t); });
  for_each_tensor(before, [&](const char*, const auto& t) { tb.emplace_back(t); });
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
}

TEST_CASE("adadelta first step from rest matches the hand-computed value") {
  // rho 0.95, eps 1e-6, g = 1 everywhere:
  //   E[g^2] = 0.05, delta = -sqrt(1e-6)/sqrt(0.05 + 1e-6) = -4.47207e-3.
  ModelConfig c = tiny_config();
  ModelTensors theta = make_tensors(c);
  AdadeltaState st = make_adadelta_state(c);
  Gradients g = make_tensors(c, 1.0);
  adadelta_step(st, theta, g, 0.95, 1e-6, 0.0);
  double expect = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
  CHECK(expect == Catch::Approx(-4.4721e-3).margin(1e-7));
  for_each_tensor(theta, [&](const char* name, const auto& t) {
    INFO(name);
    CHECK(t.minCoeff() == Catch::Approx(expect).epsilon(1e-12));
    CHECK(t.maxCoeff() == Catch::Approx(expect).epsilon(1e-12));
  });
}

TEST_CASE("adadelta is insensitive to a constant rescaling of the gradient") {
  ModelConfig c;
  c.vocab_size = 4;
  c.atom_vocab_size = 1;
  c.word_embed_dim = 2;
  c.atom_embed_dim = 2;
  c.hidden_dim = 2;
  auto run = [&](double scale) {
    ModelTensors theta = make_tensors(c);
    AdadeltaState st = make_adadelta_state(c);
    Gradients g = make_tensors(c, scale);
    for (int i = 0; i < 1000; ++i) adadelta_step(st, theta, g, 0.95, 1e-6, 0.0);
    return theta.E_w(0, 0);
  };
  double small = run(1.0), big = run(10.0);
  CHECK(std::abs(small - big) / std::abs(small) < 0.05);
}

TEST_CASE("zero weight decay reproduces the undecayed update") {
  ModelConfig c = tiny_config();
  ModelTensors theta = make_tensors(c, 0.5);
  ModelTensors theta2 = theta;
  AdadeltaState a = make_adadelta_state(c), b = make_adadelta_state(c);
  Gradients g = make_tensors(c, 0.125);
  adadelta_step(a, theta, g, 0.95, 1e-6, 0.0);
  // Manual transcription of the undecayed rule applied to one coordinate.
  double eg = 0.05 * 0.125 * 0.125;
  double delta = -(std::sqrt(1e-6) / std::sqrt(eg + 1e-6)) * 0.125;
  CHECK(theta.E_w(0, 0) == Catch::Approx(0.5 + delta).epsilon(1e-12));
  // And a positive decay shifts it.
  adadelta_step(b, theta2, g, 0.95, 1e-6, 1e-2);
  CHECK(theta2.E_w(0, 0) != theta.E_w(0, 0));
}

TEST_CASE("training loss trends downward over the first hundred updates") {
  ModelParams p = tiny_model(12);
  std::vector<Example> train = toy_examples(p, 8);  // 32 examples
  TrainConfig tc;
  tc.minibatch = 8;
  tc.max_updates = 100;
  tc.patience = 1000;
  tc.seed = 55;
  TrainResult r = train_model(p, train, train, tc);
  std::vector<double> nll;
  for (const auto& e : r.log.entries)
    if (!e.valid_nll) nll.push_back(e.train_nll);
  REQUIRE(nll.size() == 100);
  double head = std::accumulate(nll.begin(), nll.begin() + 10, 0.0) / 10;
  double tail = std::accumulate(nll.end() - 10, nll.end(), 0.0) / 10;
  INFO("first ten " << head << " last ten " << tail);
  CHECK(tail < head);
}

TEST_CASE("early stopping fires within one window past the patience") {
  ModelParams p = tiny_model(13);
  std::vector<Example> train = toy_examples(p, 2);
  TrainConfig tc;
  tc.minibatch = 4;
  tc.max_updates = 500;
  tc.patience = 3;
  tc.eval_every = 1;
  tc.seed = 9;
  // Constant validation: the first evaluation is the only improvement.
  TrainResult r = train_model(p, train, {}, tc,
                              [](const ModelParams&) { return 1.0; });
  CHECK(r.log.stop_reason == "patience");
  CHECK(r.log.best_update == 1);
  CHECK(r.log.total_updates <= r.log.best_update + tc.patience + 1);
}

TEST_CASE("a decreasing validation stream never triggers the patience stop") {
  ModelParams p = tiny_model(14);
  std::vector<Example> train = toy_examples(p, 2);
  TrainConfig tc;
  tc.minibatch = 4;
  tc.max_updates = 40;
  tc.patience = 2;
  tc.eval_every = 1;
  tc.seed = 10;
  double v = 100.0;
  TrainResult r = train_model(p, train, {}, tc,
                              [&v](const ModelParams&) { return v -= 1.0; });
  CHECK(r.log.stop_reason == "max_updates");
  CHECK(r.log.total_updates == 40);
  CHECK(r.log.best_update == 40);
}

TEST_CASE("recorded best validation values are non-increasing") {
  ModelParams p = tiny_model(15);
  std::vector<Example> train = toy_examples(p, 4);
  TrainConfig tc;
  tc.minibatch = 4;
  tc.max_updates = 60;
  tc.patience = 100;
  tc.seed = 31;
  TrainResult r = train_model(p, train, toy_examples(p, 1), tc);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.log.entries) {
    if (!e.valid_nll) continue;
    if (*e.valid_nll < best - 1e-5) best = *e.valid_nll;
  }
  CHECK(r.log.best_valid == best);
}

TEST_CASE("identical seeds produce bit-identical trained checkpoints") {
  auto run = [](const std::string& path) {
    ModelParams p = init_params(tiny_config(), 700);
    p.vocab = tiny_vocab();
    p.set_atoms(tiny_atoms());
    std::vector<Example> train = toy_examples(p, 4);
    TrainConfig tc;
    tc.minibatch = 4;
    tc.max_updates = 30;
    tc.patience = 100;
    tc.seed = 701;
    TrainResult r = train_model(p, train, toy_examples(p, 1), tc);
    model_to_checkpoint(r.params).save(path);
    return r.log.best_valid;
  };
  double va = run("/tmp/capora_test_train_a.bin");
  double vb = run("/tmp/capora_test_train_b.bin");
  CHECK(va == vb);
  std::ifstream fa("/tmp/capora_test_train_a.bin", std::ios::binary);
  std::ifstream fb("/tmp/capora_test_train_b.bin", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK_FALSE(sa.empty());
}

TEST_CASE("trained checkpoint round trip preserves the validation loss exactly") {
  ModelParams p = tiny_model(16);
  std::vector<Example> train = toy_examples(p, 4);
  std::vector<Example> valid = toy_examples(p, 1);
  TrainConfig tc;
  tc.minibatch = 4;
  tc.max_updates = 25;
  tc.patience = 100;
  tc.seed = 77;
  TrainResult r = train_model(p, train, valid, tc);
  double direct = mean_nll(r.params, valid);
  std::string path = "/tmp/capora_test_train_rt.bin";
  model_to_checkpoint(r.params).save(path);
  ModelParams q = model_from_checkpoint(Checkpoint::load(path));
  CHECK(mean_nll(q, valid) == direct);
}

TEST_CASE("dropout training still converges and stays deterministic") {
  ModelConfig c = tiny_config();
  c.dropout = true;
  c.dropout_rate = 0.3;
  auto run = [&]() {
    ModelParams p = init_params(c, 81);
    p.vocab = tiny_vocab();
    p.set_atoms(tiny_atoms());
    std::vector<Example> train = toy_examples(p, 4);
    TrainConfig tc;
    tc.minibatch = 4;
    tc.max_updates = 40;
    tc.patience = 100;
    tc.seed = 82;
    return train_model(p, train, toy_examples(p, 1), tc).log.best_valid;
  };
  double a = run(), b = run();
  CHECK(a == b);
  CHECK(std::isfinite(a));
}

TEST_CASE("random search samples inside the declared ranges") {
  ModelParams p = tiny_model(17);
  std::vector<Example> train = toy_examples(p, 2);
  std::vector<Example> valid = toy_examples(p, 1);
  SearchSpace space;
  space.dim_lo = 3;
  space.dim_hi = 7;
  space.weight_decay_lo = 1e-6;
  space.weight_decay_hi = 1e-2;
  TrainConfig tc;
  tc.minibatch = 4;
  tc.max_updates = 8;
  tc.patience = 100;
  SearchOutcome out = random_search(space, 5, tiny_config(), tc, train, valid,
                                    tiny_vocab(), tiny_atoms(), 321);
  REQUIRE(out.trials.size() == 5);
  for (const auto& t : out.trials) {
    CHECK(t.config.word_embed_dim >= 3);
    CHECK(t.config.word_embed_dim <= 7);
    CHECK(t.config.atom_embed_dim >= 3);
    CHECK(t.config.atom_embed_dim <= 7);
    CHECK(t.config.hidden_dim >= 3);
    CHECK(t.config.hidden_dim <= 7);
    CHECK(t.train.weight_decay >= 1e-6);
    CHECK(t.train.weight_decay <= 1e-2);
    CHECK(std::isfinite(t.result.log.best_valid));
  }
  // Best index really is the argmin of validation loss.
  for (const auto& t : out.trials)
    CHECK(out.trials[out.best_index].result.log.best_valid <=
          t.result.log.best_valid);
  CHECK_THROWS_AS(random_search(space, 0, tiny_config(), tc, train, valid,
                                tiny_vocab(), tiny_atoms(), 321),
                  UsageError);
}
