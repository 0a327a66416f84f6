#ifndef CAPORA_LM_HPP
#define CAPORA_LM_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "capora/atomizer.hpp"
#include "capora/checkpoint.hpp"
#include "capora/common.hpp"
#include "capora/corpus.hpp"

namespace capora {

// Gated recurrent language model whose every gate receives an additive
// projection of a fixed bag-of-atoms context vector. With an empty bag the
// context is zero and the model reduces to an unconditional LM.

struct ModelConfig {
  int vocab_size = 0;
  int atom_vocab_size = 0;
  int word_embed_dim = 0;
  int atom_embed_dim = 0;
  int hidden_dim = 0;
  bool dropout = false;
  double dropout_rate = 0.5;

  void validate() const {
    if (vocab_size < Vocabulary::kReserved)
      throw UsageError("vocab_size must cover the reserved tokens");
    if (atom_vocab_size < 0) throw UsageError("atom_vocab_size must be >= 0");
    if (word_embed_dim < 1 || atom_embed_dim < 1 || hidden_dim < 1)
      throw UsageError("model dimensions must be >= 1");
    if (dropout && (dropout_rate <= 0.0 || dropout_rate >= 1.0))
      throw UsageError("dropout rate must lie in (0,1)");
  }
};

struct ModelTensors {
  Eigen::MatrixXd E_w, E_a;
  Eigen::MatrixXd W_f, U_f, A_f;
  Eigen::VectorXd b_f;
  Eigen::MatrixXd W_i, U_i, A_i;
  Eigen::VectorXd b_i;
  Eigen::MatrixXd W_o, U_o, A_o;
  Eigen::VectorXd b_o;
  Eigen::MatrixXd W_c, U_c, A_c;
  Eigen::VectorXd b_c;
  Eigen::MatrixXd W_p;
  Eigen::VectorXd b_p;
  Eigen::MatrixXd U_p;
  Eigen::VectorXd d;
};

// Canonical tensor order shared by initialization, serialization, the
// optimizer, and gradient reports.
template <class Tensors, class Fn>
void for_each_tensor(Tensors&& t, Fn&& fn) {
  fn("E_w", t.E_w);
  fn("E_a", t.E_a);
  fn("W_f", t.W_f);
  fn("U_f", t.U_f);
  fn("A_f", t.A_f);
  fn("b_f", t.b_f);
  fn("W_i", t.W_i);
  fn("U_i", t.U_i);
  fn("A_i", t.A_i);
  fn("b_i", t.b_i);
  fn("W_o", t.W_o);
  fn("U_o", t.U_o);
  fn("A_o", t.A_o);
  fn("b_o", t.b_o);
  fn("W_c", t.W_c);
  fn("U_c", t.U_c);
  fn("A_c", t.A_c);
  fn("b_c", t.b_c);
  fn("W_p", t.W_p);
  fn("b_p", t.b_p);
  fn("U_p", t.U_p);
  fn("d", t.d);
}

inline ModelTensors make_tensors(const ModelConfig& c, double fill = 0.0) {
  ModelTensors t;
  t.E_w = Eigen::MatrixXd::Constant(c.word_embed_dim, c.vocab_size, fill);
  t.E_a = Eigen::MatrixXd::Constant(c.atom_embed_dim, c.atom_vocab_size, fill);
  auto gate = [&](Eigen::MatrixXd& W, Eigen::MatrixXd& U, Eigen::MatrixXd& A,
                  Eigen::VectorXd& b) {
    W = Eigen::MatrixXd::Constant(c.hidden_dim, c.word_embed_dim, fill);
    U = Eigen::MatrixXd::Constant(c.hidden_dim, c.hidden_dim, fill);
    A = Eigen::MatrixXd::Constant(c.hidden_dim, c.atom_embed_dim, fill);
    b = Eigen::VectorXd::Constant(c.hidden_dim, fill);
  };
  gate(t.W_f, t.U_f, t.A_f, t.b_f);
  gate(t.W_i, t.U_i, t.A_i, t.b_i);
  gate(t.W_o, t.U_o, t.A_o, t.b_o);
  gate(t.W_c, t.U_c, t.A_c, t.b_c);
  t.W_p = Eigen::MatrixXd::Constant(c.word_embed_dim, c.hidden_dim, fill);
  t.b_p = Eigen::VectorXd::Constant(c.word_embed_dim, fill);
  t.U_p = Eigen::MatrixXd::Constant(c.vocab_size, c.word_embed_dim, fill);
  t.d = Eigen::VectorXd::Constant(c.vocab_size, fill);
  return t;
}

struct ModelParams {
  ModelConfig config;
  Vocabulary vocab;
  std::vector<Atom> atoms;  // column order of E_a
  std::map<Atom, int> atom_id;
  std::vector<Atom> bag_filter;  // top-k list the training bags were cut against
  ModelTensors t;

  void set_atoms(std::vector<Atom> list) {
    atoms = std::move(list);
    atom_id.clear();
    for (std::size_t i = 0; i < atoms.size(); ++i)
      atom_id[atoms[i]] = static_cast<int>(i);
    config.atom_vocab_size = static_cast<int>(atoms.size());
  }
};

// Uniform(-0.05, 0.05) on every weight matrix, zero biases, forget bias 1;
// one seeded stream consumed in canonical order (biases draw nothing).
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  p.t = make_tensors(config);
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = rng.uniform(-0.05, 0.05);
  };
  fill(p.t.E_w);
  fill(p.t.E_a);
  fill(p.t.W_f); fill(p.t.U_f); fill(p.t.A_f);
  fill(p.t.W_i); fill(p.t.U_i); fill(p.t.A_i);
  fill(p.t.W_o); fill(p.t.U_o); fill(p.t.A_o);
  fill(p.t.W_c); fill(p.t.U_c); fill(p.t.A_c);
  fill(p.t.W_p);
  fill(p.t.U_p);
  p.t.b_f.setOnes();
  return p;
}

struct LstmState {
  Eigen::VectorXd h, c;
  static LstmState zero(int hidden_dim) {
    LstmState s;
    s.h = Eigen::VectorXd::Zero(hidden_dim);
    s.c = Eigen::VectorXd::Zero(hidden_dim);
    return s;
  }
};

struct AtomContextVector {
  Eigen::VectorXd phi;
};

inline AtomContextVector embed_bag(const AtomBag& bag, const ModelParams& params) {
  AtomContextVector ctx;
  ctx.phi = Eigen::VectorXd::Zero(params.config.atom_embed_dim);
  for (const auto& a : bag.atoms) {
    auto it = params.atom_id.find(a);
    if (it == params.atom_id.end())
      throw DataError("embed_bag: atom not in model vocabulary: " + a.str());
    ctx.phi += params.t.E_a.col(it->second);
  }
  return ctx;
}

// One unrolled timestep, everything the backward pass needs cached.
struct StepTrace {
  int input = -1;   // word consumed
  int target = -1;  // word predicted (when scoring)
  Eigen::VectorXd x;                   // input embedding after dropout
  Eigen::VectorXd f, i, o, ctilde, c, h;
  Eigen::VectorXd h_out;               // h after output-side dropout
  Eigen::VectorXd m;                   // tanh projection feeding the softmax
  Eigen::VectorXd logp;                // log-softmax over the vocabulary

  Eigen::VectorXd p() const { return logp.array().exp(); }
};

namespace detail {

inline Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
  return 1.0 / (1.0 + (-z.array()).exp());
}

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  double mx = logits.maxCoeff();
  Eigen::ArrayXd shifted = logits.array() - mx;
  double lse = std::log(shifted.exp().sum());
  return (shifted - lse).matrix();
}

// Per-caption constants: the atom projection through each gate.
struct AtomTerms {
  Eigen::VectorXd f, i, o, c;
};

inline AtomTerms atom_terms(const ModelTensors& t, const Eigen::VectorXd& phi) {
  return {t.A_f * phi, t.A_i * phi, t.A_o * phi, t.A_c * phi};
}

inline StepTrace step_core(const ModelTensors& t, const LstmState& state,
                           const Eigen::VectorXd& x, const AtomTerms& at,
                           const Eigen::VectorXd* out_mask = nullptr) {
  StepTrace s;
  s.x = x;
  s.f = sigmoid(t.W_f * x + t.U_f * state.h + at.f + t.b_f);
  s.i = sigmoid(t.W_i * x + t.U_i * state.h + at.i + t.b_i);
  s.o = sigmoid(t.W_o * x + t.U_o * state.h + at.o + t.b_o);
  s.ctilde = (t.W_c * x + t.U_c * state.h + at.c + t.b_c).array().tanh();
  s.c = s.f.cwiseProduct(state.c) + s.i.cwiseProduct(s.ctilde);
  s.h = s.o.cwiseProduct(s.c);
  s.h_out = out_mask ? s.h.cwiseProduct(*out_mask).eval() : s.h;
  s.m = (t.W_p * s.h_out + t.b_p).array().tanh();
  s.logp = log_softmax(t.U_p * s.m + t.d);
  if (!s.c.allFinite() || !s.logp.allFinite())
    throw DivergenceError("non-finite activation in recurrent step");
  return s;
}

}  // namespace detail

inline StepTrace lstm_step(const ModelParams& params, const LstmState& state,
                           int prev_word, const AtomContextVector& ctx) {
  if (prev_word < 0 || prev_word >= params.config.vocab_size)
    throw DataError("lstm_step: word index out of range");
  StepTrace s = detail::step_core(params.t, state, params.t.E_w.col(prev_word),
                                  detail::atom_terms(params.t, ctx.phi));
  s.input = prev_word;
  return s;
}

// Dropout masks drawn ahead of a caption's unroll so the loss stays a
// deterministic function of the parameters (finite differences depend on it).
// Inverted scaling: kept units multiply by 1/(1-rate).
struct DropoutMasks {
  std::vector<Eigen::VectorXd> input;   // word_embed_dim, one per step
  std::vector<Eigen::VectorXd> output;  // hidden_dim, one per step
};

inline DropoutMasks make_dropout_masks(const ModelConfig& config, int n_steps,
                                       Rng& rng) {
  DropoutMasks masks;
  const double keep = 1.0 - config.dropout_rate;
  auto draw = [&](int dim) {
    Eigen::VectorXd m(dim);
    for (int j = 0; j < dim; ++j)
      m[j] = rng.next_unit() < keep ? 1.0 / keep : 0.0;
    return m;
  };
  for (int s = 0; s < n_steps; ++s) {
    masks.input.push_back(draw(config.word_embed_dim));
    masks.output.push_back(draw(config.hidden_dim));
  }
  return masks;
}

// Full unroll over an encoded caption (<bos> w_1 ... w_T <eos>): step t
// consumes ids[t] and scores ids[t+1].
struct ForwardTrace {
  Eigen::VectorXd phi;
  std::vector<StepTrace> steps;
  double nll = 0.0;
};

inline ForwardTrace forward_caption(const ModelParams& params,
                                    const std::vector<int>& ids,
                                    const AtomContextVector& ctx,
                                    const DropoutMasks* masks = nullptr) {
  if (ids.size() < 2)
    throw DataError("forward_caption: caption must hold <bos> and <eos>");
  ForwardTrace trace;
  trace.phi = ctx.phi;
  auto at = detail::atom_terms(params.t, ctx.phi);
  LstmState state = LstmState::zero(params.config.hidden_dim);
  const std::size_t n_steps = ids.size() - 1;
  for (std::size_t t = 0; t < n_steps; ++t) {
    int input = ids[t], target = ids[t + 1];
    if (input < 0 || input >= params.config.vocab_size || target < 0 ||
        target >= params.config.vocab_size)
      throw DataError("forward_caption: word index out of range");
    Eigen::VectorXd x = params.t.E_w.col(input);
    if (masks) x = x.cwiseProduct(masks->input[t]);
    StepTrace s = detail::step_core(params.t, state, x, at,
                                    masks ? &masks->output[t] : nullptr);
    s.input = input;
    s.target = target;
    trace.nll -= s.logp[target];
    state.h = s.h;
    state.c = s.c;
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

inline double sequence_nll(const ModelParams& params, const std::vector<int>& ids,
                           const AtomBag& bag) {
  return forward_caption(params, ids, embed_bag(bag, params)).nll;
}

// ---------------------------------------------------------------------------
// Decoding.

struct DecodeConfig {
  int beam_width = 5;
  int max_len = 30;
};

inline std::vector<Token> generate_caption(const ModelParams& params,
                                           const AtomBag& bag,
                                           const DecodeConfig& decode) {
  if (decode.beam_width < 1) throw UsageError("beam_width must be >= 1");
  if (decode.max_len < 1) throw UsageError("max_len must be >= 1");

  struct Beam {
    std::vector<int> words;
    double score = 0.0;
    LstmState state;
    int last = Vocabulary::kBos;
  };
  auto ctx = embed_bag(bag, params);
  auto at = detail::atom_terms(params.t, ctx.phi);

  std::vector<Beam> alive(1);
  alive[0].state = LstmState::zero(params.config.hidden_dim);
  std::vector<Beam> finished;

  for (int step = 0; step < decode.max_len && !alive.empty(); ++step) {
    struct Cand {
      double score;
      int token;
      std::size_t beam;
    };
    std::vector<Cand> cands;
    std::vector<StepTrace> traces(alive.size());
    for (std::size_t b = 0; b < alive.size(); ++b) {
      traces[b] = detail::step_core(params.t, alive[b].state,
                                    params.t.E_w.col(alive[b].last), at);
      for (int w = 0; w < params.config.vocab_size; ++w) {
        if (w == Vocabulary::kBos) continue;  // never re-emit the start mark
        cands.push_back({alive[b].score + traces[b].logp[w], w, b});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.beam < b.beam;
    });

    std::vector<Beam> next;
    int slots = 0;
    for (const auto& c : cands) {
      if (slots >= decode.beam_width) break;
      ++slots;
      Beam nb = alive[c.beam];
      nb.score = c.score;
      if (c.token == Vocabulary::kEos) {
        finished.push_back(std::move(nb));
        continue;
      }
      nb.words.push_back(c.token);
      nb.last = c.token;
      nb.state.h = traces[c.beam].h;
      nb.state.c = traces[c.beam].c;
      next.push_back(std::move(nb));
    }
    alive = std::move(next);

    if (!finished.empty() && !alive.empty()) {
      double best_finished = finished[0].score;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      bool any_better = false;
      for (const auto& a : alive)
        if (a.score > best_finished) any_better = true;
      if (!any_better) break;  // log-probs only shrink scores from here on
    }
  }

  // Beams still alive hit max_len: they terminate by truncation.
  for (auto& a : alive) finished.push_back(std::move(a));

  const Beam* best = nullptr;
  for (const auto& f : finished)
    if (!best || f.score > best->score) best = &f;

  std::vector<Token> out;
  if (best)
    for (int w : best->words) out.push_back(params.vocab.word(w));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization to the shared container.

inline Checkpoint model_to_checkpoint(const ModelParams& params) {
  Checkpoint ck;
  ck.kind = "model";
  const auto& c = params.config;
  ck.meta = {
      {"vocab_size", std::to_string(c.vocab_size)},
      {"atom_vocab_size", std::to_string(c.atom_vocab_size)},
      {"word_embed_dim", std::to_string(c.word_embed_dim)},
      {"atom_embed_dim", std::to_string(c.atom_embed_dim)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"dropout", c.dropout ? "1" : "0"},
      {"dropout_rate", format_double(c.dropout_rate)},
  };
  std::vector<std::string> words;
  for (int i = 0; i < params.vocab.size(); ++i) words.push_back(params.vocab.word(i));
  ck.strings.emplace_back("vocab", std::move(words));
  std::vector<std::string> atom_lines;
  for (const auto& a : params.atoms)
    atom_lines.push_back(category_name(a.category) + " " + a.lemma);
  ck.strings.emplace_back("atoms", std::move(atom_lines));
  std::vector<std::string> filter_lines;
  for (const auto& a : params.bag_filter)
    filter_lines.push_back(category_name(a.category) + " " + a.lemma);
  ck.strings.emplace_back("bag_filter", std::move(filter_lines));
  for_each_tensor(params.t, [&ck](const char* name, const auto& tensor) {
    ck.tensors.emplace_back(name, Eigen::MatrixXd(tensor));
  });
  return ck;
}

inline ModelParams model_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != "model") throw DataError("checkpoint kind is not 'model'");
  ModelParams p;
  p.config.vocab_size = std::stoi(ck.require_meta("vocab_size"));
  p.config.atom_vocab_size = std::stoi(ck.require_meta("atom_vocab_size"));
  p.config.word_embed_dim = std::stoi(ck.require_meta("word_embed_dim"));
  p.config.atom_embed_dim = std::stoi(ck.require_meta("atom_embed_dim"));
  p.config.hidden_dim = std::stoi(ck.require_meta("hidden_dim"));
  p.config.dropout = ck.require_meta("dropout") == "1";
  p.config.dropout_rate = std::stod(ck.require_meta("dropout_rate"));

  const auto& words = ck.require_strings("vocab");
  if (static_cast<int>(words.size()) != p.config.vocab_size)
    throw DataError("checkpoint vocab size disagrees with its word list");
  p.vocab = Vocabulary::from_word_list(words);

  auto parse_atom_lines = [](const std::vector<std::string>& lines) {
    std::vector<Atom> atoms;
    for (const auto& line : lines) {
      auto sep = line.find(' ');
      if (sep == std::string::npos)
        throw DataError("bad atom line in checkpoint: " + line);
      atoms.push_back(Atom{line.substr(sep + 1), parse_category(line.substr(0, sep))});
    }
    return atoms;
  };
  p.set_atoms(parse_atom_lines(ck.require_strings("atoms")));
  p.bag_filter = parse_atom_lines(ck.require_strings("bag_filter"));
  if (static_cast<int>(p.atoms.size()) != p.config.atom_vocab_size)
    throw DataError("checkpoint atom count disagrees with its atom list");

  p.t = make_tensors(p.config);
  for_each_tensor(p.t, [&ck](const char* name, auto& tensor) {
    const Eigen::MatrixXd& stored = ck.require_tensor(name);
    if (stored.rows() != tensor.rows() || stored.cols() != tensor.cols())
      throw DataError(std::string("checkpoint tensor shape mismatch: ") + name);
    tensor = stored;
  });
  return p;
}

}  // namespace capora

#endif  // CAPORA_LM_HPP
