#ifndef CAPORA_TRAINER_HPP
#define CAPORA_TRAINER_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "capora/common.hpp"
#include "capora/lm.hpp"

namespace capora {

// One training example: an encoded caption (<bos> ... <eos>) plus its
// conditioning bag.
struct Example {
  std::vector<int> ids;
  AtomBag bag;
};

using Gradients = ModelTensors;

// Walk two/four parallel tensor sets in the canonical order.
template <class A, class B, class Fn>
void for_each_tensor_zip(A&& a, B&& b, Fn&& fn) {
  for_each_tensor(a, [&](const char* name, auto& ta) {
    for_each_tensor(b, [&](const char* name_b, auto& tb) {
      if (std::string_view(name) == name_b) {
        if constexpr (std::is_same_v<std::decay_t<decltype(ta)>,
                                     std::decay_t<decltype(tb)>>)
          fn(name, ta, tb);
      }
    });
  });
}

namespace detail {

inline void bptt_caption(const ModelParams& params, const Example& ex,
                         const DropoutMasks* masks, Gradients& g, double& nll_sum) {
  auto ctx = embed_bag(ex.bag, params);
  ForwardTrace trace = forward_caption(params, ex.ids, ctx, masks);
  nll_sum += trace.nll;

  const auto& t = params.t;
  const int hidden = params.config.hidden_dim;
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hidden);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(hidden);
  Eigen::VectorXd aF_sum = Eigen::VectorXd::Zero(hidden);
  Eigen::VectorXd aI_sum = Eigen::VectorXd::Zero(hidden);
  Eigen::VectorXd aO_sum = Eigen::VectorXd::Zero(hidden);
  Eigen::VectorXd aC_sum = Eigen::VectorXd::Zero(hidden);

  for (int step = static_cast<int>(trace.steps.size()) - 1; step >= 0; --step) {
    const StepTrace& s = trace.steps[static_cast<std::size_t>(step)];

    // Output stack: logits = U_p m + d, m = tanh(W_p h_out + b_p).
    Eigen::VectorXd dlogit = s.p();
    dlogit[s.target] -= 1.0;
    g.U_p.noalias() += dlogit * s.m.transpose();
    g.d += dlogit;
    Eigen::VectorXd dm = t.U_p.transpose() * dlogit;
    Eigen::VectorXd dz = dm.cwiseProduct(
        (1.0 - s.m.array().square()).matrix());
    g.W_p.noalias() += dz * s.h_out.transpose();
    g.b_p += dz;
    Eigen::VectorXd dh_out = t.W_p.transpose() * dz;
    if (masks) dh_out = dh_out.cwiseProduct(masks->output[static_cast<std::size_t>(step)]);

    Eigen::VectorXd dh = dh_next + dh_out;
    Eigen::VectorXd do_ = dh.cwiseProduct(s.c);  // h = o ⊙ c
    Eigen::VectorXd dc = dc_next + dh.cwiseProduct(s.o);

    Eigen::VectorXd c_prev = step > 0 ? trace.steps[static_cast<std::size_t>(step) - 1].c
                                      : Eigen::VectorXd::Zero(hidden);
    Eigen::VectorXd h_prev = step > 0 ? trace.steps[static_cast<std::size_t>(step) - 1].h
                                      : Eigen::VectorXd::Zero(hidden);

    Eigen::VectorXd df = dc.cwiseProduct(c_prev);
    Eigen::VectorXd di = dc.cwiseProduct(s.ctilde);
    Eigen::VectorXd dct = dc.cwiseProduct(s.i);

    Eigen::VectorXd af = df.cwiseProduct(s.f).cwiseProduct((1.0 - s.f.array()).matrix());
    Eigen::VectorXd ai = di.cwiseProduct(s.i).cwiseProduct((1.0 - s.i.array()).matrix());
    Eigen::VectorXd ao = do_.cwiseProduct(s.o).cwiseProduct((1.0 - s.o.array()).matrix());
    Eigen::VectorXd ac = dct.cwiseProduct((1.0 - s.ctilde.array().square()).matrix());

    g.W_f.noalias() += af * s.x.transpose();
    g.W_i.noalias() += ai * s.x.transpose();
    g.W_o.noalias() += ao * s.x.transpose();
    g.W_c.noalias() += ac * s.x.transpose();
    g.U_f.noalias() += af * h_prev.transpose();
    g.U_i.noalias() += ai * h_prev.transpose();
    g.U_o.noalias() += ao * h_prev.transpose();
    g.U_c.noalias() += ac * h_prev.transpose();
    g.b_f += af;
    g.b_i += ai;
    g.b_o += ao;
    g.b_c += ac;
    aF_sum += af;
    aI_sum += ai;
    aO_sum += ao;
    aC_sum += ac;

    Eigen::VectorXd dx = t.W_f.transpose() * af + t.W_i.transpose() * ai +
                         t.W_o.transpose() * ao + t.W_c.transpose() * ac;
    if (masks) dx = dx.cwiseProduct(masks->input[static_cast<std::size_t>(step)]);
    g.E_w.col(s.input) += dx;

    dh_next = t.U_f.transpose() * af + t.U_i.transpose() * ai +
              t.U_o.transpose() * ao + t.U_c.transpose() * ac;
    dc_next = dc.cwiseProduct(s.f);
  }

  // Atom projections see the same Φ at every step.
  g.A_f.noalias() += aF_sum * trace.phi.transpose();
  g.A_i.noalias() += aI_sum * trace.phi.transpose();
  g.A_o.noalias() += aO_sum * trace.phi.transpose();
  g.A_c.noalias() += aC_sum * trace.phi.transpose();
  Eigen::VectorXd dphi = t.A_f.transpose() * aF_sum + t.A_i.transpose() * aI_sum +
                         t.A_o.transpose() * aO_sum + t.A_c.transpose() * aC_sum;
  for (const auto& atom : ex.bag.atoms)
    g.E_a.col(params.atom_id.at(atom)) += dphi;
}

}  // namespace detail

struct BatchGradients {
  Gradients g;
  double mean_nll = 0.0;
};

// Exact gradients of the batch-mean per-caption NLL via backpropagation
// through time; examples reduce in batch order so results are bit-stable.
inline BatchGradients compute_gradients(const ModelParams& params,
                                        const std::vector<Example>& batch,
                                        const std::vector<DropoutMasks>* masks = nullptr) {
  if (batch.empty()) throw UsageError("compute_gradients: empty batch");
  if (masks && masks->size() != batch.size())
    throw UsageError("compute_gradients: one mask set per example required");
  BatchGradients out;
  out.g = make_tensors(params.config);
  double nll_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    detail::bptt_caption(params, batch[i], masks ? &(*masks)[i] : nullptr, out.g,
                         nll_sum);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for_each_tensor(out.g, [&](const char* name, auto& tensor) {
    tensor *= inv;
    if (!tensor.allFinite())
      throw DivergenceError(std::string("non-finite gradient in ") + name);
  });
  out.mean_nll = nll_sum * inv;
  return out;
}

// Mean per-caption NLL over a fixed-order example list (no dropout).
inline double mean_nll(const ModelParams& params, const std::vector<Example>& examples) {
  if (examples.empty()) throw UsageError("mean_nll: empty example list");
  double sum = 0.0;
  for (const auto& ex : examples)
    sum += forward_caption(params, ex.ids, embed_bag(ex.bag, params)).nll;
  return sum / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------
// Adadelta.

struct AdadeltaState {
  ModelTensors eg;  // running average of squared gradients
  ModelTensors ed;  // running average of squared updates
};

inline AdadeltaState make_adadelta_state(const ModelConfig& config) {
  return {make_tensors(config), make_tensors(config)};
}

// E[g²] ← ρE[g²] + (1−ρ)g²;  Δ = −(RMS[Δ]/RMS[g]) g;  E[Δ²] likewise;
// weight decay joins g before any accumulation.
inline void adadelta_step(AdadeltaState& state, ModelTensors& theta,
                          const Gradients& grads, double rho, double eps,
                          double weight_decay) {
  auto update = [&](auto& th, const auto& gr, auto& eg, auto& ed) {
    auto g = (gr.array() + weight_decay * th.array()).eval();
    eg.array() = rho * eg.array() + (1.0 - rho) * g.square();
    auto delta = (-((ed.array() + eps).sqrt() / (eg.array() + eps).sqrt()) * g).eval();
    ed.array() = rho * ed.array() + (1.0 - rho) * delta.square();
    th.array() += delta;
  };
  update(theta.E_w, grads.E_w, state.eg.E_w, state.ed.E_w);
  update(theta.E_a, grads.E_a, state.eg.E_a, state.ed.E_a);
  update(theta.W_f, grads.W_f, state.eg.W_f, state.ed.W_f);
  update(theta.U_f, grads.U_f, state.eg.U_f, state.ed.U_f);
  update(theta.A_f, grads.A_f, state.eg.A_f, state.ed.A_f);
  update(theta.b_f, grads.b_f, state.eg.b_f, state.ed.b_f);
  update(theta.W_i, grads.W_i, state.eg.W_i, state.ed.W_i);
  update(theta.U_i, grads.U_i, state.eg.U_i, state.ed.U_i);
  update(theta.A_i, grads.A_i, state.eg.A_i, state.ed.A_i);
  update(theta.b_i, grads.b_i, state.eg.b_i, state.ed.b_i);
  update(theta.W_o, grads.W_o, state.eg.W_o, state.ed.W_o);
  update(theta.U_o, grads.U_o, state.eg.U_o, state.ed.U_o);
  update(theta.A_o, grads.A_o, state.eg.A_o, state.ed.A_o);
  update(theta.b_o, grads.b_o, state.eg.b_o, state.ed.b_o);
  update(theta.W_c, grads.W_c, state.eg.W_c, state.ed.W_c);
  update(theta.U_c, grads.U_c, state.eg.U_c, state.ed.U_c);
  update(theta.A_c, grads.A_c, state.eg.A_c, state.ed.A_c);
  update(theta.b_c, grads.b_c, state.eg.b_c, state.ed.b_c);
  update(theta.W_p, grads.W_p, state.eg.W_p, state.ed.W_p);
  update(theta.b_p, grads.b_p, state.eg.b_p, state.ed.b_p);
  update(theta.U_p, grads.U_p, state.eg.U_p, state.ed.U_p);
  update(theta.d, grads.d, state.eg.d, state.ed.d);
}

// ---------------------------------------------------------------------------
// Training loop with early stopping on validation NLL.

struct TrainConfig {
  int minibatch = 128;
  long patience = 2000;  // updates without improvement tolerated
  long max_updates = 200000;
  double weight_decay = 0.0;
  double rho = 0.95;
  double eps = 1e-6;
  double clip_norm = 5.0;           // global-norm gradient clip
  double improve_threshold = 1e-5;  // strict decrease demanded of "better"
  long eval_every = 0;              // 0 → ceil(n_train / minibatch)
  std::uint64_t seed = 0;

  void validate() const {
    if (minibatch < 1) throw UsageError("minibatch must be >= 1");
    if (patience < 1) throw UsageError("patience must be >= 1");
    if (max_updates < 1) throw UsageError("max_updates must be >= 1");
    if (weight_decay < 0) throw UsageError("weight_decay must be >= 0");
  }
};

struct TrainLogEntry {
  long update = 0;
  double train_nll = 0.0;
  std::optional<double> valid_nll;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  long best_update = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  long total_updates = 0;
  std::string stop_reason;
};

struct TrainResult {
  ModelParams params;
  TrainLog log;
};

using ValidFn = std::function<double(const ModelParams&)>;

// Minibatch Adadelta with per-window validation; returns the best-validation
// parameters. `valid_override` substitutes the validation measurement (the
// early-stopping contract is tested against a constant stream through it).
// On divergence the partial log is left in *partial_log when provided.
inline TrainResult train_model(ModelParams params, const std::vector<Example>& train,
                               const std::vector<Example>& valid,
                               const TrainConfig& config,
                               ValidFn valid_override = nullptr,
                               TrainLog* partial_log = nullptr) {
  config.validate();
  if (train.empty()) throw DataError("train_model: no training examples");
  const bool can_eval = valid_override != nullptr || !valid.empty();

  const long window = config.eval_every > 0
                          ? config.eval_every
                          : static_cast<long>((train.size() + config.minibatch - 1) /
                                              static_cast<std::size_t>(config.minibatch));

  TrainLog log;
  ModelParams best = params;
  AdadeltaState opt = make_adadelta_state(params.config);
  Rng order_rng(derive_seed(config.seed, "order"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // forces a shuffle on first use

  auto flush_partial = [&](long updates, const char* reason) {
    log.total_updates = updates;
    log.stop_reason = reason;
    if (partial_log) *partial_log = log;
  };

  long u = 0;
  bool stopped = false;
  while (!stopped && u < config.max_updates) {
    // Assemble the next minibatch, reshuffling at epoch boundaries.
    std::vector<Example> batch;
    batch.reserve(static_cast<std::size_t>(config.minibatch));
    for (int b = 0; b < config.minibatch; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
        if (b > 0) break;  // partial trailing batch closes the epoch
      }
      batch.push_back(train[order[cursor++]]);
    }
    ++u;

    std::vector<DropoutMasks> masks;
    const std::vector<DropoutMasks>* masks_ptr = nullptr;
    if (params.config.dropout) {
      for (const auto& ex : batch)
        masks.push_back(make_dropout_masks(params.config,
                                           static_cast<int>(ex.ids.size()) - 1,
                                           dropout_rng));
      masks_ptr = &masks;
    }

    BatchGradients bg;
    try {
      bg = compute_gradients(params, batch, masks_ptr);
    } catch (const DivergenceError&) {
      flush_partial(u, "divergence");
      throw;
    }
    if (!std::isfinite(bg.mean_nll)) {
      flush_partial(u, "divergence");
      throw DivergenceError("non-finite training loss at update " + std::to_string(u));
    }
    log.entries.push_back({u, bg.mean_nll, std::nullopt});

    if (config.clip_norm > 0) {
      double sq = 0.0;
      for_each_tensor(bg.g, [&](const char*, const auto& t) { sq += t.squaredNorm(); });
      double norm = std::sqrt(sq);
      if (norm > config.clip_norm) {
        double scale = config.clip_norm / norm;
        for_each_tensor(bg.g, [&](const char*, auto& t) { t *= scale; });
      }
    }
    adadelta_step(opt, params.t, bg.g, config.rho, config.eps, config.weight_decay);

    const bool final_update = u == config.max_updates;
    if (can_eval && (u % window == 0 || final_update)) {
      double v = valid_override ? valid_override(params) : mean_nll(params, valid);
      log.entries.push_back({u, bg.mean_nll, v});
      if (v < log.best_valid - config.improve_threshold) {
        log.best_valid = v;
        log.best_update = u;
        best = params;
      } else if (u - log.best_update >= config.patience) {
        log.stop_reason = "patience";
        stopped = true;
      }
    }
  }
  if (log.stop_reason.empty()) log.stop_reason = "max_updates";
  log.total_updates = u;
  if (partial_log) *partial_log = log;

  TrainResult result;
  result.params = std::isfinite(log.best_valid) ? std::move(best) : std::move(params);
  result.log = std::move(log);
  return result;
}

// ---------------------------------------------------------------------------
// Random hyper-parameter search.

struct SearchSpace {
  int dim_lo = 128, dim_hi = 1024;  // word-embed, atom-embed, hidden
  double weight_decay_lo = 1e-6, weight_decay_hi = 1e-2;
  bool try_dropout = true;

  void validate() const {
    if (dim_lo < 1 || dim_lo > dim_hi) throw UsageError("bad dimension range");
    if (weight_decay_lo <= 0 || weight_decay_lo > weight_decay_hi)
      throw UsageError("bad weight-decay range");
  }
};

struct SearchTrial {
  ModelConfig config;
  TrainConfig train;
  TrainResult result;
};

struct SearchOutcome {
  std::vector<SearchTrial> trials;
  std::size_t best_index = 0;
};

inline SearchOutcome random_search(const SearchSpace& space, int n_trials,
                                   const ModelConfig& base_model,
                                   const TrainConfig& base_train,
                                   const std::vector<Example>& train,
                                   const std::vector<Example>& valid,
                                   const Vocabulary& vocab,
                                   const std::vector<Atom>& atoms,
                                   std::uint64_t seed) {
  space.validate();
  if (n_trials < 1) throw UsageError("random_search: n_trials must be >= 1");
  SearchOutcome out;
  for (int i = 0; i < n_trials; ++i) {
    Rng rng(derive_seed(seed, "trial:" + std::to_string(i)));
    SearchTrial trial;
    trial.config = base_model;
    trial.config.word_embed_dim = static_cast<int>(rng.uniform_int(space.dim_lo, space.dim_hi));
    trial.config.atom_embed_dim = static_cast<int>(rng.uniform_int(space.dim_lo, space.dim_hi));
    trial.config.hidden_dim = static_cast<int>(rng.uniform_int(space.dim_lo, space.dim_hi));
    trial.train = base_train;
    trial.train.weight_decay = rng.log_uniform(space.weight_decay_lo, space.weight_decay_hi);
    trial.config.dropout = space.try_dropout && rng.coin();
    trial.train.seed = derive_seed(seed, "trial-train:" + std::to_string(i));

    ModelParams params = init_params(trial.config,
                                     derive_seed(seed, "trial-init:" + std::to_string(i)));
    params.vocab = vocab;
    params.set_atoms(atoms);
    trial.result = train_model(std::move(params), train, valid, trial.train);
    out.trials.push_back(std::move(trial));
  }
  for (std::size_t i = 1; i < out.trials.size(); ++i)
    if (out.trials[i].result.log.best_valid <
        out.trials[out.best_index].result.log.best_valid)
      out.best_index = i;
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string tensor;
  long row = 0, col = 0;
  double analytic = 0.0, numeric = 0.0;
  long coordinates = 0;
};

// Central differences over every coordinate of every tensor against the batch
// loss. `corrupt_largest` flips the sign of the largest analytic coordinate
// first — a sanity probe that the detector actually detects.
inline GradCheckReport gradient_check(const ModelConfig& config, std::uint64_t seed,
                                      double fd_step = 1e-5,
                                      bool corrupt_largest = false) {
  ModelParams params = init_params(config, derive_seed(seed, "init"));
  std::vector<Atom> atoms;
  for (int i = 0; i < config.atom_vocab_size; ++i)
    atoms.push_back(Atom{"atom" + std::to_string(i),
                         kAllCategories[static_cast<std::size_t>(i) % 3]});
  params.set_atoms(atoms);

  // Synthetic batch touching every path: two bags plus the empty bag.
  Rng rng(derive_seed(seed, "data"));
  auto caption = [&](int len) {
    std::vector<int> ids{Vocabulary::kBos};
    for (int i = 0; i < len; ++i)
      ids.push_back(static_cast<int>(rng.uniform_int(0, config.vocab_size - 1)));
    ids.push_back(Vocabulary::kEos);
    return ids;
  };
  auto bag_of = [&](std::vector<int> idx) {
    AtomBag bag;
    for (int i : idx) bag.atoms.push_back(params.atoms[static_cast<std::size_t>(i)]);
    std::sort(bag.atoms.begin(), bag.atoms.end());
    return bag;
  };
  std::vector<Example> batch;
  batch.push_back({caption(4), bag_of({0, 1})});
  if (config.atom_vocab_size > 2) batch.push_back({caption(6), bag_of({2})});
  batch.push_back({caption(3), AtomBag{}});

  Gradients analytic = compute_gradients(params, batch).g;
  if (corrupt_largest) {
    double largest = -1.0;
    double* slot = nullptr;
    for_each_tensor(analytic, [&](const char*, auto& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i)
        if (std::abs(t.data()[i]) > largest) {
          largest = std::abs(t.data()[i]);
          slot = &t.data()[i];
        }
    });
    if (slot) *slot = -*slot;
  }

  auto loss = [&]() {
    double sum = 0.0;
    for (const auto& ex : batch)
      sum += forward_caption(params, ex.ids, embed_bag(ex.bag, params)).nll;
    return sum / static_cast<double>(batch.size());
  };

  GradCheckReport report;
  for_each_tensor_zip(params.t, analytic, [&](const char* name, auto& theta, auto& grad) {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double saved = theta.data()[i];
      theta.data()[i] = saved + fd_step;
      const double up = loss();
      theta.data()[i] = saved - fd_step;
      const double down = loss();
      theta.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * fd_step);
      const double a = grad.data()[i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.tensor = name;
        report.row = theta.rows() > 0 ? static_cast<long>(i % theta.rows()) : 0;
        report.col = theta.rows() > 0 ? static_cast<long>(i / theta.rows()) : 0;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  });
  return report;
}

}  // namespace capora

#endif  // CAPORA_TRAINER_HPP
