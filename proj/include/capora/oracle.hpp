#ifndef CAPORA_ORACLE_HPP
#define CAPORA_ORACLE_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "capora/atomizer.hpp"
#include "capora/common.hpp"
#include "capora/corpus.hpp"
#include "capora/lm.hpp"
#include "capora/metrics.hpp"
#include "capora/reference.hpp"
#include "capora/trainer.hpp"

namespace capora {

// Experiment runner: caption quality as a function of conditioning-bag size k
// (per category, combined, or by overall frequency rank) and of bag noise
// rate r. Every (mode, k, r) cell trains its own model from a seed derived
// only from the master seed and the cell coordinates, so cells are
// independent and the whole sweep is reproducible bit-for-bit.

struct SweepConfig {
  std::vector<int> ks;                      // ascending; used by k sweeps
  std::vector<std::string> modes{"global"}; // entity|action|attribute|combined|global
  std::vector<double> rs;                   // used by noise sweeps
  int noise_k = 0;                          // fixed bag size for noise sweeps
  std::string noise_mode = "global";
  int vocab_cap = 10000;
  // vocab/atom sizes are overwritten per dataset; dims are config knobs
  ModelConfig model{0, 0, 256, 256, 512};
  TrainConfig train;   // seed is overwritten per cell
  DecodeConfig decode;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  int search_trials = 0;  // >0: per-cell random hyperparameter search

  void validate() const {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (ks[i] < 0) throw UsageError("sweep k values must be >= 0");
      if (i > 0 && ks[i] <= ks[i - 1])
        throw UsageError("sweep k values must be strictly ascending");
    }
    for (double r : rs)
      if (r < 0.0 || r > 1.0) throw UsageError("noise rates must lie in [0,1]");
    for (std::size_t i = 1; i < rs.size(); ++i)
      if (rs[i] <= rs[i - 1])
        throw UsageError("noise rates must be strictly ascending");
    auto known = [](const std::string& m) {
      return m == "entity" || m == "action" || m == "attribute" ||
             m == "combined" || m == "global";
    };
    for (const auto& m : modes)
      if (!known(m)) throw UsageError("unknown sweep mode: " + m);
    if (!known(noise_mode)) throw UsageError("unknown sweep mode: " + noise_mode);
    if (noise_k < 0) throw UsageError("noise_k must be >= 0");
    if (vocab_cap < 1) throw UsageError("vocab_cap must be >= 1");
    if (jobs < 1) throw UsageError("jobs must be >= 1");
    if (search_trials < 0) throw UsageError("search_trials must be >= 0");
    train.validate();
  }
};

inline SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sweep config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("sweep config " + path + ": " + e.what());
  }
  SweepConfig c;
  try {
    if (j.contains("seed")) c.master_seed = j["seed"].get<std::uint64_t>();
    if (j.contains("ks")) c.ks = j["ks"].get<std::vector<int>>();
    if (j.contains("modes")) c.modes = j["modes"].get<std::vector<std::string>>();
    if (j.contains("rs")) c.rs = j["rs"].get<std::vector<double>>();
    if (j.contains("noise_k")) c.noise_k = j["noise_k"].get<int>();
    if (j.contains("noise_mode")) c.noise_mode = j["noise_mode"].get<std::string>();
    if (j.contains("vocab_cap")) c.vocab_cap = j["vocab_cap"].get<int>();
    if (j.contains("search_trials")) c.search_trials = j["search_trials"].get<int>();
    if (j.contains("jobs")) c.jobs = j["jobs"].get<int>();
    if (j.contains("model")) {
      const auto& m = j["model"];
      if (m.contains("word_embed_dim")) c.model.word_embed_dim = m["word_embed_dim"].get<int>();
      if (m.contains("atom_embed_dim")) c.model.atom_embed_dim = m["atom_embed_dim"].get<int>();
      if (m.contains("hidden_dim")) c.model.hidden_dim = m["hidden_dim"].get<int>();
      if (m.contains("dropout")) c.model.dropout = m["dropout"].get<bool>();
      if (m.contains("dropout_rate")) c.model.dropout_rate = m["dropout_rate"].get<double>();
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("minibatch")) c.train.minibatch = t["minibatch"].get<int>();
      if (t.contains("patience")) c.train.patience = t["patience"].get<long>();
      if (t.contains("max_updates")) c.train.max_updates = t["max_updates"].get<long>();
      if (t.contains("weight_decay")) c.train.weight_decay = t["weight_decay"].get<double>();
      if (t.contains("rho")) c.train.rho = t["rho"].get<double>();
      if (t.contains("eps")) c.train.eps = t["eps"].get<double>();
      if (t.contains("clip_norm")) c.train.clip_norm = t["clip_norm"].get<double>();
      if (t.contains("improve_threshold"))
        c.train.improve_threshold = t["improve_threshold"].get<double>();
      if (t.contains("eval_every")) c.train.eval_every = t["eval_every"].get<long>();
    }
    if (j.contains("decode")) {
      const auto& d = j["decode"];
      if (d.contains("beam_width")) c.decode.beam_width = d["beam_width"].get<int>();
      if (d.contains("max_len")) c.decode.max_len = d["max_len"].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("sweep config " + path + ": " + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Dataset preparation shared by every cell of a sweep.

struct PreparedData {
  std::vector<CaptionRecord> records;   // tokenized, tagged
  std::vector<AtomSet> atoms;           // per record
  FrequencyTable table;                 // over training captions
  Vocabulary vocab;                     // over training captions
  std::vector<std::size_t> train_idx, valid_idx, test_idx;
  std::vector<Atom> atom_index;         // E_a column order: full merged table
};

// Requires tags on every record (gold or from the tagger). The vocabulary and
// the atom frequency ranking come from the training split only; the atom
// embedding is indexed by the FULL table in every cell, so changing k or r
// never reorders columns and the r=0 noise cell reproduces the clean cell.
inline PreparedData prepare_data(std::vector<CaptionRecord> records, int vocab_cap) {
  PreparedData data;
  data.records = std::move(records);
  data.atoms.reserve(data.records.size());
  std::vector<CaptionRecord> train_records;
  std::vector<AtomSet> train_atoms;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (r.tokens.empty())
      throw DataError("record " + r.id + " is not tokenized");
    if (!r.gold_tags)
      throw DataError("record " + r.id + " has no tags; tag the corpus first");
    data.atoms.push_back(extract_atoms(r.tokens, *r.gold_tags));
    switch (r.split) {
      case Split::Train:
        data.train_idx.push_back(i);
        train_records.push_back(r);
        train_atoms.push_back(data.atoms.back());
        break;
      case Split::Valid: data.valid_idx.push_back(i); break;
      case Split::Test: data.test_idx.push_back(i); break;
    }
  }
  if (data.train_idx.empty()) throw DataError("dataset has no training split");
  if (data.valid_idx.empty()) throw DataError("dataset has no validation split");
  if (data.test_idx.empty()) throw DataError("dataset has no test split");
  data.vocab = build_vocab(train_records, vocab_cap);
  data.table = build_frequency_table(train_atoms);
  data.atom_index = data.table.merged;
  return data;
}

// ---------------------------------------------------------------------------
// Cells.

struct CellSpec {
  std::string mode;
  int k = 0;
  double r = 0.0;
};

// The r coordinate enters the id by bit pattern so distinct doubles can never
// collide and r=0 spells the same id (hence the same derived seeds) whether
// the cell comes from a k sweep or a noise sweep.
inline std::string cell_id_for(const std::string& mode, int k, double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ":%d:%016llx", k,
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(r)));
  return "cell:" + mode + buf;
}

inline TopKList topk_for(const FrequencyTable& table, const std::string& mode, int k) {
  if (mode == "global") return select_top_k_global(table, k);
  if (mode == "combined") return select_top_k(table, k, std::nullopt);
  return select_top_k(table, k, parse_category(mode));
}

struct CellOutcome {
  std::string cell_id;
  std::string mode;
  int k = 0;
  double r = 0.0;
  bool failed = false;
  std::string error;
  ScoreReport scores;
  TrainLog log;
  double wall_seconds = 0.0;  // informational only; never written to outputs
};

struct CurvePoint {
  std::string mode;
  int k = 0;
  double r = 0.0;
  std::string metric;
  double score = 0.0;
};

inline CellOutcome run_cell(const PreparedData& data, const SweepConfig& config,
                            const CellSpec& cell,
                            ModelParams* keep_params = nullptr) {
  auto t0 = std::chrono::steady_clock::now();
  CellOutcome out;
  out.cell_id = cell_id_for(cell.mode, cell.k, cell.r);
  out.mode = cell.mode;
  out.k = cell.k;
  out.r = cell.r;
  const std::uint64_t cell_seed = derive_seed(config.master_seed, out.cell_id);

  TopKList topk = topk_for(data.table, cell.mode, cell.k);

  // Conditioning bags for every record; corruption (when r > 0) hits train,
  // valid and test alike — the noisy-classifier assumption is global.
  std::vector<AtomBag> bags(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i)
    bags[i] = caption_bag(data.atoms[i], topk);
  if (cell.r > 0.0) {
    NoiseSpec noise = make_noise_spec(data.table, topk, cell.r, 0);
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      NoiseSpec per = noise;
      per.seed = derive_seed(cell_seed, "noise:" + data.records[i].id);
      bags[i] = corrupt_bag(bags[i], per);
    }
  }

  auto make_examples = [&](const std::vector<std::size_t>& idx) {
    std::vector<Example> ex;
    ex.reserve(idx.size());
    for (auto i : idx)
      ex.push_back({data.vocab.encode(data.records[i].tokens), bags[i]});
    return ex;
  };
  const auto train_ex = make_examples(data.train_idx);
  const auto valid_ex = make_examples(data.valid_idx);

  ModelConfig mc = config.model;
  mc.vocab_size = data.vocab.size();
  mc.atom_vocab_size = static_cast<int>(data.atom_index.size());
  TrainConfig tc = config.train;
  tc.seed = derive_seed(cell_seed, "train");

  try {
    TrainResult result;
    if (config.search_trials > 0) {
      SearchSpace space;
      auto search = random_search(space, config.search_trials, mc, tc, train_ex,
                                  valid_ex, data.vocab, data.atom_index,
                                  derive_seed(cell_seed, "search"));
      result = std::move(search.trials[search.best_index].result);
    } else {
      ModelParams params = init_params(mc, derive_seed(cell_seed, "init"));
      params.vocab = data.vocab;
      params.set_atoms(data.atom_index);
      result = train_model(std::move(params), train_ex, valid_ex, tc);
    }
    result.params.bag_filter = topk.atoms;
    out.log = result.log;

    std::vector<EvalInstance> instances;
    instances.reserve(data.test_idx.size());
    for (auto i : data.test_idx) {
      EvalInstance inst;
      inst.candidate = generate_caption(result.params, bags[i], config.decode);
      inst.references.push_back(data.records[i].tokens);
      instances.push_back(std::move(inst));
    }
    out.scores = score_all(instances);
    if (keep_params) *keep_params = std::move(result.params);
  } catch (const DivergenceError& e) {
    out.failed = true;
    out.error = e.what();
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Sweep drivers. Cells run in any order (optionally on several threads);
// results land in a slot per cell and are emitted sorted, so the output is
// independent of scheduling.

struct SweepResult {
  std::vector<CellOutcome> cells;   // sorted by (mode, k, r)
  std::vector<CurvePoint> points;   // successful cells x metrics
};

inline const std::array<const char*, 6>& metric_names() {
  static const std::array<const char*, 6> names = {
      "bleu1", "bleu2", "bleu3", "bleu4", "cider", "meteor_lite"};
  return names;
}

inline double metric_value(const ScoreReport& s, const std::string& metric) {
  if (metric == "bleu1") return s.bleu[0];
  if (metric == "bleu2") return s.bleu[1];
  if (metric == "bleu3") return s.bleu[2];
  if (metric == "bleu4") return s.bleu[3];
  if (metric == "cider") return s.cider;
  if (metric == "meteor_lite") return s.meteor_lite;
  throw UsageError("unknown metric: " + metric);
}

inline SweepResult run_sweep(const PreparedData& data, const SweepConfig& config,
                             std::vector<CellSpec> cells,
                             std::ostream* progress = nullptr) {
  config.validate();
  if (cells.empty()) throw UsageError("sweep has no cells");
  std::sort(cells.begin(), cells.end(), [](const CellSpec& a, const CellSpec& b) {
    return std::tie(a.mode, a.k, a.r) < std::tie(b.mode, b.k, b.r);
  });

  SweepResult result;
  result.cells.resize(cells.size());
  const int n_threads =
      std::max(1, std::min<int>(config.jobs, static_cast<int>(cells.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      result.cells[i] = run_cell(data, config, cells[i]);
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& cell : result.cells) {
    if (progress) {
      *progress << cell.cell_id << (cell.failed ? " FAILED " + cell.error : " done")
                << " (" << cell.log.total_updates << " updates, "
                << cell.wall_seconds << "s)\n";
    }
    if (cell.failed) continue;
    for (const char* m : metric_names())
      result.points.push_back(
          {cell.mode, cell.k, cell.r, m, metric_value(cell.scores, m)});
  }
  return result;
}

inline SweepResult sweep_k(const PreparedData& data, const SweepConfig& config,
                           std::ostream* progress = nullptr) {
  if (config.ks.empty()) throw UsageError("sweep-k needs a nonempty ks list");
  std::vector<CellSpec> cells;
  for (const auto& mode : config.modes)
    for (int k : config.ks) cells.push_back({mode, k, 0.0});
  return run_sweep(data, config, std::move(cells), progress);
}

inline SweepResult sweep_noise(const PreparedData& data, const SweepConfig& config,
                               std::ostream* progress = nullptr) {
  if (config.rs.empty()) throw UsageError("sweep-noise needs a nonempty rs list");
  std::vector<CellSpec> cells;
  for (double r : config.rs) cells.push_back({config.noise_mode, config.noise_k, r});
  return run_sweep(data, config, std::move(cells), progress);
}

// ---------------------------------------------------------------------------
// Emission. points.csv carries only experiment coordinates and scores (no
// timings, no paths) so a rerun with the same master seed is byte-identical.

inline void write_points_csv(const std::vector<CurvePoint>& points,
                             std::ostream& out) {
  out << "mode,k,r,metric,score\n";
  for (const auto& p : points)
    out << p.mode << ',' << p.k << ',' << format_double(p.r) << ',' << p.metric
        << ',' << format_double(p.score) << '\n';
}

inline std::vector<CurvePoint> read_points_csv(std::istream& in,
                                               const std::string& name) {
  std::vector<CurvePoint> points;
  std::string line;
  if (!std::getline(in, line) || line != "mode,k,r,metric,score")
    throw DataError(name + ": missing points header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos = 0; pos <= line.size(); ++pos) {
      if (pos == line.size() || line[pos] == ',') {
        f.push_back(line.substr(start, pos - start));
        start = pos + 1;
      }
    }
    if (f.size() != 5)
      throw DataError(name + ":" + std::to_string(lineno) + ": expected 5 fields");
    try {
      points.push_back({f[0], std::stoi(f[1]), std::stod(f[2]), f[3], std::stod(f[4])});
    } catch (const std::exception&) {
      throw DataError(name + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return points;
}

inline void write_train_log_csv(const TrainLog& log, std::ostream& out) {
  out << "update,train_nll,valid_nll\n";
  for (const auto& e : log.entries) {
    out << e.update << ',' << format_double(e.train_nll) << ',';
    if (e.valid_nll) out << format_double(*e.valid_nll);
    out << '\n';
  }
}

inline nlohmann::json sweep_config_json(const SweepConfig& c) {
  nlohmann::json j;
  j["seed"] = c.master_seed;
  j["ks"] = c.ks;
  j["modes"] = c.modes;
  j["rs"] = c.rs;
  j["noise_k"] = c.noise_k;
  j["noise_mode"] = c.noise_mode;
  j["vocab_cap"] = c.vocab_cap;
  j["search_trials"] = c.search_trials;
  j["model"] = {{"word_embed_dim", c.model.word_embed_dim},
                {"atom_embed_dim", c.model.atom_embed_dim},
                {"hidden_dim", c.model.hidden_dim},
                {"dropout", c.model.dropout},
                {"dropout_rate", c.model.dropout_rate}};
  j["train"] = {{"minibatch", c.train.minibatch},
                {"patience", c.train.patience},
                {"max_updates", c.train.max_updates},
                {"weight_decay", c.train.weight_decay},
                {"rho", c.train.rho},
                {"eps", c.train.eps},
                {"clip_norm", c.train.clip_norm},
                {"improve_threshold", c.train.improve_threshold},
                {"eval_every", c.train.eval_every}};
  j["decode"] = {{"beam_width", c.decode.beam_width},
                 {"max_len", c.decode.max_len}};
  return j;
}

// Everything identifying the sweep, nothing about how long it took.
inline nlohmann::json sweep_manifest_json(const std::string& subcommand,
                                          const SweepConfig& config,
                                          const std::string& dataset_path,
                                          const std::string& dataset_hash,
                                          const SweepResult& result) {
  nlohmann::json j;
  j["tool"] = kVersion;
  j["subcommand"] = subcommand;
  j["dataset"] = {{"path", dataset_path}, {"content_hash", dataset_hash}};
  j["config"] = sweep_config_json(config);
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const auto& c : result.cells) {
    nlohmann::json jc;
    jc["id"] = c.cell_id;
    jc["mode"] = c.mode;
    jc["k"] = c.k;
    jc["r"] = c.r;
    jc["failed"] = c.failed;
    if (c.failed) {
      jc["error"] = c.error;
    } else {
      jc["best_valid_nll"] = c.log.best_valid;
      jc["best_update"] = c.log.best_update;
      jc["total_updates"] = c.log.total_updates;
      jc["stop_reason"] = c.log.stop_reason;
    }
    cells.push_back(std::move(jc));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Equivalence lookup: the smallest k whose curve value reaches a queried
// score, reading between measured ks by straight lines. A query above the
// curve maximum has no equivalent ("beyond oracle range").

struct EquivalenceAnswer {
  bool beyond = false;
  double k = 0.0;
};

inline EquivalenceAnswer equivalent_k(
    const std::vector<std::pair<double, double>>& curve, double query) {
  if (curve.empty()) throw UsageError("equivalence lookup needs a nonempty curve");
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].first <= curve[i - 1].first)
      throw UsageError("equivalence curve ks must be strictly ascending");
  if (curve.front().second >= query) return {false, curve.front().first};
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto [k0, s0] = curve[i - 1];
    const auto [k1, s1] = curve[i];
    if (s1 >= query)  // first reach; s0 < query here, so s1 > s0
      return {false, k0 + (query - s0) * (k1 - k0) / (s1 - s0)};
  }
  return {true, 0.0};
}

// Pull one (mode, metric) k-curve out of sweep points (r must be 0).
inline std::vector<std::pair<double, double>> curve_from_points(
    const std::vector<CurvePoint>& points, const std::string& mode,
    const std::string& metric) {
  std::map<int, double> by_k;
  for (const auto& p : points)
    if (p.mode == mode && p.metric == metric && p.r == 0.0) by_k[p.k] = p.score;
  std::vector<std::pair<double, double>> curve;
  curve.reserve(by_k.size());
  for (auto [k, s] : by_k) curve.emplace_back(static_cast<double>(k), s);
  return curve;
}

// ---------------------------------------------------------------------------
// Report rendering: published reference constants for context, then the
// locally measured curves, then any requested equivalence lookups.

namespace detail {

inline std::string fmt_ref(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", *v);
  return buf;
}

inline std::string fmt_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace detail

struct EquivalenceQuery {
  std::string mode;
  std::string metric;
  double score = 0.0;
};

inline void emit_report(const std::vector<CurvePoint>& points,
                        const std::vector<EquivalenceQuery>& queries,
                        std::ostream& out, nlohmann::json* equivalence_json) {
  if (points.empty()) throw UsageError("report needs at least one curve point");

  out << "Conditional-oracle capacity report\n"
      << "==================================\n\n"
      << "Notes on comparability:\n"
      << "  - bag corruption (r > 0) applies to train, valid and test bags alike,\n"
      << "    modelling one imperfect atom classifier used end to end.\n"
      << "  - CIDEr is the basic tf-idf cosine formulation (no length penalty),\n"
      << "    on the [0,10] scale.\n"
      << "  - METEOR is rendered as M-lite (exact + stem matching only, no synonym\n"
      << "    database); absolute M-lite values are NOT comparable to published\n"
      << "    METEOR numbers, curve shapes are.\n\n";

  out << "Published reference points (displayed constants, not measured here)\n"
      << "-------------------------------------------------------------------\n";
  out << "Atom inventories and share judged visual by human raters:\n";
  char line[160];
  std::snprintf(line, sizeof line, "  %-14s %9s %9s %9s   %s\n", "dataset",
                "entities", "actions", "attribs", "visual% (ent/act/att)");
  out << line;
  for (const auto& ref : benchmark_references()) {
    std::snprintf(line, sizeof line, "  %-14s %9ld %9ld %9ld   %d/%d/%d\n",
                  ref.dataset.c_str(), ref.entity_atoms, ref.action_atoms,
                  ref.attribute_atoms, ref.visual_entities_pct,
                  ref.visual_actions_pct, ref.visual_attributes_pct);
    out << line;
  }
  out << "\nPublished system scores vs conditional-oracle scores, with the\n"
        "equivalent number of oracle atoms the system score buys:\n";
  for (const auto& ref : benchmark_references()) {
    out << "  " << ref.dataset << " (vocab " << ref.vocab_size << "):\n";
    std::snprintf(line, sizeof line, "    %-6s %8s %8s\n", "metric", "system",
                  "oracle");
    out << line;
    auto row = [&](const char* name, const std::string& sys,
                   const std::string& oracle) {
      std::snprintf(line, sizeof line, "    %-6s %8s %8s\n", name,
                    sys.empty() ? "n/a" : sys.c_str(),
                    oracle.empty() ? "n/a" : oracle.c_str());
      out << line;
    };
    row("B-1", ref.system_bleu1, ref.oracle_bleu1);
    row("B-4", ref.system_bleu4, ref.oracle_bleu4);
    row("M", ref.system_meteor, ref.oracle_meteor);
    row("C", ref.system_cider, ref.oracle_cider);
    out << "    equivalent atoms: entities " << ref.equiv_entities << ", actions "
        << ref.equiv_actions << ", attributes " << ref.equiv_attributes
        << ", all " << ref.equiv_all << "\n";
    out << "    oracle B-4 at 10 atoms: " << ref.bleu4_at_10_atoms << "\n";
  }

  out << "\nMeasured curves\n"
      << "---------------\n";
  // Group points by (mode, metric); within a group order by (k, r).
  std::map<std::pair<std::string, std::string>, std::vector<CurvePoint>> groups;
  for (const auto& p : points) groups[{p.mode, p.metric}].push_back(p);
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(), [](const CurvePoint& a, const CurvePoint& b) {
      return std::tie(a.k, a.r) < std::tie(b.k, b.r);
    });
    out << "  mode " << key.first << ", metric " << key.second << ":\n";
    for (const auto& p : group) {
      std::snprintf(line, sizeof line, "    k=%-4d r=%-5g %s\n", p.k, p.r,
                    detail::fmt_score(p.score).c_str());
      out << line;
    }
  }

  if (!queries.empty()) {
    out << "\nEquivalence lookups (smallest k whose measured curve reaches the score)\n"
        << "-----------------------------------------------------------------------\n";
  }
  if (equivalence_json) *equivalence_json = nlohmann::json::array();
  for (const auto& q : queries) {
    auto curve = curve_from_points(points, q.mode, q.metric);
    if (curve.empty())
      throw UsageError("no measured curve for mode " + q.mode + ", metric " +
                       q.metric);
    auto ans = equivalent_k(curve, q.score);
    out << "  " << q.metric << " >= " << detail::fmt_ref(q.score) << " (mode "
        << q.mode << "): ";
    if (ans.beyond) {
      out << "beyond oracle range\n";
    } else {
      std::snprintf(line, sizeof line, "k ~ %g\n", ans.k);
      out << line;
    }
    if (equivalence_json) {
      nlohmann::json je;
      je["mode"] = q.mode;
      je["metric"] = q.metric;
      je["score"] = q.score;
      if (ans.beyond)
        je["beyond_oracle_range"] = true;
      else
        je["equivalent_k"] = ans.k;
      equivalence_json->push_back(std::move(je));
    }
  }
}

}  // namespace capora

#endif  // CAPORA_ORACLE_HPP
