// Command-line entry point wiring the library into end-to-end workflows:
// tag, atoms, train, generate, score, sweep-k, sweep-noise, report, toygen,
// gradcheck. Exit codes: 0 ok, 1 usage error, 2 data error, 3 divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "capora/atomizer.hpp"
#include "capora/checkpoint.hpp"
#include "capora/common.hpp"
#include "capora/corpus.hpp"
#include "capora/lm.hpp"
#include "capora/metrics.hpp"
#include "capora/oracle.hpp"
#include "capora/tagger.hpp"
#include "capora/toygen.hpp"
#include "capora/trainer.hpp"

namespace {

using namespace capora;

// CAPORA_SEED (CI override) beats flags, which beat config files.
std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("CAPORA_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    return static_cast<std::uint64_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw UsageError("CAPORA_SEED is not an unsigned integer");
  }
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input for hashing: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return Sha1::git_blob_hex(buf.str());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write output file: " + path);
  out << content;
  if (!out) throw DataError("short write: " + path);
}

// Provenance record dropped next to every file-producing command's output.
struct ManifestBuilder {
  nlohmann::json j;

  ManifestBuilder(const std::string& subcommand, std::uint64_t seed) {
    j["tool"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["inputs"] = nlohmann::json::array();
    j["outputs"] = nlohmann::json::array();
  }
  void input(const std::string& path) {
    j["inputs"].push_back({{"path", path}, {"content_hash", file_hash(path)}});
  }
  // Outputs are hashed as recorded, so call after the file is on disk.
  void output(const std::string& path) {
    j["outputs"].push_back({{"path", path}, {"content_hash", file_hash(path)}});
  }
  void config(nlohmann::json c) { j["config"] = std::move(c); }
  void write(const std::string& primary_output) const {
    write_text_file(primary_output + ".manifest.json", j.dump(2) + "\n");
  }
};

std::vector<CaptionRecord> load_tagged_dataset(const std::string& path) {
  auto records = load_dataset(path);
  tokenize_records(records);
  for (const auto& r : records)
    if (!r.gold_tags)
      throw DataError("record " + r.id + " has no tags; run `capora tag` first");
  return records;
}

// --- toygen ----------------------------------------------------------------

int cmd_toygen(const std::string& spec_path, const std::string& out_path,
               std::optional<std::uint64_t> seed_flag) {
  auto spec = load_toy_spec(spec_path);
  if (seed_flag) spec.seed = *seed_flag;
  if (auto s = env_seed()) spec.seed = *s;
  auto corpus = generate_toy_corpus(spec);
  std::ostringstream body;
  write_toy_jsonl(corpus, body);
  write_text_file(out_path, body.str());

  ManifestBuilder m("toygen", spec.seed);
  m.input(spec_path);
  m.output(out_path);
  m.config({{"n_captions", spec.n_captions},
            {"train_frac", spec.train_frac},
            {"valid_frac", spec.valid_frac},
            {"id_prefix", spec.id_prefix}});
  m.write(out_path);
  std::cerr << "wrote " << corpus.records.size() << " captions to " << out_path
            << "\n";
  return 0;
}

// --- tag -------------------------------------------------------------------

int cmd_tag(const std::string& train_path, const std::string& model_path,
            const std::string& in_path, const std::string& out_path, int epochs,
            std::uint64_t seed, int dict_threshold) {
  if (auto s = env_seed()) seed = *s;
  if (!train_path.empty()) {
    // Training mode: TSV (token<TAB>tag, blank-line sentences) or a JSONL
    // dataset whose records carry tags.
    std::vector<TaggedSentence> sentences;
    if (train_path.size() > 4 &&
        train_path.compare(train_path.size() - 4, 4, ".tsv") == 0) {
      sentences = load_tagged_tsv(train_path);
    } else {
      auto records = load_tagged_dataset(train_path);
      sentences = load_pretagged(records);
    }
    auto model = train_tagger(sentences, epochs, seed, dict_threshold);
    tagger_to_checkpoint(model).save(out_path);

    ManifestBuilder m("tag", seed);
    m.input(train_path);
    m.output(out_path);
    m.config({{"epochs", epochs}, {"dict_threshold", dict_threshold}});
    m.write(out_path);
    std::cerr << "tagger heldout accuracy " << model.heldout_accuracy << "\n";
    return 0;
  }
  // Application mode: tag a dataset, write it back with tags filled in.
  auto model = tagger_from_checkpoint(Checkpoint::load(model_path));
  auto records = load_dataset(in_path);
  tokenize_records(records);
  for (auto& r : records) r.gold_tags = tag_tokens(model, r.tokens);
  write_dataset_jsonl(records, out_path);

  ManifestBuilder m("tag", 0);
  m.input(model_path);
  m.input(in_path);
  m.output(out_path);
  m.write(out_path);
  std::cerr << "tagged " << records.size() << " records\n";
  return 0;
}

// --- atoms -----------------------------------------------------------------

nlohmann::json topk_json(const TopKList& topk) {
  nlohmann::json j;
  j["mode"] = topk.mode;
  j["k"] = topk.k;
  j["truncated"] = topk.truncated;
  auto& atoms = j["atoms"] = nlohmann::json::array();
  for (const auto& a : topk.atoms)
    atoms.push_back({{"lemma", a.lemma}, {"category", category_name(a.category)}});
  return j;
}

int cmd_atoms(const std::string& in_path, const std::string& out_path,
              const std::string& split, int topk_k, const std::string& topk_mode,
              const std::string& topk_path, double noise_r,
              const std::string& noise_path, std::uint64_t seed) {
  if (auto s = env_seed()) seed = *s;
  auto records = load_tagged_dataset(in_path);
  std::vector<AtomSet> sets;
  for (const auto& r : records) {
    if (split != "all" && r.split != parse_split(split)) continue;
    sets.push_back(extract_atoms(r.tokens, *r.gold_tags));
  }
  if (sets.empty()) throw DataError("no records in split " + split);
  auto table = build_frequency_table(sets);

  std::ostringstream tsv;
  tsv << "rank\tlemma\tcategory\tcount\n";
  int rank = 0;
  for (const auto& a : table.merged)
    tsv << ++rank << '\t' << a.lemma << '\t' << category_name(a.category) << '\t'
        << table.count(a) << '\n';
  write_text_file(out_path, tsv.str());

  ManifestBuilder m("atoms", seed);
  m.input(in_path);
  m.output(out_path);
  m.config({{"split", split}});

  if (!topk_path.empty() || !noise_path.empty()) {
    auto topk = topk_for(table, topk_mode, topk_k);
    if (!topk_path.empty()) {
      write_text_file(topk_path, topk_json(topk).dump(2) + "\n");
      m.output(topk_path);
    }
    if (!noise_path.empty()) {
      auto spec = make_noise_spec(table, topk, noise_r, seed);
      nlohmann::json j;
      j["r"] = spec.r;
      j["seed"] = spec.seed;
      j["topk"] = topk_json(topk);
      auto& pools = j["pool"] = nlohmann::json::object();
      for (AtomCategory c : kAllCategories) {
        auto& arr = pools[category_name(c)] = nlohmann::json::array();
        for (const auto& a : spec.pool_for(c)) arr.push_back(a.lemma);
      }
      write_text_file(noise_path, j.dump(2) + "\n");
      m.output(noise_path);
    }
  }
  m.write(out_path);
  std::cerr << "atom table: " << table.merged.size() << " atoms\n";
  return 0;
}

// --- train / sweeps ----------------------------------------------------------

int cmd_train(const std::string& in_path, const std::string& config_path,
              const std::string& out_path, const std::string& mode, int k,
              double r, std::optional<std::uint64_t> seed_flag,
              const std::string& log_path) {
  SweepConfig config =
      config_path.empty() ? SweepConfig{} : load_sweep_config(config_path);
  if (seed_flag) config.master_seed = *seed_flag;
  if (auto s = env_seed()) config.master_seed = *s;

  auto data = prepare_data(load_tagged_dataset(in_path), config.vocab_cap);
  ModelParams params;
  auto outcome = run_cell(data, config, {mode, k, r}, &params);
  if (outcome.failed) throw DivergenceError(outcome.error);
  model_to_checkpoint(params).save(out_path);

  if (!log_path.empty()) {
    std::ostringstream log;
    write_train_log_csv(outcome.log, log);
    write_text_file(log_path, log.str());
  }
  ManifestBuilder m("train", config.master_seed);
  m.input(in_path);
  if (!config_path.empty()) m.input(config_path);
  m.output(out_path);
  if (!log_path.empty()) m.output(log_path);
  auto cj = sweep_config_json(config);
  cj["cell"] = {{"mode", mode}, {"k", k}, {"r", r}, {"id", outcome.cell_id}};
  m.config(std::move(cj));
  m.write(out_path);
  std::cerr << outcome.cell_id << ": best valid nll " << outcome.log.best_valid
            << " after " << outcome.log.total_updates << " updates ("
            << outcome.log.stop_reason << ")\n"
            << "test bleu4 " << outcome.scores.bleu[3] << " cider "
            << outcome.scores.cider << " m-lite " << outcome.scores.meteor_lite
            << "\n";
  return 0;
}

int run_sweep_command(const std::string& name, const std::string& in_path,
                      const std::string& config_path, const std::string& out_dir,
                      std::optional<std::uint64_t> seed_flag,
                      std::optional<int> jobs_flag) {
  SweepConfig config = load_sweep_config(config_path);
  if (seed_flag) config.master_seed = *seed_flag;
  if (auto s = env_seed()) config.master_seed = *s;
  if (jobs_flag) config.jobs = *jobs_flag;
  config.validate();

  auto data = prepare_data(load_tagged_dataset(in_path), config.vocab_cap);
  auto result = name == "sweep-k" ? sweep_k(data, config, &std::cerr)
                                  : sweep_noise(data, config, &std::cerr);

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "logs");

  std::ostringstream csv;
  write_points_csv(result.points, csv);
  const std::string points_path = (fs::path(out_dir) / "points.csv").string();
  write_text_file(points_path, csv.str());

  auto manifest = sweep_manifest_json(name, config, in_path, file_hash(in_path),
                                      result);
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& cell = result.cells[i];
    if (cell.failed) continue;
    std::string log_name = "logs/" + cell.mode + "-k" + std::to_string(cell.k) +
                           "-r" + format_double(cell.r) + ".csv";
    std::ostringstream log;
    write_train_log_csv(cell.log, log);
    write_text_file((fs::path(out_dir) / log_name).string(), log.str());
    manifest["cells"][i]["log"] = log_name;
  }
  write_text_file((fs::path(out_dir) / "manifest.json").string(),
                  manifest.dump(2) + "\n");

  int failed = 0;
  for (const auto& c : result.cells) failed += c.failed ? 1 : 0;
  std::cerr << name << ": " << result.cells.size() - failed << "/"
            << result.cells.size() << " cells ok, points at " << points_path
            << "\n";
  return 0;
}

// --- generate ----------------------------------------------------------------

int cmd_generate(const std::string& model_path, const std::string& in_path,
                 const std::string& out_path, const std::string& split,
                 int beam_width, int max_len) {
  auto params = model_from_checkpoint(Checkpoint::load(model_path));
  auto records = load_tagged_dataset(in_path);
  DecodeConfig decode{beam_width, max_len};

  TopKList filter;
  filter.atoms = params.bag_filter;
  filter.mode = "model";
  filter.k = static_cast<int>(params.bag_filter.size());

  std::ostringstream out;
  long n = 0;
  for (const auto& r : records) {
    if (split != "all" && r.split != parse_split(split)) continue;
    auto bag = caption_bag(extract_atoms(r.tokens, *r.gold_tags), filter);
    auto caption = generate_caption(params, bag, decode);
    nlohmann::json j;
    j["id"] = r.id;
    j["caption"] = join(caption, " ");
    out << j.dump() << "\n";
    ++n;
  }
  if (n == 0) throw DataError("no records in split " + split);
  write_text_file(out_path, out.str());

  ManifestBuilder m("generate", 0);
  m.input(model_path);
  m.input(in_path);
  m.output(out_path);
  m.config({{"split", split}, {"beam_width", beam_width}, {"max_len", max_len}});
  m.write(out_path);
  std::cerr << "decoded " << n << " captions\n";
  return 0;
}

// --- score -------------------------------------------------------------------

// Batch file: {"candidates":[{"id","caption"}], "references":[{"id","captions":[..]}]}
// joined on id. References may also be given as a separate file of the same
// shape (only its "references" key is read).
int cmd_score(const std::string& in_path, const std::string& refs_path,
              const std::string& out_path) {
  auto read_json = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("score file ") + path + ": " + e.what());
    }
    return j;
  };
  nlohmann::json j = read_json(in_path);
  nlohmann::json refs_doc = refs_path.empty() ? j : read_json(refs_path);

  if (!j.contains("candidates") || !j["candidates"].is_array() ||
      j["candidates"].empty())
    throw DataError("score input has no candidates");
  if (!refs_doc.contains("references") || !refs_doc["references"].is_array() ||
      refs_doc["references"].empty())
    throw DataError("score input has no references");

  std::map<std::string, std::vector<std::vector<Token>>> refs;
  try {
    for (const auto& r : refs_doc["references"]) {
      auto& lists = refs[r.at("id").get<std::string>()];
      for (const auto& c : r.at("captions"))
        lists.push_back(tokenize(c.get<std::string>()));
    }
    std::vector<EvalInstance> instances;
    for (const auto& c : j["candidates"]) {
      auto id = c.at("id").get<std::string>();
      auto it = refs.find(id);
      if (it == refs.end() || it->second.empty())
        throw DataError("candidate " + id + " has no references");
      instances.push_back(
          {tokenize(c.at("caption").get<std::string>()), it->second});
    }
    auto report = score_all(instances);
    nlohmann::json out;
    out["n_instances"] = instances.size();
    out["bleu1"] = report.bleu[0];
    out["bleu2"] = report.bleu[1];
    out["bleu3"] = report.bleu[2];
    out["bleu4"] = report.bleu[3];
    out["cider"] = report.cider;
    out["meteor_lite"] = report.meteor_lite;
    out["per_instance"] = {{"cider", report.cider_per_instance},
                           {"meteor_lite", report.meteor_per_instance}};
    std::string text = out.dump(2) + "\n";
    if (out_path.empty()) {
      std::cout << text;
    } else {
      write_text_file(out_path, text);
      ManifestBuilder m("score", 0);
      m.input(in_path);
      if (!refs_path.empty()) m.input(refs_path);
      m.output(out_path);
      m.write(out_path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("score input: ") + e.what());
  }
  return 0;
}

// --- report ------------------------------------------------------------------

int cmd_report(const std::vector<std::string>& points_paths,
               const std::vector<std::string>& query_strings,
               const std::string& default_mode, const std::string& out_path,
               const std::string& equivalence_path) {
  std::vector<CurvePoint> points;
  for (const auto& path : points_paths) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open points file: " + path);
    auto part = read_points_csv(in, path);
    points.insert(points.end(), part.begin(), part.end());
  }

  std::vector<EquivalenceQuery> queries;
  for (const auto& qs : query_strings) {
    auto eq = qs.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == qs.size())
      throw UsageError("bad --query, want [mode:]metric=score: " + qs);
    std::string lhs = qs.substr(0, eq);
    EquivalenceQuery q;
    if (auto colon = lhs.find(':'); colon != std::string::npos) {
      q.mode = lhs.substr(0, colon);
      q.metric = lhs.substr(colon + 1);
    } else {
      q.mode = default_mode;
      q.metric = lhs;
    }
    try {
      q.score = std::stod(qs.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("bad --query score: " + qs);
    }
    queries.push_back(std::move(q));
  }

  std::ostringstream text;
  nlohmann::json equivalence;
  emit_report(points, queries, text, &equivalence);

  if (out_path.empty()) {
    std::cout << text.str();
  } else {
    write_text_file(out_path, text.str());
    ManifestBuilder m("report", 0);
    for (const auto& p : points_paths) m.input(p);
    m.output(out_path);
    m.write(out_path);
  }
  if (!equivalence_path.empty()) {
    nlohmann::json wrapped;
    wrapped["queries"] = std::move(equivalence);
    write_text_file(equivalence_path, wrapped.dump(2) + "\n");
  }
  return 0;
}

// --- gradcheck -----------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, bool corrupt) {
  if (auto s = env_seed()) seed = *s;
  ModelConfig config;
  config.vocab_size = 7;
  config.atom_vocab_size = 3;
  config.word_embed_dim = 5;
  config.atom_embed_dim = 5;
  config.hidden_dim = 4;
  auto report = gradient_check(config, seed, 1e-5, corrupt);
  std::cout << "max relative error " << format_double(report.max_rel_error)
            << " at " << report.tensor << "[" << report.row << ","
            << report.col << "] (analytic " << format_double(report.analytic)
            << ", numeric " << format_double(report.numeric) << ")\n";
  return report.max_rel_error <= 1e-4 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional caption-oracle laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // toygen
  auto* toygen = app.add_subcommand("toygen", "Generate a synthetic caption corpus");
  std::string tg_spec, tg_out;
  std::optional<std::uint64_t> tg_seed;
  toygen->add_option("--spec", tg_spec, "corpus spec JSON")->required();
  toygen->add_option("--out", tg_out, "output JSONL path")->required();
  toygen->add_option("--seed", tg_seed, "override spec seed");

  // tag
  auto* tag = app.add_subcommand("tag", "Train or apply the part-of-speech tagger");
  std::string tag_train, tag_model, tag_in, tag_out;
  int tag_epochs = 5, tag_dict = 5;
  std::uint64_t tag_seed = 1;
  tag->add_option("--train", tag_train, "tagged training corpus (.tsv or JSONL)");
  tag->add_option("--model", tag_model, "tagger checkpoint to apply");
  tag->add_option("--in", tag_in, "dataset to tag (apply mode)");
  tag->add_option("--out", tag_out, "output path")->required();
  tag->add_option("--epochs", tag_epochs, "training epochs");
  tag->add_option("--seed", tag_seed, "shuffle seed");
  tag->add_option("--dict-threshold", tag_dict, "unambiguous-word dictionary count");

  // atoms
  auto* atoms = app.add_subcommand("atoms", "Extract atoms and frequency table");
  std::string at_in, at_out, at_split = "train", at_mode = "global";
  std::string at_topk_path, at_noise_path;
  int at_k = 0;
  double at_r = 0.0;
  std::uint64_t at_seed = 1;
  atoms->add_option("--in", at_in, "tagged dataset")->required();
  atoms->add_option("--out", at_out, "frequency table TSV")->required();
  atoms->add_option("--split", at_split, "train|valid|test|all (default train)");
  atoms->add_option("--topk", at_k, "top-k size for --topk-json/--noise-json");
  atoms->add_option("--mode", at_mode, "entity|action|attribute|combined|global");
  atoms->add_option("--topk-json", at_topk_path, "write top-k list JSON here");
  atoms->add_option("--noise-json", at_noise_path, "write noise spec JSON here");
  atoms->add_option("--noise-r", at_r, "noise rate for --noise-json");
  atoms->add_option("--seed", at_seed, "noise spec seed");

  // train
  auto* train = app.add_subcommand("train", "Train one conditioned model");
  std::string tr_in, tr_config, tr_out, tr_mode = "global", tr_log;
  int tr_k = 0;
  double tr_r = 0.0;
  std::optional<std::uint64_t> tr_seed;
  train->add_option("--in", tr_in, "tagged dataset")->required();
  train->add_option("--config", tr_config, "sweep config JSON (model/train blocks)");
  train->add_option("--out", tr_out, "model checkpoint path")->required();
  train->add_option("--mode", tr_mode, "top-k mode");
  train->add_option("--k", tr_k, "top-k size")->required();
  train->add_option("--r", tr_r, "bag noise rate");
  train->add_option("--seed", tr_seed, "master seed override");
  train->add_option("--log", tr_log, "write training log CSV here");

  // generate
  auto* gen = app.add_subcommand("generate", "Decode captions from a model");
  std::string ge_model, ge_in, ge_out, ge_split = "test";
  int ge_beam = 5, ge_maxlen = 30;
  gen->add_option("--model", ge_model, "model checkpoint")->required();
  gen->add_option("--in", ge_in, "tagged dataset")->required();
  gen->add_option("--out", ge_out, "predictions JSONL")->required();
  gen->add_option("--split", ge_split, "train|valid|test|all (default test)");
  gen->add_option("--beam", ge_beam, "beam width");
  gen->add_option("--max-len", ge_maxlen, "maximum caption length");

  // score
  auto* score = app.add_subcommand("score", "Score candidate captions");
  std::string sc_in, sc_refs, sc_out;
  score->add_option("--in", sc_in, "batch JSON with candidates (and references)")
      ->required();
  score->add_option("--references", sc_refs, "separate references JSON");
  score->add_option("--out", sc_out, "score report JSON (default stdout)");

  // sweep-k / sweep-noise
  std::string swk_in, swk_config, swk_out;
  std::optional<std::uint64_t> swk_seed;
  std::optional<int> swk_jobs;
  auto* sweepk = app.add_subcommand("sweep-k", "Score vs bag size k");
  sweepk->add_option("--in", swk_in, "tagged dataset")->required();
  sweepk->add_option("--config", swk_config, "sweep config JSON")->required();
  sweepk->add_option("--out", swk_out, "output directory")->required();
  sweepk->add_option("--seed", swk_seed, "master seed override");
  sweepk->add_option("--jobs", swk_jobs, "parallel cells");

  std::string swn_in, swn_config, swn_out;
  std::optional<std::uint64_t> swn_seed;
  std::optional<int> swn_jobs;
  auto* sweepn = app.add_subcommand("sweep-noise", "Score vs bag noise rate r");
  sweepn->add_option("--in", swn_in, "tagged dataset")->required();
  sweepn->add_option("--config", swn_config, "sweep config JSON")->required();
  sweepn->add_option("--out", swn_out, "output directory")->required();
  sweepn->add_option("--seed", swn_seed, "master seed override");
  sweepn->add_option("--jobs", swn_jobs, "parallel cells");

  // report
  auto* report = app.add_subcommand("report", "Render curves and equivalence lookups");
  std::vector<std::string> rp_points, rp_queries;
  std::string rp_mode = "global", rp_out, rp_equiv;
  report->add_option("--points", rp_points, "points.csv files")->required();
  report->add_option("--query", rp_queries, "[mode:]metric=score lookups");
  report->add_option("--mode", rp_mode, "default mode for --query");
  report->add_option("--out", rp_out, "report text path (default stdout)");
  report->add_option("--equivalence", rp_equiv, "equivalence JSON path");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  std::uint64_t gc_seed = 7;
  bool gc_corrupt = false;
  gradcheck->add_option("--seed", gc_seed, "model/data seed");
  gradcheck->add_flag("--corrupt", gc_corrupt, "flip one gradient sign (detector test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help/--version exit 0, all parse errors 1
  }

  try {
    if (toygen->parsed()) return cmd_toygen(tg_spec, tg_out, tg_seed);
    if (tag->parsed()) {
      if (tag_train.empty() == (tag_model.empty() || tag_in.empty()))
        throw UsageError("tag needs either --train, or --model with --in");
      return cmd_tag(tag_train, tag_model, tag_in, tag_out, tag_epochs, tag_seed,
                     tag_dict);
    }
    if (atoms->parsed())
      return cmd_atoms(at_in, at_out, at_split, at_k, at_mode, at_topk_path, at_r,
                       at_noise_path, at_seed);
    if (train->parsed())
      return cmd_train(tr_in, tr_config, tr_out, tr_mode, tr_k, tr_r, tr_seed,
                       tr_log);
    if (gen->parsed())
      return cmd_generate(ge_model, ge_in, ge_out, ge_split, ge_beam, ge_maxlen);
    if (score->parsed()) return cmd_score(sc_in, sc_refs, sc_out);
    if (sweepk->parsed())
      return run_sweep_command("sweep-k", swk_in, swk_config, swk_out, swk_seed,
                               swk_jobs);
    if (sweepn->parsed())
      return run_sweep_command("sweep-noise", swn_in, swn_config, swn_out,
                               swn_seed, swn_jobs);
    if (report->parsed())
      return cmd_report(rp_points, rp_queries, rp_mode, rp_out, rp_equiv);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_corrupt);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
